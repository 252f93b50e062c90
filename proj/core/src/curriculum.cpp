#include "augsynth/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "augsynth/error.hpp"

namespace augsynth {

void LongTailProfile::validate(int num_classes) const {
  if (static_cast<int>(targets.size()) != num_classes)
    throw ConfigError("long-tail profile has " + std::to_string(targets.size()) + " targets for " +
                      std::to_string(num_classes) + " classes");
  if (min_count < 1 || max_count < min_count) throw ConfigError("long-tail bounds must satisfy 1 <= min <= max");
  for (std::size_t k = 0; k < targets.size(); ++k)
    if (targets[k] < min_count || targets[k] > max_count)
      throw ConfigError("long-tail target for class " + std::to_string(k) + " is " + std::to_string(targets[k]) +
                        ", outside [" + std::to_string(min_count) + ", " + std::to_string(max_count) + "]");
}

std::string_view to_string(Category c) noexcept {
  switch (c) {
    case Category::many: return "many";
    case Category::medium: return "medium";
    case Category::few: return "few";
  }
  return "?";
}

void CategoryThresholds::validate() const {
  if (few_max < 1 || many_min <= few_max) throw ConfigError("category thresholds need 1 <= few_max < many_min");
}

Category categorize_class(std::int64_t count, const CategoryThresholds& t) {
  t.validate();
  if (count < 0) throw ParameterError("class count must be non-negative");
  if (count >= t.many_min) return Category::many;
  if (count >= t.few_max) return Category::medium;
  return Category::few;
}

std::int64_t BalancePlan::total() const noexcept { return std::accumulate(quota.begin(), quota.end(), std::int64_t{0}); }

void FewShotSpec::validate() const {
  if (shots < 1) throw ParameterError("shots must be >= 1");
  if (trials < 1) throw ParameterError("trials must be >= 1");
  if (!allow_nonstandard_shots && std::find(std::begin(kBenchmarkShots), std::end(kBenchmarkShots), shots) ==
                                      std::end(kBenchmarkShots))
    throw ParameterError("shots=" + std::to_string(shots) + " is not one of {1,2,4,8,16}");
}

LabeledDataset build_longtail_subset(const LabeledDataset& ds, const LongTailProfile& profile, Rng& rng) {
  profile.validate(ds.num_classes());
  std::vector<std::size_t> keep;
  for (int k = 0; k < ds.num_classes(); ++k) {
    auto idx = ds.indices_of_class(k, Split::train);
    const auto want = profile.targets[static_cast<std::size_t>(k)];
    if (static_cast<std::int64_t>(idx.size()) < want)
      throw DataError("class " + ds.class_name(k) + " has " + std::to_string(idx.size()) +
                      " training images, long-tail profile asks for " + std::to_string(want));
    // Partial Fisher-Yates: the first `want` positions are a uniform draw.
    for (std::int64_t i = 0; i < want; ++i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(i, static_cast<std::int64_t>(idx.size()) - 1));
      std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
    }
    keep.insert(keep.end(), idx.begin(), idx.begin() + want);
  }
  std::sort(keep.begin(), keep.end());
  LabeledDataset out(ds.class_names());
  for (auto i : keep) out.add(ds[i]);
  return out;
}

BalancePlan plan_balance(const LabeledDataset& ds, std::int64_t target) {
  if (target < 1) throw ParameterError("balance target must be >= 1");
  BalancePlan plan;
  plan.target = target;
  plan.quota.assign(static_cast<std::size_t>(ds.num_classes()), 0);
  for (int k = 0; k < ds.num_classes(); ++k) {
    const auto have = static_cast<std::int64_t>(ds.indices_of_class(k, Split::train).size());
    if (have > target)
      throw ParameterError("class " + ds.class_name(k) + " already has " + std::to_string(have) +
                           " images, above balance target " + std::to_string(target));
    plan.quota[static_cast<std::size_t>(k)] = target - have;
  }
  return plan;
}

std::vector<FewShotTrial> make_fewshot_subsets(const LabeledDataset& ds, const FewShotSpec& spec) {
  spec.validate();
  std::vector<std::vector<std::size_t>> per_class;
  for (int k = 0; k < ds.num_classes(); ++k) {
    per_class.push_back(ds.indices_of_class(k, Split::train));
    if (static_cast<std::int64_t>(per_class.back().size()) < spec.shots)
      throw DataError("class " + ds.class_name(k) + " has " + std::to_string(per_class.back().size()) +
                      " training images, fewer than shots=" + std::to_string(spec.shots));
  }
  std::vector<FewShotTrial> trials;
  for (int t = 0; t < spec.trials; ++t) {
    FewShotTrial trial;
    trial.seed = derive_seed(spec.seed, {tag_of("fewshot"), static_cast<std::uint64_t>(spec.shots),
                                         static_cast<std::uint64_t>(t)});
    Rng rng(trial.seed);
    std::vector<std::size_t> keep;
    for (auto idx : per_class) {
      for (std::int64_t i = 0; i < spec.shots; ++i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(i, static_cast<std::int64_t>(idx.size()) - 1));
        std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
      }
      keep.insert(keep.end(), idx.begin(), idx.begin() + spec.shots);
    }
    std::sort(keep.begin(), keep.end());
    trial.train = LabeledDataset(ds.class_names());
    for (auto i : keep) trial.train.add(ds[i]);
    trials.push_back(std::move(trial));
  }
  return trials;
}

MixedBatchStream::MixedBatchStream(std::size_t real_pool, std::size_t synth_pool, int batch, MixMode mode, Rng rng,
                                   double real_fraction)
    : real_pool_(real_pool), synth_pool_(synth_pool), batch_(batch), mode_(mode), rng_(rng),
      real_fraction_(real_fraction) {
  if (batch_ < 1) throw ParameterError("batch must be >= 1");
  if (!(real_fraction_ >= 0.0 && real_fraction_ <= 1.0)) throw ParameterError("real_fraction must lie in [0,1]");
  if (real_pool_ == 0 && real_fraction_ > 0.0) throw ParameterError("real pool is empty");
  if (synth_pool_ == 0 && real_fraction_ < 1.0) throw ParameterError("synthetic pool is empty");
  real_order_.resize(real_pool_);
  std::iota(real_order_.begin(), real_order_.end(), std::size_t{0});
  real_pos_ = real_pool_;  // forces a shuffle on first use
}

std::size_t MixedBatchStream::next_real() {
  if (real_pos_ >= real_order_.size()) {
    std::shuffle(real_order_.begin(), real_order_.end(), rng_.engine());
    real_pos_ = 0;
  }
  return real_order_[real_pos_++];
}

std::size_t MixedBatchStream::next_synth() {
  return static_cast<std::size_t>(rng_.uniform_int(0, static_cast<std::int64_t>(synth_pool_) - 1));
}

MixedBatch MixedBatchStream::next() {
  MixedBatch b;
  int n_real = 0;
  if (mode_ == MixMode::deterministic) {
    n_real = static_cast<int>(std::lround(batch_ * real_fraction_));
  } else {
    for (int i = 0; i < batch_; ++i) n_real += rng_.bernoulli(real_fraction_) ? 1 : 0;
  }
  for (int i = 0; i < n_real; ++i) b.real.push_back(next_real());
  for (int i = n_real; i < batch_; ++i) b.synthetic.push_back(next_synth());
  return b;
}

}  // namespace augsynth
