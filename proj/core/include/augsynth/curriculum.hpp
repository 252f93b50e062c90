#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "augsynth/datamodel.hpp"
#include "augsynth/rng.hpp"

namespace augsynth {

struct LongTailProfile {
  std::vector<std::int64_t> targets;  // per class
  std::int64_t min_count = 5;
  std::int64_t max_count = 1280;

  void validate(int num_classes) const;
};

enum class Category { many, medium, few };
std::string_view to_string(Category c) noexcept;

/// few: count < few_max; medium: few_max <= count < many_min; many: count >= many_min.
struct CategoryThresholds {
  std::int64_t many_min = 100;
  std::int64_t few_max = 20;

  void validate() const;
};

Category categorize_class(std::int64_t count, const CategoryThresholds& thresholds = {});

struct BalancePlan {
  std::vector<std::int64_t> quota;
  std::int64_t target = 0;

  std::int64_t total() const noexcept;
};

inline constexpr std::int64_t kBenchmarkShots[] = {1, 2, 4, 8, 16};

struct FewShotSpec {
  std::int64_t shots = 1;
  int trials = 4;
  bool allow_nonstandard_shots = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct FewShotTrial {
  std::uint64_t seed = 0;
  LabeledDataset train;
};

/// Keeps exactly targets[k] real training images of class k, drawn uniformly
/// without replacement. Val/test samples are dropped; pass them separately.
LabeledDataset build_longtail_subset(const LabeledDataset& ds, const LongTailProfile& profile, Rng& rng);

/// quota[k] = target - real training count of class k.
BalancePlan plan_balance(const LabeledDataset& ds, std::int64_t target);

std::vector<FewShotTrial> make_fewshot_subsets(const LabeledDataset& ds, const FewShotSpec& spec);

enum class MixMode { deterministic, stochastic };

/// One minibatch: indices into the real and synthetic pools.
struct MixedBatch {
  std::vector<std::size_t> real;
  std::vector<std::size_t> synthetic;

  std::size_t size() const noexcept { return real.size() + synthetic.size(); }
};

/// Endless minibatch source over a real and a synthetic pool.
///
/// deterministic: exactly round(batch * real_fraction) real slots per batch.
/// stochastic: each slot is independently real with probability real_fraction.
/// Real indices cycle through per-pass shuffles; synthetic indices are
/// uniform draws over the synthetic pool.
class MixedBatchStream {
 public:
  MixedBatchStream(std::size_t real_pool, std::size_t synth_pool, int batch, MixMode mode, Rng rng,
                   double real_fraction = 0.5);

  MixedBatch next();

 private:
  std::size_t next_real();
  std::size_t next_synth();

  std::size_t real_pool_, synth_pool_;
  int batch_;
  MixMode mode_;
  Rng rng_;
  double real_fraction_;
  std::vector<std::size_t> real_order_;
  std::size_t real_pos_ = 0;
};

}  // namespace augsynth
