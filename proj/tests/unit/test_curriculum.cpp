#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "augsynth/curriculum.hpp"
#include "augsynth/error.hpp"
#include "test_support.hpp"

using namespace augsynth;
using augsynth::testkit::tiny_dataset;

namespace {

// Real training counts {5, 10, ..., 50} plus some held-out images.
LabeledDataset graded_dataset() {
  std::vector<std::string> names;
  for (int k = 0; k < 10; ++k) names.push_back("c" + std::to_string(k));
  LabeledDataset ds(names);
  for (int k = 0; k < 10; ++k) {
    for (int i = 0; i < 5 * (k + 1); ++i) {
      ImageSample s;
      s.id = "t" + std::to_string(k) + "-" + std::to_string(i);
      s.label = k;
      s.pixels = Image(2, 2, 1, 0.1f * static_cast<float>(k % 10));
      ds.add(s);
    }
    ImageSample v;
    v.id = "v" + std::to_string(k);
    v.label = k;
    v.split = Split::val;
    v.pixels = Image(2, 2, 1);
    ds.add(v);
  }
  return ds;
}

std::set<std::string> ids(const LabeledDataset& ds) {
  std::set<std::string> out;
  for (const auto& s : ds.samples()) out.insert(s.id);
  return out;
}

}  // namespace

TEST(Categorize, ExamplesAndBoundaries) {
  EXPECT_EQ(categorize_class(150), Category::many);
  EXPECT_EQ(categorize_class(50), Category::medium);
  EXPECT_EQ(categorize_class(5), Category::few);
  EXPECT_EQ(categorize_class(19), Category::few);
  EXPECT_EQ(categorize_class(20), Category::medium);
  EXPECT_EQ(categorize_class(99), Category::medium);
  EXPECT_EQ(categorize_class(100), Category::many);
  EXPECT_EQ(categorize_class(0), Category::few);
}

TEST(Categorize, TotalPartitionOverZeroTo200) {
  int few = 0, medium = 0, many = 0;
  for (std::int64_t c = 0; c <= 200; ++c) {
    const auto cat = categorize_class(c);
    few += cat == Category::few;
    medium += cat == Category::medium;
    many += cat == Category::many;
    const Category expected = c < 20 ? Category::few : (c < 100 ? Category::medium : Category::many);
    ASSERT_EQ(cat, expected) << c;
  }
  EXPECT_EQ(few, 20);
  EXPECT_EQ(medium, 80);
  EXPECT_EQ(many, 101);
  EXPECT_EQ(to_string(Category::medium), "medium");
}

TEST(Categorize, CustomThresholdsValidate) {
  CategoryThresholds t{10, 3};
  EXPECT_EQ(categorize_class(2, t), Category::few);
  EXPECT_EQ(categorize_class(3, t), Category::medium);
  EXPECT_EQ(categorize_class(10, t), Category::many);
  EXPECT_THROW((CategoryThresholds{3, 10}.validate()), ConfigError);
}

TEST(PlanBalance, QuotaArithmetic) {
  LabeledDataset ds({"a", "b"});
  for (int i = 0; i < 5; ++i) {
    ImageSample s;
    s.id = "a" + std::to_string(i);
    s.pixels = Image(1, 1, 1);
    ds.add(s);
  }
  ImageSample b;
  b.id = "b0";
  b.label = 1;
  b.pixels = Image(1, 1, 1);
  for (int i = 0; i < 1280; ++i) {
    b.id = "b" + std::to_string(i);
    ds.add(b);
  }
  const auto plan = plan_balance(ds, 1280);
  EXPECT_EQ(plan.quota, (std::vector<std::int64_t>{1275, 0}));
  EXPECT_EQ(plan.total(), 1275);
  EXPECT_EQ(plan.target, 1280);
}

TEST(PlanBalance, FixtureSumAndExactComplement) {
  const auto ds = graded_dataset();  // counts 5..50, val ignored
  const auto plan = plan_balance(ds, 100);
  const auto hist = class_histogram(ds.filter(Split::train));
  std::int64_t sum_counts = 0;
  for (std::size_t k = 0; k < hist.size(); ++k) {
    EXPECT_EQ(hist[k] + plan.quota[k], 100);
    sum_counts += hist[k];
  }
  EXPECT_EQ(plan.total(), 1000 - sum_counts);
  EXPECT_THROW(plan_balance(ds, 49), ParameterError);
}

TEST(LongTail, ExactCountsDeterminismAndNoValTest) {
  const auto ds = graded_dataset();
  LongTailProfile p;
  p.min_count = 5;
  p.max_count = 50;
  for (int k = 0; k < 10; ++k) p.targets.push_back(k == 9 ? 50 : 5);
  Rng a(4), b(4), c(5);
  const auto lt = build_longtail_subset(ds, p, a);
  const auto hist = class_histogram(lt);
  for (int k = 0; k < 10; ++k) EXPECT_EQ(hist[static_cast<std::size_t>(k)], p.targets[static_cast<std::size_t>(k)]);
  for (const auto& s : lt.samples()) EXPECT_EQ(s.split, Split::train);
  EXPECT_EQ(ids(lt).size(), lt.size());
  EXPECT_EQ(lt, build_longtail_subset(ds, p, b));
  EXPECT_NE(ids(lt), ids(build_longtail_subset(ds, p, c)));
}

TEST(LongTail, FullProfileIsIdentity) {
  const auto ds = graded_dataset();
  LongTailProfile p;
  p.max_count = 50;
  for (int k = 0; k < 10; ++k) p.targets.push_back(5 * (k + 1));
  Rng rng(1);
  const auto lt = build_longtail_subset(ds, p, rng);
  EXPECT_EQ(ids(lt), ids(ds.filter(Split::train)));
}

TEST(LongTail, SelectionIsUniform) {
  const auto ds = tiny_dataset(1, 20, 1, 1);
  LongTailProfile p;
  p.targets = {5};
  p.max_count = 20;
  std::map<std::string, int> freq;
  for (std::uint64_t s = 0; s < 4000; ++s) {
    Rng rng(s);
    const auto lt = build_longtail_subset(ds, p, rng);
    for (const auto& x : lt.samples()) ++freq[x.id];
  }
  ASSERT_EQ(freq.size(), 20u);
  for (const auto& [id, n] : freq) EXPECT_NEAR(n / 4000.0, 0.25, 0.03) << id;
}

TEST(LongTail, Errors) {
  const auto ds = graded_dataset();
  LongTailProfile p;
  p.max_count = 100;
  p.targets.assign(10, 5);
  p.targets[0] = 6;  // class 0 has only 5
  Rng rng(1);
  try {
    build_longtail_subset(ds, p, rng);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("c0"), std::string::npos);
  }
  p.targets[0] = 4;  // below min_count
  EXPECT_THROW(p.validate(10), ConfigError);
  p.targets.assign(9, 5);
  EXPECT_THROW(p.validate(10), ConfigError);
}

TEST(FewShot, SizesSeedsAndForcedSelection) {
  const auto ds = tiny_dataset(10, 16, 1, 1);
  FewShotSpec spec;
  spec.shots = 1;
  spec.trials = 4;
  spec.seed = 3;
  const auto trials = make_fewshot_subsets(ds, spec);
  ASSERT_EQ(trials.size(), 4u);
  std::set<std::uint64_t> seeds;
  for (const auto& t : trials) {
    EXPECT_EQ(t.train.size(), 10u);
    EXPECT_EQ(class_histogram(t.train), std::vector<std::int64_t>(10, 1));
    seeds.insert(t.seed);
  }
  EXPECT_EQ(seeds.size(), 4u);

  spec.shots = 16;
  for (const auto& t : make_fewshot_subsets(ds, spec)) EXPECT_EQ(ids(t.train), ids(ds));
  EXPECT_EQ(make_fewshot_subsets(ds, spec)[2].train, make_fewshot_subsets(ds, spec)[2].train);
}

TEST(FewShot, Errors) {
  const auto ds = tiny_dataset(3, 4, 1, 1);
  FewShotSpec spec;
  spec.shots = 8;
  EXPECT_THROW(make_fewshot_subsets(ds, spec), DataError);
  spec.shots = 3;
  EXPECT_THROW(spec.validate(), ParameterError);
  spec.allow_nonstandard_shots = true;
  EXPECT_NO_THROW(spec.validate());
  EXPECT_EQ(make_fewshot_subsets(ds, spec).front().train.size(), 9u);
  spec.trials = 0;
  EXPECT_THROW(spec.validate(), ParameterError);
}

TEST(MixedBatches, DeterministicHalfAndHalf) {
  MixedBatchStream s(1000, 3000, 512, MixMode::deterministic, Rng(1));
  for (int i = 0; i < 20; ++i) {
    const auto b = s.next();
    ASSERT_EQ(b.real.size(), 256u);
    ASSERT_EQ(b.synthetic.size(), 256u);
  }
}

TEST(MixedBatches, RealPassesCoverThePoolWithoutRepeats) {
  MixedBatchStream s(100, 10, 20, MixMode::deterministic, Rng(2));
  std::vector<std::size_t> seen;
  for (int i = 0; i < 10; ++i) {
    const auto b = s.next();
    seen.insert(seen.end(), b.real.begin(), b.real.end());
    for (auto j : b.synthetic) ASSERT_LT(j, 10u);
  }
  std::sort(seen.begin(), seen.end());
  std::vector<std::size_t> expect(100);
  std::iota(expect.begin(), expect.end(), 0);
  EXPECT_EQ(seen, expect);
}

TEST(MixedBatches, StochasticFraction) {
  MixedBatchStream s(50, 50, 100, MixMode::stochastic, Rng(3));
  std::size_t real = 0;
  for (int i = 0; i < 100; ++i) real += s.next().real.size();
  EXPECT_NEAR(real / 1e4, 0.5, 0.02);
}

TEST(MixedBatches, RealOnlyOverrideAndErrors) {
  MixedBatchStream s(10, 0, 8, MixMode::deterministic, Rng(4), 1.0);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(s.next().real.size(), 8u);
  MixedBatchStream st(10, 0, 8, MixMode::stochastic, Rng(4), 1.0);
  EXPECT_EQ(st.next().real.size(), 8u);
  EXPECT_ANY_THROW(MixedBatchStream(0, 10, 8, MixMode::deterministic, Rng(1)));
  EXPECT_ANY_THROW(MixedBatchStream(10, 0, 8, MixMode::deterministic, Rng(1)));
  EXPECT_ANY_THROW(MixedBatchStream(10, 10, 8, MixMode::deterministic, Rng(1), 1.5));
}

TEST(MixedBatches, SameSeedSameBatches) {
  MixedBatchStream a(30, 40, 16, MixMode::stochastic, Rng(9)), b(30, 40, 16, MixMode::stochastic, Rng(9));
  for (int i = 0; i < 10; ++i) {
    const auto x = a.next(), y = b.next();
    ASSERT_EQ(x.real, y.real);
    ASSERT_EQ(x.synthetic, y.synthetic);
  }
}
