#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "augsynth/error.hpp"
#include "augsynth/generator/encoder.hpp"
#include "augsynth/generator/generator.hpp"
#include "test_support.hpp"

using namespace augsynth;
using namespace augsynth::gen;
using testkit::PoolEncoder;

namespace {

DenoiserConfig small_cfg() {
  DenoiserConfig c;
  c.height = 8;
  c.width = 8;
  c.embed_dim = 16;
  c.time_features = 8;
  c.cond_width = 8;
  c.base_channels = 4;
  c.blocks = 1;
  c.num_classes = 3;
  return c;
}

// Untrained weights are enough for algebra and determinism checks; bump the
// output layer so the conditional and unconditional paths actually differ.
std::shared_ptr<Denoiser> make_denoiser(std::uint64_t seed = 5) {
  auto d = std::make_shared<Denoiser>(small_cfg(), seed);
  Rng rng(seed + 100);
  for (auto* p : d->params())
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += static_cast<float>(0.05 * rng.normal());
  return d;
}

ConditioningBundle bundle_for(int label, std::uint64_t seed) {
  ConditioningBundle b;
  b.image_embedding = PoolEncoder().encode(testkit::random_image(8, 8, 1, seed));
  b.class_label = label;
  b.class_text = "c" + std::to_string(label);
  b.source_ids = {"src-" + std::to_string(seed)};
  return b;
}

NoiseSchedule sched() { return NoiseSchedule::linear(50, 1e-4, 0.05); }

bool same_pixels(const Image& a, const Image& b) { return a == b; }

}  // namespace

TEST(Schedule, InvariantsAndErrors) {
  const auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  ASSERT_EQ(s.steps(), 1000);
  for (int t = 1; t < s.steps(); ++t) EXPECT_LT(s.alpha_bars[t], s.alpha_bars[t - 1]);
  EXPECT_THROW(NoiseSchedule::from_betas({}), ParameterError);
  EXPECT_THROW(NoiseSchedule::from_betas({0.1, 0.05}), ParameterError);
  EXPECT_THROW(NoiseSchedule::from_betas({0.0, 0.1}), ParameterError);
  EXPECT_THROW(NoiseSchedule::from_betas({0.1, 1.0}), ParameterError);
  EXPECT_THROW(NoiseSchedule::linear(0, 1e-4, 0.02), ParameterError);
}

TEST(Schedule, RespacedTimesteps) {
  const auto ts = respaced_timesteps(1000, 30);
  ASSERT_EQ(ts.size(), 30u);
  EXPECT_EQ(ts.front(), 999);
  EXPECT_EQ(ts.back(), 0);
  for (std::size_t i = 1; i < ts.size(); ++i) EXPECT_LT(ts[i], ts[i - 1]);
  EXPECT_EQ(respaced_timesteps(10, 10), (std::vector<int>{9, 8, 7, 6, 5, 4, 3, 2, 1, 0}));
  EXPECT_EQ(respaced_timesteps(10, 1), (std::vector<int>{9}));
  EXPECT_THROW(respaced_timesteps(10, 11), ParameterError);
  EXPECT_THROW(respaced_timesteps(10, 0), ParameterError);
}

TEST(Schedule, ForwardVarianceMatchesClosedForm) {
  const auto s = NoiseSchedule::linear(200, 1e-4, 0.02);
  const int n = 20000;
  const double var0 = 2.25;  // x0 ~ N(0, 1.5^2)
  Rng rng(9);
  for (int t : {0, 20, 100, 199}) {
    nn::Matrix x0(n, 1), eps(n, 1);
    for (int i = 0; i < n; ++i) {
      x0(i, 0) = static_cast<float>(1.5 * rng.normal());
      eps(i, 0) = static_cast<float>(rng.normal());
    }
    const std::vector<int> ts(n, t);
    const nn::Matrix xt = s.diffuse(x0, ts, eps);
    const double mean = xt.cast<double>().mean();
    const double var = (xt.cast<double>().array() - mean).square().sum() / (n - 1);
    const double expect = s.alpha_bars[t] * var0 + (1.0 - s.alpha_bars[t]);
    const double sd = expect * std::sqrt(2.0 / (n - 1));
    EXPECT_NEAR(var, expect, 3 * sd) << "t=" << t;
  }
}

TEST(Cfg, GuidedPredictionEndpointsBitExact) {
  Rng rng(1);
  nn::Matrix u(4, 33), c(4, 33);
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    u.data()[i] = static_cast<float>(rng.normal() * 3);
    c.data()[i] = static_cast<float>(rng.normal() * 3);
  }
  EXPECT_TRUE((guided_prediction(u, c, 1.0).array() == c.array()).all());
  EXPECT_TRUE((guided_prediction(u, c, 0.0).array() == u.array()).all());
  const nn::Matrix g = guided_prediction(u, c, 4.0);
  EXPECT_NEAR(g(1, 2), u(1, 2) + 4.0f * (c(1, 2) - u(1, 2)), 1e-4);
}

TEST(Cfg, InstrumentedSamplerEndpointsBitExact) {
  auto d = make_denoiser();
  const auto b = bundle_for(1, 3);
  for (double s : {0.0, 1.0}) {
    GenerationConfig cfg;
    cfg.cfg_scale = s;
    cfg.steps = 5;
    cfg.batch = 2;
    int calls = 0;
    bool differ = false;
    sample_cfg(*d, sched(), b, cfg, [&](const SamplerStep& st) {
      ++calls;
      const auto& want = s == 1.0 ? st.eps_cond : st.eps_uncond;
      EXPECT_TRUE((st.eps_guided.array() == want.array()).all()) << "s=" << s << " t=" << st.timestep;
      differ |= !(st.eps_cond.array() == st.eps_uncond.array()).all();
    });
    EXPECT_EQ(calls, 5);
    EXPECT_TRUE(differ) << "conditioning has no effect; the check would be vacuous";
  }
}

TEST(Sampler, SweepScalesYieldValidImagesWithProvenance) {
  DeskGenerator gen(make_denoiser(), sched());
  auto b = bundle_for(2, 4);
  b.method = "Embed-Mixup";
  b.method_params = "alpha=1";
  for (double s : {2.0, 4.0, 7.0, 10.0}) {
    GenerationConfig cfg;
    cfg.cfg_scale = s;
    cfg.steps = 10;
    cfg.batch = 3;
    cfg.seed = 42;
    const auto out = gen.generate(b, cfg);
    ASSERT_EQ(out.size(), 3u);
    for (const auto& im : out) {
      EXPECT_TRUE(im.pixels.in_unit_range());
      EXPECT_EQ(im.pixels.height(), 8);
      EXPECT_EQ(im.label, 2);
      EXPECT_EQ(im.provenance.origin, Origin::synthetic);
      EXPECT_EQ(im.provenance.method, "Embed-Mixup");
      EXPECT_EQ(im.provenance.cfg_scale, s);
      EXPECT_EQ(im.provenance.seed, 42u);
      EXPECT_EQ(im.provenance.source_ids, b.source_ids);
      EXPECT_EQ(im.provenance.violation(), "");
    }
    EXPECT_NE(out[0].id, out[1].id);
  }
}

TEST(Sampler, Errors) {
  auto d = make_denoiser();
  GenerationConfig cfg;
  cfg.steps = 51;
  EXPECT_THROW(sample_cfg(*d, sched(), bundle_for(0, 1), cfg), ParameterError);
  cfg.steps = 5;
  cfg.batch = 0;
  EXPECT_THROW(sample_cfg(*d, sched(), bundle_for(0, 1), cfg), ParameterError);
  cfg.batch = 1;
  cfg.cfg_scale = -1;
  EXPECT_THROW(sample_cfg(*d, sched(), bundle_for(0, 1), cfg), ParameterError);
  cfg.cfg_scale = 2;
  auto b = bundle_for(0, 1);
  b.image_embedding.values.resize(5);
  EXPECT_THROW(sample_cfg(*d, sched(), b, cfg), ParameterError);
}

TEST(Sampler, PureFunctionOfSeed) {
  auto d = make_denoiser();
  const auto b = bundle_for(0, 7);
  GenerationConfig cfg;
  cfg.steps = 8;
  cfg.batch = 2;
  cfg.seed = 3;
  const auto a1 = sample_cfg(*d, sched(), b, cfg);
  const auto a2 = sample_cfg(*d, sched(), b, cfg);
  ASSERT_EQ(a1.size(), 2u);
  EXPECT_TRUE(same_pixels(a1[0], a2[0]));
  EXPECT_TRUE(same_pixels(a1[1], a2[1]));
  EXPECT_FALSE(same_pixels(a1[0], a1[1]));
  cfg.seed = 4;
  EXPECT_FALSE(same_pixels(a1[0], sample_cfg(*d, sched(), b, cfg)[0]));
}

// Batching several requests into one reverse process must not change any
// request's output: a campaign's images cannot depend on how it was chunked.
TEST(Sampler, BatchedEqualsSingle) {
  auto d = make_denoiser();
  std::vector<ConditioningBundle> bs{bundle_for(0, 1), bundle_for(1, 2), bundle_for(2, 3)};
  std::vector<GenerationConfig> cs(3);
  for (std::size_t i = 0; i < 3; ++i) {
    cs[i].steps = 6;
    cs[i].batch = static_cast<int>(i) + 1;
    cs[i].seed = 10 + i;
  }
  const auto many = sample_cfg_many(*d, sched(), bs, cs);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto one = sample_cfg(*d, sched(), bs[i], cs[i]);
    ASSERT_EQ(one.size(), many[i].size());
    for (std::size_t j = 0; j < one.size(); ++j) EXPECT_TRUE(same_pixels(one[j], many[i][j])) << i << "/" << j;
  }
  cs[1].steps = 7;
  EXPECT_THROW(sample_cfg_many(*d, sched(), bs, cs), ParameterError);
}

TEST(Generator, IdTracksWeights) {
  DeskGenerator a(make_denoiser(5), sched()), b(make_denoiser(5), sched()), c(make_denoiser(6), sched());
  EXPECT_EQ(a.id(), b.id());
  EXPECT_NE(a.id(), c.id());
}

TEST(Generator, DeskGenerateManyGroupsMixedSettings) {
  DeskGenerator gen(make_denoiser(), sched());
  std::vector<ConditioningBundle> bs{bundle_for(0, 1), bundle_for(1, 2)};
  std::vector<GenerationConfig> cs(2);
  cs[0].steps = 4;
  cs[1].steps = 6;
  cs[1].cfg_scale = 7.0;
  const auto many = gen.generate_many(bs, cs);
  EXPECT_TRUE(many[1][0].pixels == gen.generate(bs[1], cs[1])[0].pixels);
  EXPECT_EQ(*many[1][0].provenance.cfg_scale, 7.0);
}

TEST(Generator, CacheServesRepeatsWithoutInnerCalls) {
  testkit::TempDir dir("gen-cache");
  DeskGenerator desk(make_denoiser(), sched());
  const auto b = bundle_for(1, 9);
  GenerationConfig cfg;
  cfg.steps = 4;
  cfg.batch = 2;
  std::vector<ImageSample> first;
  {
    SyntheticCache cache(dir.path(), {"c0", "c1", "c2"});
    CachedGenerator gen(desk, cache);
    first = gen.generate(b, cfg);
    EXPECT_EQ(gen.inner_calls(), 1u);
    const auto again = gen.generate(b, cfg);
    EXPECT_EQ(gen.inner_calls(), 1u);
    EXPECT_TRUE(again[1].pixels == first[1].pixels);
    EXPECT_EQ(again[1].id, first[1].id);
    cfg.seed = 1;
    gen.generate(b, cfg);
    EXPECT_EQ(gen.inner_calls(), 2u);
    cfg.seed = 0;
  }
  SyntheticCache reopened(dir.path(), {"c0", "c1", "c2"});
  CachedGenerator gen(desk, reopened);
  const auto later = gen.generate(b, cfg);
  EXPECT_EQ(gen.inner_calls(), 0u);
  EXPECT_TRUE(later[0].pixels == first[0].pixels);
  EXPECT_EQ(later[0].provenance.method, first[0].provenance.method);
}

TEST(TrainGenerator, LossFallsNullRateAndDeterminism) {
  const auto ds = testkit::tiny_dataset(3, 10);
  PoolEncoder enc;
  GeneratorTrainConfig tc;
  tc.epochs = 80;
  tc.batch = 16;
  tc.lr = 3e-3;
  tc.ema_decay = 0.9;
  Denoiser d1(small_cfg(), 1), d2(small_cfg(), 1);
  const auto s1 = train_generator(d1, ds, enc, sched(), tc);
  const auto s2 = train_generator(d2, ds, enc, sched(), tc);
  EXPECT_EQ(s1.epoch_loss, s2.epoch_loss);
  EXPECT_EQ(nn::flatten_values(d1.params()), nn::flatten_values(d2.params()));
  ASSERT_EQ(s1.epoch_loss.size(), 80u);
  EXPECT_LT(s1.epoch_loss.back(), s1.epoch_loss.front());
  EXPECT_EQ(s1.examples, 2400u);
  const double rate = static_cast<double>(s1.null_replacements) / static_cast<double>(s1.examples);
  EXPECT_NEAR(rate, 0.1, 0.02);
}

TEST(TrainGenerator, ConditioningDropoutRate) {
  const auto ds = testkit::tiny_dataset(3, 10);
  PoolEncoder enc;
  GeneratorTrainConfig tc;
  tc.epochs = 20;
  tc.batch = 16;
  tc.conditioning_dropout = 0.5;
  Denoiser d(small_cfg(), 1);
  const auto s = train_generator(d, ds, enc, sched(), tc);
  // applied only to non-null examples: expected 0.9 * 0.5
  const double rate = static_cast<double>(s.dropped_conditions) / static_cast<double>(s.examples);
  EXPECT_NEAR(rate, 0.45, 0.05);
  tc.conditioning_dropout = 0.0;
  Denoiser d0(small_cfg(), 1);
  EXPECT_EQ(train_generator(d0, ds, enc, sched(), tc).dropped_conditions, 0u);
}

TEST(TrainGenerator, Errors) {
  PoolEncoder enc;
  GeneratorTrainConfig tc;
  tc.epochs = 2;
  Denoiser d(small_cfg(), 1);
  // class 2 has no training image
  auto two = testkit::tiny_dataset(2, 3);
  LabeledDataset ds({"c0", "c1", "c2"});
  for (const auto& s : two.samples()) ds.add(s);
  EXPECT_THROW(train_generator(d, ds, enc, sched(), tc), TrainingError);
  auto bad = tc;
  bad.conditioning_dropout = 1.5;
  EXPECT_THROW(train_generator(d, testkit::tiny_dataset(3, 4), enc, sched(), bad), ParameterError);
  bad = tc;
  bad.conditioning_dropout_max_p = 1.0;
  EXPECT_THROW(train_generator(d, testkit::tiny_dataset(3, 4), enc, sched(), bad), ParameterError);
  tc.lr = std::numeric_limits<double>::infinity();
  tc.grad_clip = 0.0;
  try {
    train_generator(d, testkit::tiny_dataset(3, 4), enc, sched(), tc);
    FAIL() << "divergence not detected";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("not finite"), std::string::npos);
  }
}

TEST(Encoder, DeterministicAndFinite) {
  ClassifierArch arch;
  arch.height = 8;
  arch.width = 8;
  arch.num_classes = 3;
  arch.embed_dim = 12;
  auto model = std::make_unique<ConvClassifier>(arch, 3);
  EncoderTrainConfig ec;
  ec.epochs = 2;
  const auto losses = train_encoder(*model, testkit::tiny_dataset(3, 6), ec);
  EXPECT_EQ(losses.size(), 2u);
  ConvEncoder enc(std::move(model));
  const auto im = testkit::random_image(8, 8, 1, 77);
  EXPECT_EQ(enc.encode(im), enc.encode(im));
  EXPECT_EQ(enc.encode(im).dim(), 12u);
  EXPECT_TRUE(enc.encode(Image(8, 8, 1)).finite());
  EXPECT_THROW(ConvEncoder(nullptr), ParameterError);
}
