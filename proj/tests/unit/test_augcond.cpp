#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "augsynth/augcond.hpp"
#include "augsynth/error.hpp"
#include "test_support.hpp"

using namespace augsynth;
using augsynth::testkit::PoolEncoder;
using augsynth::testkit::random_image;
using augsynth::testkit::tiny_dataset;

namespace {

EmbeddingVector vec(std::vector<float> v, std::string id = "enc") { return {std::move(v), std::move(id)}; }

EmbeddingVector random_vec(std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  EmbeddingVector e{std::vector<float>(d), "enc"};
  for (auto& v : e.values) v = static_cast<float>(rng.normal());
  return e;
}

}  // namespace

TEST(MethodNames, RoundTripAllTen) {
  EXPECT_EQ(kAllMethods.size(), 10u);
  for (auto m : kAllMethods) EXPECT_EQ(parse_method(to_string(m)), m);
  EXPECT_EQ(to_string(AugMethod::EmbedCutMixDropout), "Embed-CutMix-Dropout");
  EXPECT_THROW(parse_method("Random"), ParameterError);
}

TEST(AugmentationSpec, RejectsOutOfRange) {
  AugmentationSpec s;
  s.beta_alpha = 0.0;
  EXPECT_THROW(s.validate(), ParameterError);
  s.beta_alpha = 1.0;
  s.dropout_p = 1.5;
  EXPECT_THROW(s.validate(), ParameterError);
  s.dropout_p = -0.1;
  EXPECT_THROW(s.validate(), ParameterError);
  s.dropout_p = 0.4;
  EXPECT_NO_THROW(s.validate());
}

TEST(MixCoefficient, UniformMeanForAlphaOne) {
  Rng rng(42);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) sum += sample_mix_coefficient(1.0, rng).lambda;
  EXPECT_NEAR(sum / 100000.0, 0.5, 0.01);
}

TEST(MixCoefficient, KolmogorovSmirnovAgainstUniform) {
  Rng rng(7);
  std::vector<double> xs(100000);
  for (auto& x : xs) x = sample_mix_coefficient(1.0, rng).lambda;
  std::sort(xs.begin(), xs.end());
  double d = 0.0;
  const double n = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    d = std::max(d, std::abs((i + 1) / n - xs[i]));
    d = std::max(d, std::abs(xs[i] - i / n));
  }
  EXPECT_LT(d, 0.01);
}

TEST(MixCoefficient, SameSeedSameLambda) {
  Rng a(123), b(123);
  EXPECT_EQ(sample_mix_coefficient(1.0, a).lambda, sample_mix_coefficient(1.0, b).lambda);
}

TEST(MixCoefficient, StaysInUnitIntervalForSmallAlpha) {
  Rng rng(5);
  for (int i = 0; i < 10000; ++i) {
    const double l = sample_mix_coefficient(0.05, rng).lambda;
    ASSERT_GE(l, 0.0);
    ASSERT_LE(l, 1.0);
  }
}

TEST(MixCoefficient, NonPositiveAlphaIsAnError) {
  Rng rng(1);
  EXPECT_THROW(sample_mix_coefficient(0.0, rng), ParameterError);
  EXPECT_THROW(sample_mix_coefficient(-1.0, rng), ParameterError);
}

TEST(PatchMask, Endpoints) {
  Rng rng(3);
  const auto none = sample_patch_mask(1.0, 13, 7, rng);
  EXPECT_EQ(none.height, 0);
  EXPECT_EQ(none.width, 0);
  const auto full = sample_patch_mask(0.0, 8, 8, rng);
  EXPECT_EQ(full.height, 8);
  EXPECT_EQ(full.width, 8);
  EXPECT_EQ(full.top, 0);
  EXPECT_EQ(full.left, 0);
}

TEST(PatchMask, ThreeQuartersOnEightByEightIsFourByFour) {
  Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    const auto m = sample_patch_mask(0.75, 8, 8, rng);
    EXPECT_EQ(m.height, 4);
    EXPECT_EQ(m.width, 4);
    EXPECT_EQ(m.area(), 16);
  }
}

TEST(PatchMask, AlwaysInsideAndAreaTracksLambda) {
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    const int h = 1 + static_cast<int>(rng.uniform_int(0, 40));
    const int w = 1 + static_cast<int>(rng.uniform_int(0, 40));
    const double lambda = rng.uniform();
    const auto m = sample_patch_mask(lambda, h, w, rng);
    ASSERT_GE(m.top, 0);
    ASSERT_GE(m.left, 0);
    ASSERT_LE(m.top + m.height, h);
    ASSERT_LE(m.left + m.width, w);
    const double side = std::sqrt(1.0 - lambda);
    ASSERT_EQ(m.height, std::lround(h * side));
    ASSERT_EQ(m.width, std::lround(w * side));
  }
}

TEST(PatchMask, OffsetsAreUniform) {
  Rng rng(17);
  std::vector<int> tops(5, 0);  // 8x8, lambda .75 -> offsets 0..4
  for (int i = 0; i < 50000; ++i) ++tops[static_cast<std::size_t>(sample_patch_mask(0.75, 8, 8, rng).top)];
  for (int c : tops) EXPECT_NEAR(c / 50000.0, 0.2, 0.01);
}

TEST(CutMixPixel, Endpoints) {
  const auto x1 = random_image(8, 8, 3, 1), x2 = random_image(8, 8, 3, 2);
  Rng rng(0);
  EXPECT_EQ(cutmix_pixel(x1, x2, 1.0, rng), x1);
  EXPECT_EQ(cutmix_pixel(x1, x2, 0.0, rng), x2);
}

TEST(CutMixPixel, PatchAreaArithmetic) {
  Image zeros(8, 8, 2, 0.0f), ones(8, 8, 2, 1.0f);
  Rng rng(21);
  const auto out = cutmix_pixel(zeros, ones, 0.75, rng);
  for (int c = 0; c < 2; ++c) {
    double s = 0.0;
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) s += out.at(y, x, c);
    EXPECT_EQ(s, 16.0);
  }
}

TEST(CutMixPixel, InsideFromSecondOutsideFromFirst) {
  const auto x1 = random_image(12, 10, 1, 3), x2 = random_image(12, 10, 1, 4);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng r1(seed), r2(seed);
    const double lambda = 0.3 + 0.01 * static_cast<double>(seed);
    const auto mask = sample_patch_mask(lambda, 12, 10, r1);
    const auto out = cutmix_pixel(x1, x2, lambda, r2);
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 10; ++x) ASSERT_EQ(out.at(y, x), mask.contains(y, x) ? x2.at(y, x) : x1.at(y, x));
  }
}

TEST(CutMixPixel, ShapeMismatchIsAnError) {
  Rng rng(0);
  EXPECT_THROW(cutmix_pixel(Image(8, 8, 1), Image(8, 7, 1), 0.5, rng), ParameterError);
}

TEST(MixupPixel, EndpointsAndDirectEvaluation) {
  const auto x1 = random_image(6, 6, 1, 5), x2 = random_image(6, 6, 1, 6);
  EXPECT_EQ(mixup_pixel(x1, x2, 1.0), x1);
  EXPECT_EQ(mixup_pixel(x1, x2, 0.0), x2);
  EXPECT_EQ(mixup_pixel(x1, x1, 0.37), x1);
  const auto out = mixup_pixel(Image(4, 4, 1, 0.0f), Image(4, 4, 1, 1.0f), 0.3);
  for (float p : out.pixels()) EXPECT_NEAR(p, 0.7f, 1e-7f);
}

TEST(MixupPixel, ConvexCombinationInUnitRange) {
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    const auto a = random_image(5, 5, 3, 100 + i), b = random_image(5, 5, 3, 200 + i);
    const double l = rng.uniform();
    const auto out = mixup_pixel(a, b, l);
    ASSERT_TRUE(out.in_unit_range());
    for (std::size_t j = 0; j < out.size(); ++j) {
      const float lo = std::min(a.pixels()[j], b.pixels()[j]), hi = std::max(a.pixels()[j], b.pixels()[j]);
      ASSERT_GE(out.pixels()[j], lo - 1e-6f);
      ASSERT_LE(out.pixels()[j], hi + 1e-6f);
    }
  }
  EXPECT_THROW(mixup_pixel(Image(2, 2, 1), Image(2, 2, 3), 0.5), ParameterError);
}

TEST(CutMixEmbedding, EndpointsAndSegmentLength) {
  const auto e1 = random_vec(32, 1), e2 = random_vec(32, 2);
  Rng rng(4);
  EXPECT_EQ(cutmix_embedding(e1, e2, 1.0, rng), e1);
  EXPECT_EQ(cutmix_embedding(e1, e2, 0.0, rng), e2);
  const auto out = cutmix_embedding(vec(std::vector<float>(10, 0.0f)), vec(std::vector<float>(10, 1.0f)), 0.6, rng);
  EXPECT_EQ(std::count(out.values.begin(), out.values.end(), 1.0f), 4);
}

TEST(CutMixEmbedding, SegmentIsContiguousAndOffsetUniform) {
  const auto zeros = vec(std::vector<float>(10, 0.0f)), ones = vec(std::vector<float>(10, 1.0f));
  Rng rng(12);
  std::vector<int> first(7, 0);  // length 4 in d=10 -> offsets 0..6
  for (int i = 0; i < 70000; ++i) {
    const auto out = cutmix_embedding(zeros, ones, 0.6, rng);
    const auto it = std::find(out.values.begin(), out.values.end(), 1.0f);
    const auto off = it - out.values.begin();
    for (int j = 0; j < 10; ++j) ASSERT_EQ(out.values[static_cast<std::size_t>(j)], (j >= off && j < off + 4) ? 1.0f : 0.0f);
    ++first[static_cast<std::size_t>(off)];
  }
  for (int c : first) EXPECT_NEAR(c / 70000.0, 1.0 / 7.0, 0.01);
}

TEST(CutMixEmbedding, ScatteredVariantReplacesSameCount) {
  const auto zeros = vec(std::vector<float>(64, 0.0f)), ones = vec(std::vector<float>(64, 1.0f));
  Rng rng(13);
  for (int i = 0; i < 100; ++i) {
    const double l = rng.uniform();
    const auto out = cutmix_embedding(zeros, ones, l, rng, EmbedMaskKind::scattered);
    EXPECT_EQ(std::count(out.values.begin(), out.values.end(), 1.0f), std::llround((1.0 - l) * 64));
  }
}

TEST(CutMixEmbedding, MismatchIsAnError) {
  Rng rng(0);
  EXPECT_THROW(cutmix_embedding(random_vec(8, 1), random_vec(9, 2), 0.5, rng), ParameterError);
  auto other = random_vec(8, 2);
  other.encoder_id = "other";
  EXPECT_THROW(cutmix_embedding(random_vec(8, 1), other, 0.5, rng), ParameterError);
  EXPECT_THROW(mixup_embedding(random_vec(8, 1), other, 0.5), ParameterError);
}

TEST(MixupEmbedding, MidpointEndpointAndRecomputation) {
  const auto mid = mixup_embedding(vec({2.0f, 0.0f}), vec({0.0f, 2.0f}), 0.5);
  EXPECT_EQ(mid.values, (std::vector<float>{1.0f, 1.0f}));
  const auto e1 = random_vec(40, 3), e2 = random_vec(40, 4);
  EXPECT_EQ(mixup_embedding(e1, e2, 1.0), e1);
  EXPECT_EQ(mixup_embedding(e1, e2, 0.0), e2);
  Rng rng(99);
  for (int i = 0; i < 100; ++i) {
    const double l = rng.uniform();
    const auto out = mixup_embedding(e1, e2, l);
    double err = 0.0;
    for (std::size_t j = 0; j < 40; ++j) {
      const float expect = static_cast<float>(l) * e1.values[j] + (1.0f - static_cast<float>(l)) * e2.values[j];
      err += std::abs(out.values[j] - expect);
    }
    EXPECT_EQ(err, 0.0);
  }
}

TEST(DropoutEmbedding, IdentityAndTotalDrop) {
  const auto e = random_vec(50, 5);
  Rng rng(1);
  EXPECT_EQ(dropout_embedding(e, 0.0, rng), e);
  const auto z = dropout_embedding(e, 1.0, rng);
  for (float v : z.values) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(dropout_embedding(e, 1.01, rng), ParameterError);
  EXPECT_THROW(dropout_embedding(e, -0.01, rng), ParameterError);
}

TEST(DropoutEmbedding, UnbiasedWithFortyPercentZeros) {
  const auto ones = vec(std::vector<float>(100000, 1.0f));
  Rng rng(2024);
  const auto out = dropout_embedding(ones, 0.4, rng);
  const double mean = std::accumulate(out.values.begin(), out.values.end(), 0.0) / 100000.0;
  const double zeros = static_cast<double>(std::count(out.values.begin(), out.values.end(), 0.0f)) / 100000.0;
  EXPECT_NEAR(mean, 1.0, 0.02);
  EXPECT_NEAR(zeros, 0.4, 0.01);
  for (float v : out.values) ASSERT_TRUE(v == 0.0f || std::abs(v - 1.0f / 0.6f) < 1e-6f);
}

TEST(DropoutEmbedding, VarianceMatchesLawAndIncreasesWithP) {
  // Var = x^2 p / (1 - p); checked at 3 sigma of the Monte-Carlo estimator.
  const double x = 1.5;
  const auto e = vec(std::vector<float>(1, static_cast<float>(x)));
  double prev = -1.0;
  for (double p : {0.1, 0.4, 0.7}) {
    Rng rng(derive_seed(77, {static_cast<std::uint64_t>(p * 10)}));
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double v = dropout_embedding(e, p, rng).values[0];
      s += v;
      s2 += v * v;
    }
    const double mean = s / n;
    const double var = (s2 - n * mean * mean) / (n - 1);
    const double law = x * x * p / (1.0 - p);
    // Var of the sample variance for a two-point law: (mu4 - sigma^4) / n.
    const double hi = x / (1.0 - p);
    const double mu4 = (1.0 - p) * std::pow(hi - x, 4) + p * std::pow(x, 4);
    const double se = std::sqrt((mu4 - law * law) / n);
    EXPECT_NEAR(var, law, 3.0 * se) << "p=" << p;
    EXPECT_NEAR(mean, x, 3.0 * std::sqrt(law / n)) << "p=" << p;
    EXPECT_GT(var, prev);
    prev = var;
  }
}

TEST(SourcePair, DegenerateAndForcedPairs) {
  auto one = tiny_dataset(1, 1);
  Rng rng(3);
  auto [a, b] = select_source_pair(one, 0, rng);
  EXPECT_EQ(a, b);
  auto two = tiny_dataset(1, 2);
  for (int i = 0; i < 20; ++i) {
    auto [x, y] = select_source_pair(two, 0, rng);
    EXPECT_NE(x, y);
  }
  LabeledDataset empty(std::vector<std::string>{"a", "b"});
  EXPECT_THROW(select_source_pair(empty, 1, rng), DataError);
}

TEST(SourcePair, UniformSelectionFrequency) {
  const auto ds = tiny_dataset(1, 100, 4, 4);
  Rng rng(5);
  std::map<const ImageSample*, int> freq;
  for (int i = 0; i < 10000; ++i) {
    auto [a, b] = select_source_pair(ds, 0, rng);
    ++freq[a];
  }
  ASSERT_EQ(freq.size(), 100u);
  for (const auto& [s, c] : freq) EXPECT_NEAR(c / 10000.0, 0.01, 0.005);
}

TEST(SourcePair, IgnoresSyntheticAndHeldOutImages) {
  auto ds = tiny_dataset(1, 1);
  ImageSample val = ds[0];
  val.id = "val";
  val.split = Split::val;
  ds.add(val);
  ImageSample syn = ds[0];
  syn.id = "syn";
  syn.provenance.origin = Origin::synthetic;
  syn.provenance.method = "RandomImage";
  syn.provenance.cfg_scale = 2.0;
  syn.provenance.seed = 1;
  syn.provenance.source_ids = {ds[0].id};
  ds.add(syn);
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    auto [a, b] = select_source_pair(ds, 0, rng);
    EXPECT_EQ(a->id, ds[0].id);
    EXPECT_EQ(b->id, ds[0].id);
  }
}

TEST(BuildConditioning, RandomImageIsEncoderOfFirstSource) {
  const auto ds = tiny_dataset(3, 5);
  PoolEncoder enc;
  AugmentationSpec spec;
  spec.method = AugMethod::RandomImage;
  Rng rng(10), replay(10);
  const auto b = build_conditioning(spec, ds, 2, enc, rng);
  const auto [s1, s2] = select_source_pair(ds, 2, replay);
  EXPECT_EQ(b.image_embedding, enc.encode(s1->pixels));
  EXPECT_EQ(b.class_label, 2);
  EXPECT_EQ(b.class_text, "c2");
  EXPECT_EQ(b.source_ids, std::vector<std::string>{s1->id});
  EXPECT_EQ(b.method, "RandomImage");
}

TEST(BuildConditioning, DispatchTableMatchesManualComposition) {
  const auto ds = tiny_dataset(2, 6);
  PoolEncoder enc;
  for (auto m : kAllMethods) {
    AugmentationSpec spec;
    spec.method = m;
    spec.dropout_p = 0.4;
    Rng rng(31), r(31);
    const auto b = build_conditioning(spec, ds, 1, enc, rng);

    const auto [s1, s2] = select_source_pair(ds, 1, r);
    EmbeddingVector x;
    if (m == AugMethod::RandomImage || m == AugMethod::Dropout) {
      x = enc.encode(s1->pixels);
    } else {
      const double l = sample_mix_coefficient(spec.beta_alpha, r).lambda;
      EXPECT_EQ(b.lambda, l);
      switch (m) {
        case AugMethod::Mixup:
        case AugMethod::MixupDropout: x = enc.encode(mixup_pixel(s1->pixels, s2->pixels, l)); break;
        case AugMethod::CutMix:
        case AugMethod::CutMixDropout: x = enc.encode(cutmix_pixel(s1->pixels, s2->pixels, l, r)); break;
        case AugMethod::EmbedMixup:
        case AugMethod::EmbedMixupDropout: x = mixup_embedding(enc.encode(s1->pixels), enc.encode(s2->pixels), l); break;
        default: x = cutmix_embedding(enc.encode(s1->pixels), enc.encode(s2->pixels), l, r); break;
      }
      EXPECT_EQ(b.source_ids, (std::vector<std::string>{s1->id, s2->id}));
    }
    if (uses_dropout(m)) x = dropout_embedding(x, 0.4, r);
    EXPECT_EQ(b.image_embedding, x) << to_string(m);
    EXPECT_EQ(b.method, to_string(m));
    EXPECT_EQ(b.method_params, spec.canonical_params());
  }
}

TEST(BuildConditioning, NoOpsComposeToIdentity) {
  // Embed-CutMix-Dropout with p=0 and lambda=1 must reduce to embed(x1).
  PoolEncoder enc;
  const auto ds = tiny_dataset(1, 4);
  const auto e1 = enc.encode(ds[0].pixels), e2 = enc.encode(ds[1].pixels);
  Rng rng(1);
  const auto mixed = cutmix_embedding(e1, e2, 1.0, rng);
  EXPECT_EQ(dropout_embedding(mixed, 0.0, rng), e1);
}

TEST(BuildConditioning, IdenticalSourcesGiveThatSourceForEveryMethod) {
  const auto ds = tiny_dataset(2, 1);  // one image per class: the pair is that image twice
  PoolEncoder enc;
  for (auto m : kAllMethods) {
    AugmentationSpec spec;
    spec.method = m;
    spec.dropout_p = 0.0;
    Rng rng(8);
    const auto b = build_conditioning(spec, ds, 1, enc, rng);
    EXPECT_EQ(b.image_embedding, enc.encode(ds[1].pixels)) << to_string(m);
  }
}

TEST(BuildConditioning, DeterministicUnderFixedSeed) {
  const auto ds = tiny_dataset(3, 8);
  PoolEncoder enc;
  for (auto m : kAllMethods) {
    AugmentationSpec spec;
    spec.method = m;
    Rng a(2718), b(2718);
    const auto x = build_conditioning(spec, ds, 0, enc, a);
    const auto y = build_conditioning(spec, ds, 0, enc, b);
    EXPECT_EQ(x.image_embedding, y.image_embedding) << to_string(m);
    EXPECT_EQ(x.source_ids, y.source_ids);
    EXPECT_EQ(x.lambda, y.lambda);
  }
}

TEST(BuildConditioning, CanonicalParamsOnlyListWhatMatters) {
  AugmentationSpec s;
  s.method = AugMethod::RandomImage;
  EXPECT_EQ(s.canonical_params(), "");
  s.method = AugMethod::Dropout;
  EXPECT_EQ(s.canonical_params(), "p=0.40000000000000002;");
  s.method = AugMethod::EmbedCutMixDropout;
  EXPECT_EQ(s.canonical_params(), "alpha=1;p=0.40000000000000002;mask=contiguous;");
}
