#include <gtest/gtest.h>

#include <set>

#include "augsynth/hash.hpp"
#include "augsynth/rng.hpp"

using namespace augsynth;

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Checksum, DetectsSingleBitChanges) {
  std::vector<float> v{1.0f, 2.0f, 3.0f};
  const auto a = checksum(v);
  EXPECT_EQ(a, checksum(v));
  v[1] = std::nextafter(v[1], 3.0f);
  EXPECT_NE(a, checksum(v));
  EXPECT_NE(sha256_hex(std::span<const float>(v)), sha256_hex(std::span<const float>(std::vector<float>{1, 2, 3})));
}

TEST(DeriveSeed, DeterministicAndTagSensitive) {
  EXPECT_EQ(derive_seed(1, {2, 3}), derive_seed(1, {2, 3}));
  std::set<std::uint64_t> seen;
  for (std::uint64_t base = 0; base < 10; ++base)
    for (std::uint64_t a = 0; a < 10; ++a)
      for (std::uint64_t b = 0; b < 10; ++b) seen.insert(derive_seed(base, {a, b}));
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_NE(derive_seed(1, {2, 3}), derive_seed(1, {3, 2}));
  EXPECT_NE(derive_seed(1, {}), derive_seed(1, {0}));
  EXPECT_NE(tag_of("train"), tag_of("generation"));
  static_assert(tag_of("x") == tag_of("x"));
}

TEST(Rng, ReproducibleStreamsAndForks) {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.uniform(), b.uniform());
  Rng c(5);
  Rng f1 = c.fork(1), f2 = c.fork(1), f3 = c.fork(2);
  const double x = f1.normal();
  EXPECT_EQ(x, f2.normal());
  EXPECT_NE(x, f3.normal());
  EXPECT_EQ(c.seed(), 5u);
}

TEST(Rng, UniformIntCoversInclusiveRange) {
  Rng r(9);
  std::set<std::int64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto v = r.uniform_int(-2, 2);
    ASSERT_GE(v, -2);
    ASSERT_LE(v, 2);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 5u);
}
