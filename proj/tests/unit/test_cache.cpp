#include <gtest/gtest.h>

#include <fstream>
#include <thread>

#include "augsynth/cache.hpp"
#include "test_support.hpp"

using namespace augsynth;
using augsynth::testkit::random_image;
using augsynth::testkit::TempDir;

namespace {

CacheKeyFields fields() {
  CacheKeyFields f;
  f.method = "Embed-CutMix-Dropout";
  f.method_params = "alpha=1;p=0.4;mask=contiguous;";
  f.source_ids = {"a", "b"};
  f.seed = 42;
  f.cfg_scale = 2.0;
  f.steps = 30;
  f.batch = 1;
  f.generator_id = "gen";
  return f;
}

std::vector<ImageSample> batch(const std::string& key, int label, int n, std::uint64_t seed) {
  std::vector<ImageSample> out;
  for (int j = 0; j < n; ++j) {
    ImageSample s;
    s.id = j == 0 ? key : key + "." + std::to_string(j);
    s.label = label;
    s.pixels = random_image(6, 6, 1, seed + static_cast<std::uint64_t>(j));
    s.provenance.origin = Origin::synthetic;
    s.provenance.method = "Mixup";
    s.provenance.cfg_scale = 2.0;
    s.provenance.seed = 42;
    s.provenance.source_ids = {"a", "b"};
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST(CacheKey, StableAndSensitiveToEveryField) {
  const auto base = cache_key(fields());
  EXPECT_EQ(base, cache_key(fields()));
  EXPECT_EQ(base.size(), 32u);
  std::vector<CacheKeyFields> variants(8, fields());
  variants[0].method = "Mixup";
  variants[1].method_params = "alpha=1;p=0.5;mask=contiguous;";
  variants[2].source_ids = {"b", "a"};
  variants[3].seed = 43;
  variants[4].cfg_scale = 2.0000000001;
  variants[5].steps = 31;
  variants[6].batch = 2;
  variants[7].generator_id = "other";
  std::set<std::string> keys{base};
  for (const auto& v : variants) keys.insert(cache_key(v));
  EXPECT_EQ(keys.size(), 9u);
}

TEST(SyntheticCache, StoreLookupAndPersist) {
  TempDir dir("cache");
  const auto key = cache_key(fields());
  const auto imgs = batch(key, 1, 3, 7);
  {
    SyntheticCache cache(dir.path(), {"a", "b"});
    EXPECT_FALSE(cache.lookup(key).has_value());
    EXPECT_EQ(cache.misses(), 1u);
    EXPECT_TRUE(cache.store(key, imgs));
    EXPECT_FALSE(cache.store(key, imgs));
    EXPECT_EQ(cache.writes(), 1u);
    EXPECT_EQ(*cache.lookup(key), imgs);
    EXPECT_EQ(cache.hits(), 1u);
  }
  SyntheticCache reopened(dir.path(), {"a", "b"});
  EXPECT_EQ(reopened.entries(), 1u);
  EXPECT_TRUE(reopened.contains(key));
  EXPECT_EQ(*reopened.lookup(key), imgs);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / class_dir_name(1) / (key + ".pgm")));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / class_dir_name(1) / (key + ".2.pgm")));
}

TEST(SyntheticCache, TornIndexLineIsDropped) {
  TempDir dir("cache-torn");
  const auto key = cache_key(fields());
  {
    SyntheticCache cache(dir.path(), {"a", "b"});
    cache.store(key, batch(key, 0, 1, 1));
  }
  {
    std::ofstream out(dir.path() / "index.jsonl", std::ios::app);
    out << "{\"key\": \"abc\", \"sampl";
  }
  SyntheticCache cache(dir.path(), {"a", "b"});
  EXPECT_EQ(cache.entries(), 1u);
}

TEST(SyntheticCache, ConcurrentStoresOfDistinctAndEqualKeys) {
  TempDir dir("cache-mt");
  SyntheticCache cache(dir.path(), {"a", "b"});
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&, t] {
      for (int i = 0; i < 10; ++i) {
        auto f = fields();
        f.seed = static_cast<std::uint64_t>(i);
        const auto key = cache_key(f);
        cache.store(key, batch(key, i % 2, 1, static_cast<std::uint64_t>(i)));
        ASSERT_TRUE(cache.lookup(key).has_value());
      }
      (void)t;
    });
  for (auto& th : threads) th.join();
  EXPECT_EQ(cache.entries(), 10u);
  EXPECT_EQ(cache.writes(), 10u);
  SyntheticCache reopened(dir.path(), {"a", "b"});
  EXPECT_EQ(reopened.entries(), 10u);
}
