#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "augsynth/datamodel.hpp"
#include "augsynth/error.hpp"
#include "augsynth/image_io.hpp"
#include "test_support.hpp"

using namespace augsynth;
using augsynth::testkit::random_image;
using augsynth::testkit::TempDir;

namespace {

ImageSample real_sample(const std::string& id, int label, Split split = Split::train, std::uint64_t seed = 1) {
  ImageSample s;
  s.id = id;
  s.label = label;
  s.split = split;
  s.pixels = random_image(5, 4, 1, seed);
  return s;
}

ImageSample synthetic_sample(const std::string& id, int label, std::vector<std::string> sources) {
  ImageSample s = real_sample(id, label, Split::train, 99);
  s.provenance.origin = Origin::synthetic;
  s.provenance.method = "Embed-CutMix-Dropout";
  s.provenance.cfg_scale = 7.5;
  s.provenance.seed = 18446744073709551557ULL;  // needs all 64 bits
  s.provenance.source_ids = std::move(sources);
  return s;
}

nlohmann::json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
  std::ofstream out(p);
  out << j.dump(1);
}

}  // namespace

TEST(ClassHistogram, Examples) {
  LabeledDataset ds({"a", "b"});
  EXPECT_EQ(class_histogram(ds), (std::vector<std::int64_t>{0, 0}));
  ds.add(real_sample("x", 0));
  ds.add(real_sample("y", 0));
  ds.add(real_sample("z", 1));
  EXPECT_EQ(class_histogram(ds), (std::vector<std::int64_t>{2, 1}));
  const auto ten = testkit::tiny_dataset(10, 100, 2, 2);
  EXPECT_EQ(class_histogram(ten), std::vector<std::int64_t>(10, 100));
}

TEST(ClassHistogram, PermutationInvariantAndSumsToSize) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ImageSample> v;
    const int n = static_cast<int>(rng.uniform_int(0, 60));
    for (int i = 0; i < n; ++i) v.push_back(real_sample("s" + std::to_string(i), static_cast<int>(rng.uniform_int(0, 4))));
    const LabeledDataset a({"0", "1", "2", "3", "4"}, v);
    std::shuffle(v.begin(), v.end(), rng.engine());
    const LabeledDataset b({"0", "1", "2", "3", "4"}, v);
    const auto h = class_histogram(a);
    EXPECT_EQ(h, class_histogram(b));
    std::int64_t sum = 0;
    for (auto c : h) sum += c;
    EXPECT_EQ(sum, n);
  }
}

TEST(Provenance, Invariants) {
  Provenance real;
  EXPECT_EQ(real.violation(), "");
  real.source_ids = {"a"};
  EXPECT_NE(real.violation(), "");

  auto ok = synthetic_sample("s", 0, {"a", "b"}).provenance;
  EXPECT_EQ(ok.violation(), "");
  auto p = ok;
  p.seed.reset();
  EXPECT_NE(p.violation(), "");
  p = ok;
  p.cfg_scale.reset();
  EXPECT_NE(p.violation(), "");
  p = ok;
  p.cfg_scale = -1.0;
  EXPECT_NE(p.violation(), "");
  p = ok;
  p.method = "none";
  EXPECT_NE(p.violation(), "");
  p = ok;
  p.source_ids = {};
  EXPECT_NE(p.violation(), "");
  p.source_ids = {"a", "b", "c"};
  EXPECT_NE(p.violation(), "");
}

TEST(LabeledDataset, RejectsInvariantViolations) {
  LabeledDataset ds({"a", "b"});
  EXPECT_THROW(ds.add(real_sample("x", 2)), DataError);
  EXPECT_THROW(ds.add(real_sample("x", -1)), DataError);
  auto bad = real_sample("x", 0);
  bad.pixels.at(0, 0) = 1.5f;
  EXPECT_THROW(ds.add(bad), DataError);
  auto syn = synthetic_sample("s", 1, {"a"});
  syn.provenance.seed.reset();
  EXPECT_THROW(ds.add(syn), DataError);
  EXPECT_TRUE(ds.empty());
}

TEST(LabeledDataset, FilterAndIndices) {
  LabeledDataset ds({"a", "b"});
  ds.add(real_sample("t0", 0, Split::train));
  ds.add(real_sample("v0", 0, Split::val));
  ds.add(real_sample("t1", 1, Split::train));
  ds.add(real_sample("e1", 1, Split::test));
  EXPECT_EQ(ds.filter(Split::train).size(), 2u);
  EXPECT_EQ(ds.filter(Split::test)[0].id, "e1");
  EXPECT_EQ(ds.indices_of_class(0), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(ds.indices_of_class(1, Split::train), (std::vector<std::size_t>{2}));
}

TEST(EmbeddingVector, Finite) {
  EmbeddingVector e{{1.0f, 2.0f}, "enc"};
  EXPECT_TRUE(e.finite());
  e.values.push_back(std::numeric_limits<float>::quiet_NaN());
  EXPECT_FALSE(e.finite());
  e.values.back() = std::numeric_limits<float>::infinity();
  EXPECT_FALSE(e.finite());
}

TEST(Image, PlanarRoundTripAndQuantize) {
  auto im = random_image(3, 4, 3, 5);
  EXPECT_EQ(Image::from_planar(3, 4, 3, im.to_planar()), im);
  const auto planar = im.to_planar();
  EXPECT_EQ(planar[static_cast<std::size_t>(1 * 12 + 2 * 4 + 3)], im.at(2, 3, 1));
  Image q(1, 1, 1, 0.5f);
  q.quantize();
  EXPECT_EQ(q.at(0, 0), 128.0f / 255.0f);
  EXPECT_THROW(Image(2, 2, 1, std::vector<float>(3)), ParameterError);
}

TEST(Pnm, LosslessOnTheByteGrid) {
  TempDir dir("pnm");
  for (int c : {1, 3}) {
    const auto im = random_image(7, 9, c, 11);
    const auto path = dir.path() / (std::string("x.") + pnm_extension(c));
    write_pnm(im, path);
    EXPECT_EQ(read_pnm(path), im);
  }
  EXPECT_THROW(read_pnm(dir.path() / "missing.pgm"), DataError);
  EXPECT_THROW(write_pnm(Image(2, 2, 2), dir.path() / "two.pnm"), DataError);
}

TEST(Manifest, RoundTripThreeSamples) {
  TempDir dir("manifest");
  LabeledDataset ds({"cat", "dog"});
  ds.add(real_sample("r0", 0));
  ds.add(real_sample("r1", 1, Split::val, 2));
  ds.add(synthetic_sample("s0", 1, {"r1", "r0"}));
  save_manifest(ds, dir.path());
  const auto back = load_manifest(dir.path());
  EXPECT_EQ(back, ds);
  EXPECT_EQ(class_histogram(back), class_histogram(ds));
  EXPECT_EQ(back[2].provenance, ds[2].provenance);
}

TEST(Manifest, RandomizedRoundTripProperty) {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    TempDir dir("manifest-prop");
    const int k = 1 + static_cast<int>(rng.uniform_int(0, 5));
    std::vector<std::string> names;
    for (int i = 0; i < k; ++i) names.push_back("class " + std::to_string(i));
    LabeledDataset ds(names);
    const int n = static_cast<int>(rng.uniform_int(0, 25));
    for (int i = 0; i < n; ++i) {
      const int label = static_cast<int>(rng.uniform_int(0, k - 1));
      ImageSample s;
      if (rng.bernoulli(0.5)) {
        s = synthetic_sample("s" + std::to_string(i), label, {"a"});
        s.provenance.cfg_scale = rng.uniform() * 20.0;
        s.provenance.seed = rng.engine()();
        if (rng.bernoulli(0.5)) s.provenance.source_ids.push_back("b");
      } else {
        s = real_sample("r" + std::to_string(i), label, static_cast<Split>(rng.uniform_int(0, 2)));
      }
      const int c = rng.bernoulli(0.3) ? 3 : 1;
      s.pixels = random_image(1 + static_cast<int>(rng.uniform_int(0, 9)), 1 + static_cast<int>(rng.uniform_int(0, 9)), c,
                              rng.engine()());
      ds.add(s);
    }
    save_manifest(ds, dir.path());
    EXPECT_EQ(load_manifest(dir.path()), ds) << "trial " << trial;
  }
}

TEST(Manifest, ParseErrorsNameTheRecord) {
  TempDir dir("manifest-bad");
  LabeledDataset ds({"a", "b"});
  ds.add(real_sample("r0", 0));
  ds.add(synthetic_sample("s0", 1, {"r0"}));
  save_manifest(ds, dir.path());
  const auto path = dir.path() / "manifest.json";
  const auto good = read_json(path);

  auto doc = good;
  doc["samples"][0]["label"] = 2;
  write_json(path, doc);
  try {
    load_manifest(dir.path());
    FAIL() << "label >= K accepted";
  } catch (const ManifestError& e) {
    EXPECT_EQ(e.record(), 0u);
    EXPECT_EQ(e.record_id(), "r0");
  }

  doc = good;
  doc["samples"][1]["provenance"]["seed"] = nullptr;
  write_json(path, doc);
  try {
    load_manifest(dir.path());
    FAIL() << "synthetic sample without seed accepted";
  } catch (const ManifestError& e) {
    EXPECT_EQ(e.record(), 1u);
    EXPECT_EQ(e.record_id(), "s0");
    EXPECT_NE(std::string(e.what()).find("seed"), std::string::npos);
  }

  doc = good;
  doc["samples"][1]["split"] = "holdout";
  write_json(path, doc);
  EXPECT_THROW(load_manifest(dir.path()), ManifestError);

  doc = good;
  doc["version"] = 99;
  write_json(path, doc);
  EXPECT_THROW(load_manifest(dir.path()), DataError);

  {
    std::ofstream out(path);
    out << "{ not json";
  }
  EXPECT_THROW(load_manifest(dir.path()), DataError);
  EXPECT_THROW(load_manifest(dir.path() / "nowhere"), DataError);
}

TEST(Manifest, SavingTwiceIsByteIdentical) {
  TempDir a("m-a"), b("m-b");
  const auto ds = testkit::tiny_dataset(3, 4);
  save_manifest(ds, a.path());
  save_manifest(ds, b.path());
  EXPECT_EQ(testkit::tree_digest(a.path()), testkit::tree_digest(b.path()));
}
