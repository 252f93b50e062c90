#include "augsynth/datamodel.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "augsynth/error.hpp"
#include "augsynth/image_io.hpp"
#include "manifest_record.hpp"

namespace augsynth {

std::string_view to_string(Split s) noexcept {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

std::string_view to_string(Origin o) noexcept { return o == Origin::real ? "real" : "synthetic"; }

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw DataError("unknown split '" + std::string(s) + "'");
}

Origin parse_origin(std::string_view s) {
  if (s == "real") return Origin::real;
  if (s == "synthetic") return Origin::synthetic;
  throw DataError("unknown origin '" + std::string(s) + "'");
}

std::string Provenance::violation() const {
  if (origin == Origin::real) {
    if (!source_ids.empty()) return "real sample must not list source_ids";
    return {};
  }
  if (method.empty() || method == "none") return "synthetic sample needs a method";
  if (!cfg_scale) return "synthetic sample needs cfg_scale";
  if (*cfg_scale < 0.0 || !std::isfinite(*cfg_scale)) return "cfg_scale must be finite and >= 0";
  if (!seed) return "synthetic sample needs seed";
  if (source_ids.empty() || source_ids.size() > 2) return "synthetic sample needs 1 or 2 source_ids";
  return {};
}

LabeledDataset::LabeledDataset(std::vector<std::string> class_names) : class_names_(std::move(class_names)) {}

LabeledDataset::LabeledDataset(std::vector<std::string> class_names, std::vector<ImageSample> samples)
    : class_names_(std::move(class_names)) {
  samples_.reserve(samples.size());
  for (auto& s : samples) add(std::move(s));
}

void LabeledDataset::add(ImageSample sample) {
  if (sample.label < 0 || sample.label >= num_classes())
    throw DataError("sample " + sample.id + ": label " + std::to_string(sample.label) + " outside [0," +
                    std::to_string(num_classes()) + ")");
  if (auto v = sample.provenance.violation(); !v.empty()) throw DataError("sample " + sample.id + ": " + v);
  if (!sample.pixels.in_unit_range()) throw DataError("sample " + sample.id + ": pixel outside [0,1]");
  samples_.push_back(std::move(sample));
}

LabeledDataset LabeledDataset::filter(Split split) const {
  LabeledDataset out(class_names_);
  for (const auto& s : samples_)
    if (s.split == split) out.samples_.push_back(s);
  return out;
}

std::vector<std::size_t> LabeledDataset::indices_of_class(int label, std::optional<Split> split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples_.size(); ++i)
    if (samples_[i].label == label && (!split || samples_[i].split == *split)) out.push_back(i);
  return out;
}

std::vector<std::int64_t> class_histogram(const LabeledDataset& ds) {
  std::vector<std::int64_t> hist(static_cast<std::size_t>(ds.num_classes()), 0);
  for (const auto& s : ds.samples()) ++hist[static_cast<std::size_t>(s.label)];
  return hist;
}

bool EmbeddingVector::finite() const noexcept {
  for (float v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string class_dir_name(int k) {
  std::ostringstream os;
  os << "class_";
  if (k < 100) os << (k < 10 ? "00" : "0");
  os << k;
  return os.str();
}

namespace detail {

nlohmann::json provenance_to_json(const Provenance& p) {
  nlohmann::json j;
  j["origin"] = to_string(p.origin);
  j["method"] = p.method;
  j["cfg_scale"] = p.cfg_scale ? nlohmann::json(*p.cfg_scale) : nlohmann::json(nullptr);
  // Seeds are full 64-bit; JSON consumers outside C++ may truncate numbers, so store as text.
  j["seed"] = p.seed ? nlohmann::json(std::to_string(*p.seed)) : nlohmann::json(nullptr);
  j["source_ids"] = p.source_ids;
  return j;
}

nlohmann::json record_to_json(const ImageSample& s, const std::string& relative_path) {
  nlohmann::json j;
  j["id"] = s.id;
  j["path"] = relative_path;
  j["label"] = s.label;
  j["split"] = to_string(s.split);
  j["height"] = s.pixels.height();
  j["width"] = s.pixels.width();
  j["channels"] = s.pixels.channels();
  j["provenance"] = provenance_to_json(s.provenance);
  return j;
}

ImageSample record_from_json(const nlohmann::json& rec, std::size_t index, int num_classes, std::string& path_out) {
  const std::string id = rec.is_object() && rec.contains("id") && rec["id"].is_string() ? rec["id"].get<std::string>() : "";
  auto fail = [&](const std::string& what) { throw ManifestError(index, id, what); };
  if (!rec.is_object()) fail("record is not an object");
  if (id.empty()) fail("missing id");
  auto require = [&](const char* key) -> const nlohmann::json& {
    if (!rec.contains(key)) fail(std::string("missing field '") + key + "'");
    return rec[key];
  };
  ImageSample s;
  s.id = id;
  const auto& path = require("path");
  if (!path.is_string()) fail("path must be a string");
  path_out = path.get<std::string>();
  const auto& label = require("label");
  if (!label.is_number_integer()) fail("label must be an integer");
  s.label = label.get<int>();
  if (s.label < 0 || (num_classes >= 0 && s.label >= num_classes))
    fail("label " + std::to_string(s.label) + " outside [0," + std::to_string(num_classes) + ")");
  const auto& split = require("split");
  if (!split.is_string()) fail("split must be a string");
  try {
    s.split = parse_split(split.get<std::string>());
  } catch (const DataError& e) {
    fail(e.what());
  }
  const auto& prov = require("provenance");
  if (!prov.is_object()) fail("provenance must be an object");
  try {
    s.provenance.origin = parse_origin(prov.at("origin").get<std::string>());
    s.provenance.method = prov.value("method", std::string("none"));
    if (prov.contains("cfg_scale") && !prov["cfg_scale"].is_null()) s.provenance.cfg_scale = prov["cfg_scale"].get<double>();
    if (prov.contains("seed") && !prov["seed"].is_null()) {
      const auto& seed = prov["seed"];
      s.provenance.seed = seed.is_string() ? std::stoull(seed.get<std::string>()) : seed.get<std::uint64_t>();
    }
    if (prov.contains("source_ids")) s.provenance.source_ids = prov["source_ids"].get<std::vector<std::string>>();
  } catch (const ManifestError&) {
    throw;
  } catch (const std::exception& e) {
    fail(std::string("bad provenance: ") + e.what());
  }
  if (auto v = s.provenance.violation(); !v.empty()) fail(v);
  return s;
}

}  // namespace detail

void save_manifest(const LabeledDataset& ds, const std::filesystem::path& root) {
  std::filesystem::create_directories(root);
  nlohmann::json doc;
  doc["format"] = kManifestFormat;
  doc["version"] = kManifestVersion;
  doc["num_classes"] = ds.num_classes();
  doc["class_names"] = ds.class_names();
  auto& records = doc["samples"] = nlohmann::json::array();
  for (const auto& s : ds.samples()) {
    const std::string rel =
        class_dir_name(s.label) + "/" + s.id + "." + pnm_extension(s.pixels.channels());
    write_pnm(s.pixels, root / rel);
    records.push_back(detail::record_to_json(s, rel));
  }
  write_file_atomic(root / "manifest.json", doc.dump(1));
}

LabeledDataset load_manifest(const std::filesystem::path& root) {
  const auto path = root / "manifest.json";
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!doc.is_object() || doc.value("format", std::string()) != kManifestFormat)
    throw DataError(path.string() + " is not an augsynth manifest");
  if (doc.value("version", -1) != kManifestVersion)
    throw DataError(path.string() + ": unsupported manifest version");
  const auto names = doc.at("class_names").get<std::vector<std::string>>();
  const int k = doc.value("num_classes", -1);
  if (k != static_cast<int>(names.size())) throw DataError(path.string() + ": num_classes does not match class_names");
  LabeledDataset ds(names);
  const auto& records = doc.at("samples");
  if (!records.is_array()) throw DataError(path.string() + ": samples must be an array");
  std::vector<ImageSample> samples;
  samples.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::string rel;
    ImageSample s = detail::record_from_json(records[i], i, k, rel);
    try {
      s.pixels = read_pnm(root / rel);
    } catch (const DataError& e) {
      throw ManifestError(i, s.id, e.what());
    }
    const auto& rec = records[i];
    if (rec.contains("height") &&
        (rec["height"] != s.pixels.height() || rec["width"] != s.pixels.width() || rec["channels"] != s.pixels.channels()))
      throw ManifestError(i, s.id, "image shape does not match record");
    samples.push_back(std::move(s));
  }
  return LabeledDataset(names, std::move(samples));
}

}  // namespace augsynth
