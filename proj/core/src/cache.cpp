#include "augsynth/cache.hpp"

#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "augsynth/error.hpp"
#include "augsynth/hash.hpp"
#include "augsynth/image_io.hpp"
#include "manifest_record.hpp"

namespace augsynth {

std::string cache_key(const CacheKeyFields& f) {
  nlohmann::json j;
  j["method"] = f.method;
  j["params"] = f.method_params;
  j["sources"] = f.source_ids;
  j["seed"] = std::to_string(f.seed);
  std::ostringstream scale;
  scale << std::setprecision(17) << f.cfg_scale;
  j["cfg_scale"] = scale.str();
  j["steps"] = f.steps;
  j["batch"] = f.batch;
  j["generator"] = f.generator_id;
  return sha256_hex(j.dump()).substr(0, 32);
}

SyntheticCache::SyntheticCache(std::filesystem::path root, std::vector<std::string> class_names)
    : root_(std::move(root)), class_names_(std::move(class_names)) {
  std::filesystem::create_directories(root_);
  std::ifstream in(root_ / "index.jsonl");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      // A torn final line from an interrupted writer is dropped; its images are regenerated.
      continue;
    }
    const auto key = rec.at("key").get<std::string>();
    std::vector<ImageSample> samples;
    const auto& recs = rec.at("samples");
    for (std::size_t i = 0; i < recs.size(); ++i) {
      std::string rel;
      ImageSample s = detail::record_from_json(recs[i], i, static_cast<int>(class_names_.size()), rel);
      samples.push_back(std::move(s));
    }
    index_[key] = std::move(samples);
  }
}

std::filesystem::path SyntheticCache::image_path(const std::string& key, std::size_t j, int label, int channels) const {
  std::string name = key;
  if (j > 0) name += "." + std::to_string(j);
  return root_ / class_dir_name(label) / (name + "." + pnm_extension(channels));
}

bool SyntheticCache::contains(const std::string& key) const {
  std::shared_lock lock(mu_);
  return index_.count(key) != 0;
}

std::optional<std::vector<ImageSample>> SyntheticCache::lookup(const std::string& key) const {
  std::vector<ImageSample> meta;
  {
    std::shared_lock lock(mu_);
    auto it = index_.find(key);
    if (it == index_.end()) {
      ++misses_;
      return std::nullopt;
    }
    meta = it->second;
  }
  for (std::size_t j = 0; j < meta.size(); ++j) {
    auto path = image_path(key, j, meta[j].label, 1);
    if (!std::filesystem::exists(path)) path = image_path(key, j, meta[j].label, 3);
    meta[j].pixels = read_pnm(path);
  }
  ++hits_;
  return meta;
}

bool SyntheticCache::store(const std::string& key, const std::vector<ImageSample>& samples) {
  if (contains(key)) return false;
  nlohmann::json rec;
  rec["key"] = key;
  auto& recs = rec["samples"] = nlohmann::json::array();
  for (std::size_t j = 0; j < samples.size(); ++j) {
    const auto& s = samples[j];
    const auto path = image_path(key, j, s.label, s.pixels.channels());
    write_pnm(s.pixels, path);
    recs.push_back(detail::record_to_json(s, std::filesystem::relative(path, root_).generic_string()));
  }
  std::unique_lock lock(mu_);
  if (index_.count(key) != 0) return false;  // lost a race; identical content already indexed
  {
    std::ofstream out(root_ / "index.jsonl", std::ios::app);
    if (!out) throw DataError("cannot append to cache index in " + root_.string());
    out << rec.dump() << '\n';
  }
  auto& stored = index_[key];
  for (const auto& s : samples) {
    ImageSample meta = s;
    meta.pixels = Image();
    stored.push_back(std::move(meta));
  }
  ++writes_;
  return true;
}

std::size_t SyntheticCache::entries() const {
  std::shared_lock lock(mu_);
  return index_.size();
}

}  // namespace augsynth
