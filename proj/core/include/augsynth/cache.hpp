#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "augsynth/datamodel.hpp"

namespace augsynth {

/// Everything that determines a generated batch. Two requests with equal
/// fields produce the same key and therefore the same cached images.
struct CacheKeyFields {
  std::string method;
  std::string method_params;  // canonical augmentation parameters
  std::vector<std::string> source_ids;
  std::uint64_t seed = 0;
  double cfg_scale = 0.0;
  int steps = 0;
  int batch = 1;
  std::string generator_id;
};

std::string cache_key(const CacheKeyFields& fields);

/// Content-addressed store for synthetic images:
///   <root>/<class>/<key>.<ext>       first image of a request
///   <root>/<class>/<key>.<j>.<ext>   image j > 0
///   <root>/index.jsonl               one record per stored request
///
/// Concurrent lookups are safe. Stores of distinct keys may race; a second
/// store of an existing key is a no-op.
class SyntheticCache {
 public:
  SyntheticCache(std::filesystem::path root, std::vector<std::string> class_names);

  const std::filesystem::path& root() const noexcept { return root_; }

  bool contains(const std::string& key) const;
  std::optional<std::vector<ImageSample>> lookup(const std::string& key) const;
  /// Returns false when the key was already present.
  bool store(const std::string& key, const std::vector<ImageSample>& samples);

  std::size_t entries() const;
  std::uint64_t hits() const noexcept { return hits_.load(); }
  std::uint64_t misses() const noexcept { return misses_.load(); }
  std::uint64_t writes() const noexcept { return writes_.load(); }

 private:
  std::filesystem::path image_path(const std::string& key, std::size_t j, int label, int channels) const;

  std::filesystem::path root_;
  std::vector<std::string> class_names_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::vector<ImageSample>> index_;
  mutable std::atomic<std::uint64_t> hits_{0};
  mutable std::atomic<std::uint64_t> misses_{0};
  std::atomic<std::uint64_t> writes_{0};
};

}  // namespace augsynth
