#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "augsynth/image.hpp"

namespace augsynth {

enum class Split { train, val, test };
enum class Origin { real, synthetic };

std::string_view to_string(Split s) noexcept;
std::string_view to_string(Origin o) noexcept;
Split parse_split(std::string_view s);
Origin parse_origin(std::string_view s);

struct Provenance {
  Origin origin = Origin::real;
  std::string method = "none";
  std::optional<double> cfg_scale;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> source_ids;

  static Provenance real() { return {}; }

  /// Empty string when the invariants hold, otherwise a description of the
  /// first violation.
  std::string violation() const;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct ImageSample {
  std::string id;
  Image pixels;
  int label = 0;
  Split split = Split::train;
  Provenance provenance;

  friend bool operator==(const ImageSample&, const ImageSample&) = default;
};

class LabeledDataset {
 public:
  LabeledDataset() = default;
  explicit LabeledDataset(std::vector<std::string> class_names);
  LabeledDataset(std::vector<std::string> class_names, std::vector<ImageSample> samples);

  int num_classes() const noexcept { return static_cast<int>(class_names_.size()); }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }
  const std::string& class_name(int k) const { return class_names_.at(static_cast<std::size_t>(k)); }

  const std::vector<ImageSample>& samples() const noexcept { return samples_; }
  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  const ImageSample& operator[](std::size_t i) const { return samples_[i]; }

  /// Throws DataError if the sample violates a dataset invariant.
  void add(ImageSample sample);

  /// Samples of one split, same class table.
  LabeledDataset filter(Split split) const;
  /// Indices of samples with the given label (and split, when given).
  std::vector<std::size_t> indices_of_class(int label, std::optional<Split> split = std::nullopt) const;

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;

 private:
  std::vector<std::string> class_names_;
  std::vector<ImageSample> samples_;
};

/// Entry k is the number of samples labeled k.
std::vector<std::int64_t> class_histogram(const LabeledDataset& ds);

/// A d-dimensional embedding tagged with the encoder that produced it.
struct EmbeddingVector {
  std::vector<float> values;
  std::string encoder_id;

  std::size_t dim() const noexcept { return values.size(); }
  bool finite() const noexcept;

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

// ---------------------------------------------------------------------------
// Manifest persistence
//
// <root>/manifest.json holds a versioned header and one record per sample;
// pixels live in <root>/<class-dir>/<id>.pgm (or .ppm for 3 channels) at
// 8-bit depth. Datasets whose pixels are multiples of 1/255 round-trip
// exactly; anything else is quantized on save.

inline constexpr int kManifestVersion = 1;
inline constexpr std::string_view kManifestFormat = "augsynth-manifest";

void save_manifest(const LabeledDataset& ds, const std::filesystem::path& root);
LabeledDataset load_manifest(const std::filesystem::path& root);

/// Directory name used for class k inside manifests and the cache.
std::string class_dir_name(int k);

}  // namespace augsynth
