#pragma once

// Record-level (de)serialization shared by manifests and the synthetic cache index.

#include <nlohmann/json.hpp>

#include "augsynth/datamodel.hpp"

namespace augsynth::detail {

nlohmann::json provenance_to_json(const Provenance& p);
nlohmann::json record_to_json(const ImageSample& s, const std::string& relative_path);

/// Parses one record's metadata (pixels excluded). Throws ManifestError
/// naming `index` on any problem; `num_classes` < 0 skips the label bound.
ImageSample record_from_json(const nlohmann::json& rec, std::size_t index, int num_classes, std::string& path_out);

}  // namespace augsynth::detail
