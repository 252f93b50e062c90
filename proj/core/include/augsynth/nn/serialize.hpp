#pragma once

#include <filesystem>

#include "augsynth/nn/tensor.hpp"

namespace augsynth::nn {

/// Little binary blob: magic, count, then per param (name, rows, cols, floats).
void save_params(const ParamList& params, const std::filesystem::path& path);
/// Names and shapes must match the destination exactly.
void load_params(const ParamList& params, const std::filesystem::path& path);

}  // namespace augsynth::nn
