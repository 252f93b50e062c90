#pragma once

#include <filesystem>
#include <string_view>

#include "augsynth/image.hpp"

namespace augsynth {

/// Binary netpbm: P5 for one channel, P6 for three. 8-bit, lossless for
/// pixels on the 1/255 grid.
void write_pnm(const Image& image, const std::filesystem::path& path);
Image read_pnm(const std::filesystem::path& path);
const char* pnm_extension(int channels);

/// Write to a sibling temp file then rename, so readers never observe a
/// partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace augsynth
