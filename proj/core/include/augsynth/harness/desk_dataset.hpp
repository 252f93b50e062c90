#pragma once

#include <cstdint>

#include "augsynth/datamodel.hpp"

namespace augsynth::harness {

/// Procedural 10-class grayscale shape dataset (disk, ring, square,
/// triangle, plus, cross, horizontal bars, vertical bars, dot pair, line).
/// Every image varies in position, scale, rotation, stroke, contrast,
/// background, and noise; pixels are on the 8-bit grid.
struct DeskDatasetConfig {
  int size = 28;
  int train_per_class = 200;
  int val_per_class = 50;
  int test_per_class = 50;
  std::uint64_t seed = 1;
};

LabeledDataset make_desk_dataset(const DeskDatasetConfig& cfg);

/// One image of class k; exposed for tests.
Image render_desk_image(int class_k, int size, std::uint64_t seed);

}  // namespace augsynth::harness
