#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace augsynth {

/// H x W x C image with real pixels in [0,1], stored channels-last.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, float fill = 0.0f);
  Image(int height, int width, int channels, std::vector<float> pixels);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return pixels_.size(); }
  bool empty() const noexcept { return pixels_.empty(); }

  float& at(int y, int x, int c = 0) { return pixels_[index(y, x, c)]; }
  float at(int y, int x, int c = 0) const { return pixels_[index(y, x, c)]; }

  std::span<float> pixels() noexcept { return pixels_; }
  std::span<const float> pixels() const noexcept { return pixels_; }

  bool same_shape(const Image& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  /// True when every pixel lies in [0,1] and is finite.
  bool in_unit_range() const noexcept;

  /// Snap every pixel to the nearest multiple of 1/255 (the stored bit depth).
  void quantize();

  /// Channel-major (C, H, W) copy, the layout the networks consume.
  std::vector<float> to_planar() const;
  static Image from_planar(int height, int width, int channels, std::span<const float> planar);

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> pixels_;
};

}  // namespace augsynth
