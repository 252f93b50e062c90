#include "augsynth/image.hpp"

#include <cmath>

#include "augsynth/error.hpp"

namespace augsynth {

Image::Image(int height, int width, int channels, float fill)
    : height_(height),
      width_(width),
      channels_(channels),
      pixels_(static_cast<std::size_t>(height) * width * channels, fill) {
  if (height < 0 || width < 0 || channels < 0) throw ParameterError("negative image dimension");
}

Image::Image(int height, int width, int channels, std::vector<float> pixels)
    : height_(height), width_(width), channels_(channels), pixels_(std::move(pixels)) {
  if (pixels_.size() != static_cast<std::size_t>(height) * width * channels)
    throw ParameterError("pixel buffer does not match image shape");
}

bool Image::in_unit_range() const noexcept {
  for (float v : pixels_)
    if (!(v >= 0.0f && v <= 1.0f)) return false;
  return true;
}

void Image::quantize() {
  for (float& v : pixels_) {
    const float c = std::isfinite(v) ? std::fmin(1.0f, std::fmax(0.0f, v)) : 0.0f;
    v = std::nearbyint(c * 255.0f) / 255.0f;
  }
}

std::vector<float> Image::to_planar() const {
  std::vector<float> out(pixels_.size());
  const std::size_t hw = static_cast<std::size_t>(height_) * width_;
  for (std::size_t p = 0; p < hw; ++p)
    for (int c = 0; c < channels_; ++c) out[c * hw + p] = pixels_[p * channels_ + c];
  return out;
}

Image Image::from_planar(int height, int width, int channels, std::span<const float> planar) {
  Image img(height, width, channels);
  const std::size_t hw = static_cast<std::size_t>(height) * width;
  if (planar.size() != hw * channels) throw ParameterError("planar buffer does not match image shape");
  for (std::size_t p = 0; p < hw; ++p)
    for (int c = 0; c < channels; ++c) img.pixels_[p * channels + c] = planar[c * hw + p];
  return img;
}

}  // namespace augsynth
