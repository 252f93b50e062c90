#include "augsynth/harness/desk_dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "augsynth/error.hpp"
#include "augsynth/rng.hpp"

namespace augsynth::harness {

namespace {

constexpr std::array<const char*, 10> kShapeNames = {"disk", "ring",   "square", "triangle", "plus",
                                                      "cross", "hbars", "vbars",  "dots",     "line"};

double seg_dist(double u, double v, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double t = std::clamp(((u - ax) * dx + (v - ay) * dy) / (dx * dx + dy * dy), 0.0, 1.0);
  return std::hypot(u - ax - t * dx, v - ay - t * dy);
}

// Point (u,v) in the shape's unit frame; w is the half stroke width in the same units.
bool inside(int k, double u, double v, double w) {
  const double r = std::hypot(u, v);
  switch (k) {
    case 0: return r <= 0.8;
    case 1: return std::abs(r - 0.72) <= w;
    case 2: return std::max(std::abs(u), std::abs(v)) <= 0.68;
    case 3: {
      // apex up, base at v = 0.6
      if (v > 0.6 || v < -0.85) return false;
      const double half = 0.8 * (v + 0.85) / 1.45;
      return std::abs(u) <= half;
    }
    case 4: return (std::abs(u) <= w && std::abs(v) <= 0.85) || (std::abs(v) <= w && std::abs(u) <= 0.85);
    case 5: return seg_dist(u, v, -0.65, -0.65, 0.65, 0.65) <= w || seg_dist(u, v, -0.65, 0.65, 0.65, -0.65) <= w;
    case 6:
      return std::abs(u) <= 0.8 && (std::abs(v + 0.6) <= w || std::abs(v) <= w || std::abs(v - 0.6) <= w);
    case 7:
      return std::abs(v) <= 0.8 && (std::abs(u + 0.6) <= w || std::abs(u) <= w || std::abs(u - 0.6) <= w);
    case 8: return std::hypot(u - 0.5, v) <= 0.3 || std::hypot(u + 0.5, v) <= 0.3;
    case 9: return seg_dist(u, v, -0.75, 0.75, 0.75, -0.75) <= w;
    default: return false;
  }
}

}  // namespace

Image render_desk_image(int class_k, int size, std::uint64_t seed) {
  if (class_k < 0 || class_k >= static_cast<int>(kShapeNames.size()))
    throw ParameterError("desk class must lie in [0,9]");
  if (size < 8) throw ParameterError("desk image size must be >= 8");
  Rng rng(seed);
  const double half = size / 2.0;
  const double cx = half + rng.uniform() * 6.0 - 3.0;
  const double cy = half + rng.uniform() * 6.0 - 3.0;
  const double scale = size * 0.35 * (0.7 + 0.3 * rng.uniform());
  const double theta = (rng.uniform() * 30.0 - 15.0) * std::numbers::pi / 180.0;
  const double stroke = 1.5 + 1.3 * rng.uniform();  // pixels
  const double bg = 0.25 * rng.uniform();
  const double fg = std::min(1.0, bg + 0.5 + 0.25 * rng.uniform());
  const double w = stroke / (2.0 * scale);
  const bool blob = rng.bernoulli(0.5);
  const double bx = rng.uniform() * size, by = rng.uniform() * size;
  const double ct = std::cos(theta), st = std::sin(theta);

  Image img(size, size, 1);
  constexpr int ss = 3;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      int hit = 0;
      for (int sy = 0; sy < ss; ++sy) {
        for (int sx = 0; sx < ss; ++sx) {
          const double px = x + (sx + 0.5) / ss - cx;
          const double py = y + (sy + 0.5) / ss - cy;
          const double u = (ct * px + st * py) / scale;
          const double v = (-st * px + ct * py) / scale;
          hit += inside(class_k, u, v, w) ? 1 : 0;
        }
      }
      double p = bg + (fg - bg) * hit / double(ss * ss);
      if (blob) p += 0.3 * std::exp(-((x - bx) * (x - bx) + (y - by) * (y - by)) / (2.0 * 1.5 * 1.5));
      p += 0.04 * rng.normal();
      img.at(y, x) = static_cast<float>(std::clamp(p, 0.0, 1.0));
    }
  }
  img.quantize();
  return img;
}

LabeledDataset make_desk_dataset(const DeskDatasetConfig& cfg) {
  if (cfg.train_per_class < 1 || cfg.val_per_class < 0 || cfg.test_per_class < 0)
    throw ConfigError("desk dataset split sizes must be non-negative (train >= 1)");
  LabeledDataset ds(std::vector<std::string>(kShapeNames.begin(), kShapeNames.end()));
  const std::array<std::pair<Split, int>, 3> splits = {
      {{Split::train, cfg.train_per_class}, {Split::val, cfg.val_per_class}, {Split::test, cfg.test_per_class}}};
  for (const auto& [split, n] : splits) {
    for (int k = 0; k < static_cast<int>(kShapeNames.size()); ++k) {
      for (int i = 0; i < n; ++i) {
        ImageSample s;
        s.id = std::string(to_string(split)) + "-" + kShapeNames[static_cast<std::size_t>(k)] + "-" + std::to_string(i);
        s.label = k;
        s.split = split;
        s.pixels = render_desk_image(
            k, cfg.size,
            derive_seed(cfg.seed, {tag_of(to_string(split)), static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i)}));
        ds.add(std::move(s));
      }
    }
  }
  return ds;
}

}  // namespace augsynth::harness
