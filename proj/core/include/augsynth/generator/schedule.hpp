#pragma once

#include <span>
#include <vector>

#include "augsynth/nn/tensor.hpp"

namespace augsynth::gen {

/// Forward-process constants. betas[t] for t in [0, T).
struct NoiseSchedule {
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;

  int steps() const noexcept { return static_cast<int>(betas.size()); }

  /// Linearly spaced betas in [beta_start, beta_end].
  static NoiseSchedule linear(int T, double beta_start, double beta_end);
  static NoiseSchedule from_betas(std::vector<double> betas);

  /// sqrt(1 - alpha_bar_t) per timestep.
  std::vector<float> noise_scales() const;

  /// x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps, with t given per row.
  nn::Matrix diffuse(const nn::Matrix& x0, std::span<const int> t, const nn::Matrix& eps) const;

  /// Throws ParameterError unless 0 < b_1 <= ... <= b_T < 1.
  void validate() const;
};

/// Timesteps visited by a sampler with `steps` evaluations, descending from
/// T-1 to 0 and evenly spaced.
std::vector<int> respaced_timesteps(int T, int steps);

}  // namespace augsynth::gen
