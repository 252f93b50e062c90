#include "augsynth/generator/schedule.hpp"

#include <cmath>

#include "augsynth/error.hpp"

namespace augsynth::gen {

NoiseSchedule NoiseSchedule::linear(int T, double beta_start, double beta_end) {
  if (T <= 0) throw ParameterError("schedule needs T > 0");
  std::vector<double> betas(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t)
    betas[static_cast<std::size_t>(t)] = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * t / (T - 1);
  return from_betas(std::move(betas));
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  NoiseSchedule s;
  s.betas = std::move(betas);
  s.validate();
  double bar = 1.0;
  for (double b : s.betas) {
    s.alphas.push_back(1.0 - b);
    bar *= 1.0 - b;
    s.alpha_bars.push_back(bar);
  }
  return s;
}

void NoiseSchedule::validate() const {
  if (betas.empty()) throw ParameterError("schedule is empty");
  for (std::size_t t = 0; t < betas.size(); ++t) {
    if (!(betas[t] > 0.0 && betas[t] < 1.0)) throw ParameterError("betas must lie in (0,1)");
    if (t > 0 && betas[t] < betas[t - 1]) throw ParameterError("betas must be non-decreasing");
  }
}

std::vector<float> NoiseSchedule::noise_scales() const {
  std::vector<float> out;
  for (double ab : alpha_bars) out.push_back(static_cast<float>(std::sqrt(1.0 - ab)));
  return out;
}

nn::Matrix NoiseSchedule::diffuse(const nn::Matrix& x0, std::span<const int> t, const nn::Matrix& eps) const {
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols() || static_cast<Eigen::Index>(t.size()) != x0.rows())
    throw ParameterError("diffuse: shape mismatch");
  nn::Matrix out(x0.rows(), x0.cols());
  for (Eigen::Index r = 0; r < x0.rows(); ++r) {
    const int tr = t[static_cast<std::size_t>(r)];
    if (tr < 0 || tr >= steps()) throw ParameterError("diffuse: timestep out of range");
    const double ab = alpha_bars[static_cast<std::size_t>(tr)];
    out.row(r) = static_cast<float>(std::sqrt(ab)) * x0.row(r) + static_cast<float>(std::sqrt(1.0 - ab)) * eps.row(r);
  }
  return out;
}

std::vector<int> respaced_timesteps(int T, int steps) {
  if (steps <= 0 || steps > T) throw ParameterError("sampling steps must lie in [1, T]");
  std::vector<int> ts;
  for (int i = steps - 1; i >= 0; --i) {
    const double pos = steps == 1 ? T - 1 : static_cast<double>(i) * (T - 1) / (steps - 1);
    ts.push_back(static_cast<int>(std::lround(pos)));
  }
  return ts;
}

}  // namespace augsynth::gen
