#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

namespace augsynth::nn {

/// Batch-major activations: one row per example.
using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<float, 1, Eigen::Dynamic>;

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

using ParamList = std::vector<Param*>;

void zero_grads(const ParamList& params);
/// Flatten all values (in list order) for checksums and serialization.
std::vector<float> flatten_values(const ParamList& params);
bool all_finite(const Matrix& m);

}  // namespace augsynth::nn
