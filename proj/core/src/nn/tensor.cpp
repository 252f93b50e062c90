#include "augsynth/nn/tensor.hpp"

#include <cmath>

namespace augsynth::nn {

void zero_grads(const ParamList& params) {
  for (auto* p : params) p->zero_grad();
}

std::vector<float> flatten_values(const ParamList& params) {
  std::vector<float> out;
  for (const auto* p : params) out.insert(out.end(), p->value.data(), p->value.data() + p->value.size());
  return out;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace augsynth::nn
