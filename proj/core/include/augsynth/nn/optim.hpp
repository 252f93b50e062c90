#pragma once

#include <vector>

#include "augsynth/nn/tensor.hpp"

namespace augsynth::nn {

/// Heavy-ball SGD with L2 weight decay folded into the gradient:
///   v <- mu*v + (g + wd*w);  w <- w - lr*v
class Sgd {
 public:
  Sgd(ParamList params, double momentum, double weight_decay);
  void step(double lr);

 private:
  ParamList params_;
  std::vector<Matrix> velocity_;
  double momentum_, weight_decay_;
};

/// Adam with bias correction.
class Adam {
 public:
  explicit Adam(ParamList params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
                double weight_decay = 0.0);
  void step(double lr);

 private:
  ParamList params_;
  std::vector<Matrix> m_, v_;
  double beta1_, beta2_, eps_, weight_decay_;
  long t_ = 0;
};

/// lr at step `step` of `total` under half-period cosine annealing to zero.
double cosine_lr(double base_lr, long step, long total) noexcept;

/// Global L2-norm clipping across all trainable gradients; returns the pre-clip norm.
double clip_grad_norm(const ParamList& params, double max_norm);

}  // namespace augsynth::nn
