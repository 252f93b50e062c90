#pragma once

#include <memory>
#include <string>
#include <vector>

#include "augsynth/nn/tensor.hpp"
#include "augsynth/rng.hpp"

namespace augsynth::nn {

/// A differentiable stage. forward caches what backward needs, so a layer
/// instance serves one forward/backward pair at a time.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Matrix forward(const Matrix& x) = 0;
  /// Returns dL/dx and accumulates parameter gradients.
  virtual Matrix backward(const Matrix& grad_out) = 0;
  virtual ParamList params() { return {}; }
};

class Linear final : public Layer {
 public:
  Linear(int in, int out, Rng& rng, std::string name = "linear");

  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out) override;
  ParamList params() override { return {&weight_, &bias_}; }

  int in_features() const noexcept { return static_cast<int>(weight_.value.rows()); }
  int out_features() const noexcept { return static_cast<int>(weight_.value.cols()); }
  Param& weight() noexcept { return weight_; }
  Param& bias() noexcept { return bias_; }

 private:
  Param weight_;  // in x out
  Param bias_;    // 1 x out
  Matrix input_;
};

/// 'same'-padded stride-1 square convolution over channel-major rows.
class Conv2d final : public Layer {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int height, int width, Rng& rng, std::string name = "conv");

  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out) override;
  ParamList params() override { return {&weight_, &bias_}; }

 private:
  void im2col(const Matrix& x);
  Matrix col2im(const Matrix& dcols, Eigen::Index batch) const;

  int cin_, cout_, k_, h_, w_;
  Param weight_;  // (cin*k*k) x cout
  Param bias_;    // 1 x cout
  Matrix cols_;   // (cin*k*k) x (B*H*W)
};

class ReLU final : public Layer {
 public:
  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out) override;

 private:
  Matrix mask_;
};

class SiLU final : public Layer {
 public:
  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out) override;

 private:
  Matrix input_;
};

/// 2x2 max pooling, stride 2, over channel-major rows.
class MaxPool2 final : public Layer {
 public:
  MaxPool2(int channels, int height, int width);

  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out) override;

 private:
  int c_, h_, w_;
  std::vector<int> argmax_;
};

/// 2x2 average pooling, stride 2, over channel-major rows. Height and width must be even.
class AvgPool2 final : public Layer {
 public:
  AvgPool2(int channels, int height, int width);

  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out) override;

 private:
  int c_, h_, w_;
};

/// Nearest-neighbour 2x upsampling; (height, width) is the input size.
class Upsample2 final : public Layer {
 public:
  Upsample2(int channels, int height, int width);

  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out) override;

 private:
  int c_, h_, w_;
};

class Sequential final : public Layer {
 public:
  Sequential() = default;

  template <class L, class... Args>
  L& emplace(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out) override;
  ParamList params() override;

  std::size_t size() const noexcept { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace augsynth::nn
