#include "augsynth/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "augsynth/error.hpp"

namespace augsynth::nn {
namespace {

// Kaiming-uniform for ReLU-family fan-in.
void kaiming_uniform(Matrix& w, int fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / fan_in);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
}

Param make_param(std::string name, Eigen::Index rows, Eigen::Index cols) {
  Param p;
  p.name = std::move(name);
  p.value = Matrix::Zero(rows, cols);
  p.grad = Matrix::Zero(rows, cols);
  return p;
}

}  // namespace

Linear::Linear(int in, int out, Rng& rng, std::string name)
    : weight_(make_param(name + ".weight", in, out)), bias_(make_param(name + ".bias", 1, out)) {
  kaiming_uniform(weight_.value, in, rng);
}

Matrix Linear::forward(const Matrix& x) {
  input_ = x;
  Matrix y(x.rows(), weight_.value.cols());
  y.noalias() = x * weight_.value;
  y.rowwise() += bias_.value.row(0);
  return y;
}

Matrix Linear::backward(const Matrix& grad_out) {
  weight_.grad.noalias() += input_.transpose() * grad_out;
  bias_.grad.row(0) += grad_out.colwise().sum();
  Matrix dx(grad_out.rows(), weight_.value.rows());
  dx.noalias() = grad_out * weight_.value.transpose();
  return dx;
}

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int height, int width, Rng& rng, std::string name)
    : cin_(in_channels),
      cout_(out_channels),
      k_(kernel),
      h_(height),
      w_(width),
      weight_(make_param(name + ".weight", in_channels * kernel * kernel, out_channels)),
      bias_(make_param(name + ".bias", 1, out_channels)) {
  kaiming_uniform(weight_.value, in_channels * kernel * kernel, rng);
}

// cols_ is (cin*k*k) x (B*H*W): one row per kernel tap, so every copy below
// moves a contiguous run of pixels.
void Conv2d::im2col(const Matrix& x) {
  const Eigen::Index batch = x.rows();
  const int hw = h_ * w_;
  const int pad = k_ / 2;
  cols_.resize(static_cast<Eigen::Index>(cin_) * k_ * k_, batch * hw);
  for (int c = 0; c < cin_; ++c)
    for (int ky = 0; ky < k_; ++ky)
      for (int kx = 0; kx < k_; ++kx) {
        float* row = cols_.row((c * k_ + ky) * k_ + kx).data();
        const int dx = kx - pad;
        const int x0 = std::max(0, -dx), x1 = std::min(w_, w_ - dx);
        for (Eigen::Index b = 0; b < batch; ++b) {
          const float* plane = x.row(b).data() + static_cast<std::ptrdiff_t>(c) * hw;
          float* dst_img = row + b * hw;
          for (int y = 0; y < h_; ++y) {
            float* dst = dst_img + y * w_;
            const int iy = y + ky - pad;
            if (iy < 0 || iy >= h_ || x0 >= x1) {
              std::fill(dst, dst + w_, 0.0f);
              continue;
            }
            std::fill(dst, dst + x0, 0.0f);
            std::copy(plane + iy * w_ + x0 + dx, plane + iy * w_ + x1 + dx, dst + x0);
            std::fill(dst + x1, dst + w_, 0.0f);
          }
        }
      }
}

Matrix Conv2d::col2im(const Matrix& dcols, Eigen::Index batch) const {
  const int hw = h_ * w_;
  const int pad = k_ / 2;
  Matrix dx = Matrix::Zero(batch, static_cast<Eigen::Index>(cin_) * hw);
  for (int c = 0; c < cin_; ++c)
    for (int ky = 0; ky < k_; ++ky)
      for (int kx = 0; kx < k_; ++kx) {
        const float* row = dcols.row((c * k_ + ky) * k_ + kx).data();
        const int ddx = kx - pad;
        const int x0 = std::max(0, -ddx), x1 = std::min(w_, w_ - ddx);
        if (x0 >= x1) continue;
        for (Eigen::Index b = 0; b < batch; ++b) {
          float* plane = dx.row(b).data() + static_cast<std::ptrdiff_t>(c) * hw;
          const float* src_img = row + b * hw;
          for (int y = 0; y < h_; ++y) {
            const int iy = y + ky - pad;
            if (iy < 0 || iy >= h_) continue;
            const float* src = src_img + y * w_;
            float* dst = plane + iy * w_ + ddx;
            for (int xo = x0; xo < x1; ++xo) dst[xo] += src[xo];
          }
        }
      }
  return dx;
}

Matrix Conv2d::forward(const Matrix& x) {
  const Eigen::Index batch = x.rows();
  const int hw = h_ * w_;
  im2col(x);
  Matrix res(cout_, cols_.cols());
  res.noalias() = weight_.value.transpose() * cols_;
  Matrix out(batch, static_cast<Eigen::Index>(cout_) * hw);
  for (Eigen::Index b = 0; b < batch; ++b)
    for (int c = 0; c < cout_; ++c)
      out.row(b).segment(static_cast<Eigen::Index>(c) * hw, hw) =
          res.row(c).segment(b * hw, hw).array() + bias_.value(0, c);
  return out;
}

Matrix Conv2d::backward(const Matrix& grad_out) {
  const Eigen::Index batch = grad_out.rows();
  const int hw = h_ * w_;
  Matrix gres(cout_, batch * hw);
  for (Eigen::Index b = 0; b < batch; ++b)
    for (int c = 0; c < cout_; ++c)
      gres.row(c).segment(b * hw, hw) = grad_out.row(b).segment(static_cast<Eigen::Index>(c) * hw, hw);
  weight_.grad.noalias() += cols_ * gres.transpose();
  bias_.grad.row(0) += gres.rowwise().sum().transpose();
  Matrix dcols(weight_.value.rows(), gres.cols());
  dcols.noalias() = weight_.value * gres;
  return col2im(dcols, batch);
}

Matrix ReLU::forward(const Matrix& x) {
  mask_ = (x.array() > 0.0f).cast<float>().matrix();
  return x.cwiseMax(0.0f);
}

Matrix ReLU::backward(const Matrix& grad_out) { return grad_out.cwiseProduct(mask_); }

Matrix SiLU::forward(const Matrix& x) {
  input_ = x;
  return (x.array() / (1.0f + (-x.array()).exp())).matrix();
}

Matrix SiLU::backward(const Matrix& grad_out) {
  const auto sig = 1.0f / (1.0f + (-input_.array()).exp());
  return (grad_out.array() * sig * (1.0f + input_.array() * (1.0f - sig))).matrix();
}

MaxPool2::MaxPool2(int channels, int height, int width) : c_(channels), h_(height), w_(width) {}

Matrix MaxPool2::forward(const Matrix& x) {
  const int oh = h_ / 2, ow = w_ / 2;
  const Eigen::Index batch = x.rows();
  Matrix out(batch, static_cast<Eigen::Index>(c_) * oh * ow);
  argmax_.assign(static_cast<std::size_t>(out.size()), 0);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int c = 0; c < c_; ++c) {
      for (int y = 0; y < oh; ++y) {
        for (int xo = 0; xo < ow; ++xo) {
          float best = -std::numeric_limits<float>::infinity();
          int best_idx = 0;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const int idx = c * h_ * w_ + (2 * y + dy) * w_ + (2 * xo + dx);
              const float v = x(b, idx);
              if (v > best) {
                best = v;
                best_idx = idx;
              }
            }
          }
          const Eigen::Index o = c * oh * ow + y * ow + xo;
          out(b, o) = best;
          argmax_[static_cast<std::size_t>(b * out.cols() + o)] = best_idx;
        }
      }
    }
  }
  return out;
}

Matrix MaxPool2::backward(const Matrix& grad_out) {
  Matrix dx = Matrix::Zero(grad_out.rows(), static_cast<Eigen::Index>(c_) * h_ * w_);
  for (Eigen::Index b = 0; b < grad_out.rows(); ++b)
    for (Eigen::Index o = 0; o < grad_out.cols(); ++o)
      dx(b, argmax_[static_cast<std::size_t>(b * grad_out.cols() + o)]) += grad_out(b, o);
  return dx;
}

AvgPool2::AvgPool2(int channels, int height, int width) : c_(channels), h_(height), w_(width) {
  if (h_ % 2 != 0 || w_ % 2 != 0) throw ParameterError("AvgPool2 needs even height and width");
}

Matrix AvgPool2::forward(const Matrix& x) {
  const int oh = h_ / 2, ow = w_ / 2;
  Matrix out(x.rows(), static_cast<Eigen::Index>(c_) * oh * ow);
  for (Eigen::Index b = 0; b < x.rows(); ++b)
    for (int c = 0; c < c_; ++c)
      for (int y = 0; y < oh; ++y)
        for (int xo = 0; xo < ow; ++xo) {
          const int i = c * h_ * w_ + 2 * y * w_ + 2 * xo;
          out(b, c * oh * ow + y * ow + xo) = 0.25f * (x(b, i) + x(b, i + 1) + x(b, i + w_) + x(b, i + w_ + 1));
        }
  return out;
}

Matrix AvgPool2::backward(const Matrix& grad_out) {
  const int oh = h_ / 2, ow = w_ / 2;
  Matrix dx(grad_out.rows(), static_cast<Eigen::Index>(c_) * h_ * w_);
  for (Eigen::Index b = 0; b < grad_out.rows(); ++b)
    for (int c = 0; c < c_; ++c)
      for (int y = 0; y < h_; ++y)
        for (int xo = 0; xo < w_; ++xo)
          dx(b, c * h_ * w_ + y * w_ + xo) = 0.25f * grad_out(b, c * oh * ow + (y / 2) * ow + xo / 2);
  return dx;
}

Upsample2::Upsample2(int channels, int height, int width) : c_(channels), h_(height), w_(width) {}

Matrix Upsample2::forward(const Matrix& x) {
  const int oh = 2 * h_, ow = 2 * w_;
  Matrix out(x.rows(), static_cast<Eigen::Index>(c_) * oh * ow);
  for (Eigen::Index b = 0; b < x.rows(); ++b)
    for (int c = 0; c < c_; ++c)
      for (int y = 0; y < oh; ++y)
        for (int xo = 0; xo < ow; ++xo) out(b, c * oh * ow + y * ow + xo) = x(b, c * h_ * w_ + (y / 2) * w_ + xo / 2);
  return out;
}

Matrix Upsample2::backward(const Matrix& grad_out) {
  const int oh = 2 * h_, ow = 2 * w_;
  Matrix dx = Matrix::Zero(grad_out.rows(), static_cast<Eigen::Index>(c_) * h_ * w_);
  for (Eigen::Index b = 0; b < grad_out.rows(); ++b)
    for (int c = 0; c < c_; ++c)
      for (int y = 0; y < oh; ++y)
        for (int xo = 0; xo < ow; ++xo) dx(b, c * h_ * w_ + (y / 2) * w_ + xo / 2) += grad_out(b, c * oh * ow + y * ow + xo);
  return dx;
}

Matrix Sequential::forward(const Matrix& x) {
  Matrix h = x;
  for (auto& layer : layers_) h = layer->forward(h);
  return h;
}

Matrix Sequential::backward(const Matrix& grad_out) {
  Matrix g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

ParamList Sequential::params() {
  ParamList out;
  for (auto& layer : layers_) {
    auto p = layer->params();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

}  // namespace augsynth::nn
