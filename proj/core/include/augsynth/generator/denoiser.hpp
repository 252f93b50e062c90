#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "augsynth/nn/layers.hpp"

namespace augsynth::gen {

struct DenoiserConfig {
  int height = 28;
  int width = 28;
  int channels = 1;
  int embed_dim = 64;      // d of x~
  int time_features = 64;  // sinusoidal features
  int cond_width = 128;    // width of each half of the conditioning vector
  int base_channels = 16;  // full-resolution width; the half-resolution stage uses twice this
  int blocks = 2;          // residual blocks at half resolution
  int num_classes = 10;
  double null_probability = 0.1;

  int pixels() const noexcept { return height * width * channels; }
  void validate() const;
};

/// Per-example conditioning fed to the denoiser.
struct DenoiserCondition {
  nn::Matrix embeddings;     // B x d, x~ per row
  std::vector<int> labels;   // class per row
  std::vector<char> is_null; // 1 => learned null embedding replaces x~ and class
};

/// Small two-level convolutional noise predictor. The conditioning embedding
/// x~ (or the learned null vector) is projected, summed with a learned class
/// embedding, and concatenated onto the timestep embedding; the joint vector
/// adds a per-channel bias inside every residual block.
class Denoiser {
 public:
  Denoiser(const DenoiserConfig& cfg, std::uint64_t init_seed);
  ~Denoiser();
  Denoiser(const Denoiser&) = delete;
  Denoiser& operator=(const Denoiser&) = delete;

  const DenoiserConfig& config() const noexcept { return cfg_; }

  /// x_t in model space ([-1,1] scaled pixels), one row per example.
  nn::Matrix forward(const nn::Matrix& x_t, std::span<const int> timesteps, const DenoiserCondition& cond);
  /// Backprop dL/d(eps_pred) from the last forward.
  void backward(const nn::Matrix& grad_eps);

  nn::ParamList params();

  /// Per-timestep coefficient c_t: the output becomes c_t * x_t + net(x_t).
  /// With c_t = sqrt(1 - alpha_bar_t) the net only learns a correction to
  /// the noise estimate that is exact as the signal vanishes.
  void set_input_skip(std::vector<float> per_timestep) { input_skip_ = std::move(per_timestep); }

  struct ResBlock;

 private:
  DenoiserConfig cfg_;
  std::unique_ptr<nn::Linear> time_proj_;
  std::unique_ptr<nn::Linear> img_proj_;
  nn::Param class_embed_;  // (K+1) x cond_width, last row = null class
  nn::Param null_embed_;   // 1 x d
  nn::SiLU cond_act_;

  std::unique_ptr<nn::Conv2d> conv_in_;
  std::unique_ptr<ResBlock> down_block_;
  std::unique_ptr<nn::AvgPool2> pool_;
  std::unique_ptr<nn::Conv2d> widen_;
  std::vector<std::unique_ptr<ResBlock>> mid_blocks_;
  std::unique_ptr<nn::Upsample2> up_;
  std::unique_ptr<nn::Conv2d> merge_;
  std::unique_ptr<ResBlock> up_block_;
  nn::SiLU out_act_;
  std::unique_ptr<nn::Conv2d> conv_out_;

  std::vector<float> input_skip_;

  // forward caches
  std::vector<int> rows_class_;
  std::vector<char> rows_null_;
  nn::Matrix cond_act_out_;
};

/// Fixed sinusoidal features of integer timesteps.
nn::Matrix timestep_features(std::span<const int> timesteps, int dim);

}  // namespace augsynth::gen
