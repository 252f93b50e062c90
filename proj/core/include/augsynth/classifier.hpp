#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "augsynth/datamodel.hpp"
#include "augsynth/nn/layers.hpp"

namespace augsynth {

/// Shape of the desk-scale convolutional classifier:
///   conv3x3(c1) relu pool2 -> conv3x3(c2) relu pool2 -> dense(embed) relu -> dense(K)
/// The dense(embed) activations are the penultimate features.
struct ClassifierArch {
  int height = 28;
  int width = 28;
  int channels = 1;
  int conv1 = 8;
  int conv2 = 16;
  int embed_dim = 64;
  int num_classes = 10;
};

/// Logit-producing model with a separable last layer.
class ClassifierInterface {
 public:
  virtual ~ClassifierInterface() = default;
  virtual int num_classes() const = 0;
  /// Logits (B x K); caches activations for backward.
  virtual nn::Matrix forward(const nn::Matrix& x) = 0;
  virtual void backward(const nn::Matrix& grad_logits) = 0;
  /// Penultimate features (B x embed_dim).
  virtual nn::Matrix features(const nn::Matrix& x) = 0;
  virtual nn::ParamList params() = 0;
  virtual nn::ParamList backbone_params() = 0;
  virtual nn::ParamList head_params() = 0;
};

class ConvClassifier final : public ClassifierInterface {
 public:
  ConvClassifier(const ClassifierArch& arch, std::uint64_t init_seed);

  const ClassifierArch& arch() const noexcept { return arch_; }
  int num_classes() const override { return arch_.num_classes; }
  nn::Matrix forward(const nn::Matrix& x) override;
  void backward(const nn::Matrix& grad_logits) override;
  nn::Matrix features(const nn::Matrix& x) override;
  nn::ParamList params() override;
  nn::ParamList backbone_params() override { return backbone_.params(); }
  nn::ParamList head_params() override { return head_->params(); }

  /// Fresh random last layer, backbone untouched.
  void reset_head(std::uint64_t seed);
  /// Deep copy of all weights.
  std::unique_ptr<ConvClassifier> clone() const;

 private:
  ClassifierArch arch_;
  nn::Sequential backbone_;
  std::unique_ptr<nn::Linear> head_;
};

/// Stack images as network rows (channel-major per row).
nn::Matrix to_batch(std::span<const Image* const> images);
nn::Matrix to_batch(const LabeledDataset& ds, std::span<const std::size_t> indices);

std::uint64_t params_checksum(const nn::ParamList& params);

/// Argmax predictions over a whole dataset, in sample order.
std::vector<int> predict(ClassifierInterface& model, const LabeledDataset& ds, int batch = 256);

}  // namespace augsynth
