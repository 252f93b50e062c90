#pragma once

#include <memory>
#include <mutex>
#include <span>
#include <string>

#include "augsynth/augcond.hpp"
#include "augsynth/classifier.hpp"

namespace augsynth::gen {

struct EncoderTrainConfig {
  int epochs = 12;
  int batch = 64;
  double lr = 2e-3;
  std::uint64_t seed = 7;
};

/// Stand-in image encoder: the penultimate layer of a small classifier
/// trained on the full training split.
class ConvEncoder final : public ImageEncoder {
 public:
  explicit ConvEncoder(std::unique_ptr<ConvClassifier> model);

  EmbeddingVector encode(const Image& image) const override;
  std::size_t embedding_dim() const override;
  std::string id() const override { return id_; }

  /// B x d features for a batch of images.
  nn::Matrix encode_batch(std::span<const Image* const> images) const;
  nn::Matrix encode_dataset(const LabeledDataset& ds) const;

  ConvClassifier& model() noexcept { return *model_; }
  const ConvClassifier& model() const noexcept { return *model_; }

 private:
  std::unique_ptr<ConvClassifier> model_;
  std::string id_;
  mutable std::mutex mu_;  // forward passes mutate layer caches
};

/// Trains the encoder's classifier with cross-entropy on the training split.
/// Returns per-epoch mean loss.
std::vector<double> train_encoder(ConvClassifier& model, const LabeledDataset& ds, const EncoderTrainConfig& cfg);

}  // namespace augsynth::gen
