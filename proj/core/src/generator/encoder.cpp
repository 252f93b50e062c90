#include "augsynth/generator/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "augsynth/error.hpp"
#include "augsynth/hash.hpp"
#include "augsynth/nn/optim.hpp"
#include "augsynth/trainer.hpp"

namespace augsynth::gen {

ConvEncoder::ConvEncoder(std::unique_ptr<ConvClassifier> model) : model_(std::move(model)) {
  if (!model_) throw ParameterError("encoder needs a trained model");
  id_ = "conv-encoder:" + sha256_hex(nn::flatten_values(model_->backbone_params())).substr(0, 16);
}

std::size_t ConvEncoder::embedding_dim() const { return static_cast<std::size_t>(model_->arch().embed_dim); }

EmbeddingVector ConvEncoder::encode(const Image& image) const {
  const Image* one[] = {&image};
  const nn::Matrix f = encode_batch(one);
  EmbeddingVector e;
  e.values.assign(f.data(), f.data() + f.cols());
  e.encoder_id = id_;
  return e;
}

nn::Matrix ConvEncoder::encode_batch(std::span<const Image* const> images) const {
  std::lock_guard lock(mu_);
  return model_->features(to_batch(images));
}

nn::Matrix ConvEncoder::encode_dataset(const LabeledDataset& ds) const {
  nn::Matrix out(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(embedding_dim()));
  std::vector<const Image*> chunk;
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < ds.size(); start += kChunk) {
    chunk.clear();
    for (std::size_t i = start; i < std::min(ds.size(), start + kChunk); ++i) chunk.push_back(&ds[i].pixels);
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(chunk.size())) = encode_batch(chunk);
  }
  return out;
}

std::vector<double> train_encoder(ConvClassifier& model, const LabeledDataset& ds, const EncoderTrainConfig& cfg) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds[i].split == Split::train) order.push_back(i);
  if (order.empty()) throw TrainingError("encoder training set is empty");
  auto params = model.params();
  nn::Adam opt(params);
  Rng rng(cfg.seed);
  const long steps_per_epoch = static_cast<long>((order.size() + cfg.batch - 1) / cfg.batch);
  const long total = steps_per_epoch * cfg.epochs;
  long step = 0;
  std::vector<double> losses;
  std::vector<int> labels;
  nn::Matrix grad;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    double sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::span<const std::size_t> idx(order.data() + start,
                                             std::min(order.size() - start, static_cast<std::size_t>(cfg.batch)));
      labels.clear();
      for (auto i : idx) labels.push_back(ds[i].label);
      nn::zero_grads(params);
      const nn::Matrix logits = model.forward(to_batch(ds, idx));
      const double loss = batch_loss(logits, labels, {}, grad);
      if (!std::isfinite(loss)) throw TrainingError("encoder loss diverged at epoch " + std::to_string(epoch));
      model.backward(grad);
      opt.step(nn::cosine_lr(cfg.lr, step++, total));
      sum += loss * static_cast<double>(idx.size());
    }
    losses.push_back(sum / static_cast<double>(order.size()));
  }
  return losses;
}

}  // namespace augsynth::gen
