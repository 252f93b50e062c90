#include "augsynth/classifier.hpp"

#include <algorithm>

#include "augsynth/error.hpp"
#include "augsynth/hash.hpp"
#include "augsynth/rng.hpp"

namespace augsynth {

ConvClassifier::ConvClassifier(const ClassifierArch& arch, std::uint64_t init_seed) : arch_(arch) {
  if (arch.height % 4 != 0 || arch.width % 4 != 0)
    throw ConfigError("classifier input height and width must be multiples of 4");
  if (arch.conv1 <= 0 || arch.conv2 <= 0 || arch.embed_dim <= 0 || arch.num_classes <= 0 || arch.channels <= 0)
    throw ConfigError("classifier dimensions must be positive");
  Rng rng(init_seed);
  const int h = arch.height, w = arch.width;
  backbone_.emplace<nn::Conv2d>(arch.channels, arch.conv1, 3, h, w, rng, "conv1");
  backbone_.emplace<nn::ReLU>();
  backbone_.emplace<nn::MaxPool2>(arch.conv1, h, w);
  backbone_.emplace<nn::Conv2d>(arch.conv1, arch.conv2, 3, h / 2, w / 2, rng, "conv2");
  backbone_.emplace<nn::ReLU>();
  backbone_.emplace<nn::MaxPool2>(arch.conv2, h / 2, w / 2);
  backbone_.emplace<nn::Linear>(arch.conv2 * (h / 4) * (w / 4), arch.embed_dim, rng, "embed");
  backbone_.emplace<nn::ReLU>();
  head_ = std::make_unique<nn::Linear>(arch.embed_dim, arch.num_classes, rng, "head");
}

nn::Matrix ConvClassifier::forward(const nn::Matrix& x) { return head_->forward(backbone_.forward(x)); }

void ConvClassifier::backward(const nn::Matrix& grad_logits) { backbone_.backward(head_->backward(grad_logits)); }

nn::Matrix ConvClassifier::features(const nn::Matrix& x) { return backbone_.forward(x); }

nn::ParamList ConvClassifier::params() {
  auto p = backbone_.params();
  auto h = head_->params();
  p.insert(p.end(), h.begin(), h.end());
  return p;
}

void ConvClassifier::reset_head(std::uint64_t seed) {
  Rng rng(seed);
  head_ = std::make_unique<nn::Linear>(arch_.embed_dim, arch_.num_classes, rng, "head");
}

std::unique_ptr<ConvClassifier> ConvClassifier::clone() const {
  auto copy = std::make_unique<ConvClassifier>(arch_, 0);
  auto src = const_cast<ConvClassifier*>(this)->params();
  auto dst = copy->params();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
  return copy;
}

nn::Matrix to_batch(std::span<const Image* const> images) {
  if (images.empty()) return {};
  const auto n = static_cast<Eigen::Index>(images.front()->size());
  nn::Matrix m(static_cast<Eigen::Index>(images.size()), n);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (static_cast<Eigen::Index>(images[i]->size()) != n) throw DataError("images in a batch differ in size");
    const auto planar = images[i]->to_planar();
    std::copy(planar.begin(), planar.end(), m.row(static_cast<Eigen::Index>(i)).data());
  }
  return m;
}

nn::Matrix to_batch(const LabeledDataset& ds, std::span<const std::size_t> indices) {
  std::vector<const Image*> imgs;
  imgs.reserve(indices.size());
  for (auto i : indices) imgs.push_back(&ds[i].pixels);
  return to_batch(imgs);
}

std::uint64_t params_checksum(const nn::ParamList& params) { return checksum(nn::flatten_values(params)); }

std::vector<int> predict(ClassifierInterface& model, const LabeledDataset& ds, int batch) {
  std::vector<int> out;
  out.reserve(ds.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ds.size(); start += static_cast<std::size_t>(batch)) {
    idx.clear();
    for (std::size_t i = start; i < std::min(ds.size(), start + static_cast<std::size_t>(batch)); ++i) idx.push_back(i);
    const nn::Matrix logits = model.forward(to_batch(ds, idx));
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      Eigen::Index arg = 0;
      logits.row(r).maxCoeff(&arg);
      out.push_back(static_cast<int>(arg));
    }
  }
  return out;
}

}  // namespace augsynth
