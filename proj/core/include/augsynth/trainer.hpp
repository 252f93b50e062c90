#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "augsynth/classifier.hpp"
#include "augsynth/curriculum.hpp"

namespace augsynth {

enum class LrSchedule { cosine, constant };
enum class LossKind { balanced_softmax, cross_entropy };

std::string_view to_string(LrSchedule s) noexcept;
std::string_view to_string(LossKind k) noexcept;
LrSchedule parse_lr_schedule(std::string_view s);
LossKind parse_loss(std::string_view s);

struct TrainConfig {
  int epochs = 150;
  int batch = 512;
  double lr = 0.2;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  LrSchedule schedule = LrSchedule::cosine;
  LossKind loss = LossKind::balanced_softmax;
  double real_fraction = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct FineTuneConfig {
  int epochs = 50;
  double lr = 1e-4;
  int batch = 32;
  LossKind loss = LossKind::cross_entropy;
  double real_fraction = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// -log( n_y e^{z_y} / sum_k n_k e^{z_k} ), evaluated with a max shift.
double balanced_softmax_loss(std::span<const double> logits, int label, std::span<const std::int64_t> class_counts);
/// Gradient of balanced_softmax_loss w.r.t. the logits.
std::vector<double> balanced_softmax_grad(std::span<const double> logits, int label,
                                          std::span<const std::int64_t> class_counts);
double cross_entropy_loss(std::span<const double> logits, int label);

/// Mean loss over a batch and dL/dlogits. Pass class_counts for the
/// balanced variant, an empty span for plain cross-entropy.
double batch_loss(const nn::Matrix& logits, std::span<const int> labels, std::span<const std::int64_t> class_counts,
                  nn::Matrix& grad);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double val_top1 = 0.0;
  double lr = 0.0;
};

/// Append-only JSON-lines log, one record per epoch.
class MetricLog {
 public:
  explicit MetricLog(std::filesystem::path path) : path_(std::move(path)) {}
  void append(const EpochMetrics& m, std::string_view run) const;
  static std::vector<EpochMetrics> read(const std::filesystem::path& path);

 private:
  std::filesystem::path path_;
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  std::uint64_t weights_checksum = 0;
};

/// Momentum SGD on balanced softmax (or cross-entropy) over deterministic
/// real/synthetic batches. An empty `synth` trains on all-real batches.
/// `class_counts` are the training label frequencies used by the balanced
/// loss (real + synthetic by default when empty).
TrainResult train_from_scratch(ConvClassifier& model, const LabeledDataset& real, const LabeledDataset& synth,
                               const LabeledDataset& val, const TrainConfig& cfg,
                               const MetricLog* log = nullptr, std::span<const std::int64_t> class_counts = {});

struct FewShotReport {
  std::int64_t shots = 0;
  std::vector<std::uint64_t> trial_seeds;
  std::vector<double> trial_best_acc;
  double mean = 0.0;
  double variance = 0.0;
  std::uint64_t backbone_checksum_before = 0;
  std::uint64_t backbone_checksum_after = 0;
};

/// Adam on the last layer only, stochastic 50/50 batches, best validation
/// top-1 across epochs per trial. `pretrained` is never modified; each trial
/// fine-tunes a copy with a freshly initialised head.
FewShotReport finetune_last_layer(const ConvClassifier* pretrained, std::span<const FewShotTrial> trials,
                                  const LabeledDataset& synth, const LabeledDataset& val,
                                  const FineTuneConfig& cfg);

double top1_accuracy(std::span<const int> predictions, const LabeledDataset& ds);

// Checkpoints: <dir>/weights.bin + <dir>/checkpoint.json (architecture,
// config, seed, metric history).
void save_checkpoint(ConvClassifier& model, const std::filesystem::path& dir, const std::string& config_json,
                     std::uint64_t seed, std::span<const EpochMetrics> history);
std::unique_ptr<ConvClassifier> load_checkpoint(const std::filesystem::path& dir);

}  // namespace augsynth
