#include "augsynth/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "augsynth/error.hpp"
#include "augsynth/image_io.hpp"
#include "augsynth/nn/optim.hpp"
#include "augsynth/nn/serialize.hpp"

namespace augsynth {

using nlohmann::json;

std::string_view to_string(LrSchedule s) noexcept { return s == LrSchedule::cosine ? "cosine" : "constant"; }
std::string_view to_string(LossKind k) noexcept {
  return k == LossKind::balanced_softmax ? "balanced_softmax" : "cross_entropy";
}

LrSchedule parse_lr_schedule(std::string_view s) {
  if (s == "cosine") return LrSchedule::cosine;
  if (s == "constant") return LrSchedule::constant;
  throw ConfigError("unknown lr schedule '" + std::string(s) + "'");
}

LossKind parse_loss(std::string_view s) {
  if (s == "balanced_softmax") return LossKind::balanced_softmax;
  if (s == "cross_entropy") return LossKind::cross_entropy;
  throw ConfigError("unknown loss '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1 || batch < 1) throw ConfigError("epochs and batch must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0,1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
  if (!(real_fraction >= 0.0 && real_fraction <= 1.0)) throw ConfigError("real_fraction must lie in [0,1]");
}

void FineTuneConfig::validate() const {
  if (epochs < 1 || batch < 1) throw ConfigError("epochs and batch must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(real_fraction >= 0.0 && real_fraction <= 1.0)) throw ConfigError("real_fraction must lie in [0,1]");
}

namespace {

// Shifted logits z_k + log n_k, with -inf for empty classes.
std::vector<double> adjusted(std::span<const double> logits, std::span<const std::int64_t> counts) {
  if (!counts.empty() && counts.size() != logits.size())
    throw ParameterError("class_counts has " + std::to_string(counts.size()) + " entries for " +
                         std::to_string(logits.size()) + " logits");
  std::vector<double> a(logits.begin(), logits.end());
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] < 0) throw ParameterError("class counts must be non-negative");
    a[k] = counts[k] == 0 ? -std::numeric_limits<double>::infinity() : a[k] + std::log(static_cast<double>(counts[k]));
  }
  return a;
}

double log_sum_exp(std::span<const double> a) {
  const double m = *std::max_element(a.begin(), a.end());
  double s = 0.0;
  for (double v : a) s += std::exp(v - m);
  return m + std::log(s);
}

void check_label(std::span<const double> logits, int label, std::span<const std::int64_t> counts) {
  if (logits.empty()) throw ParameterError("empty logits");
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size())
    throw ParameterError("label " + std::to_string(label) + " out of range");
  if (!counts.empty() && static_cast<std::size_t>(label) < counts.size() && counts[static_cast<std::size_t>(label)] == 0)
    throw ParameterError("label " + std::to_string(label) + " has zero training frequency");
}

}  // namespace

double balanced_softmax_loss(std::span<const double> logits, int label, std::span<const std::int64_t> class_counts) {
  check_label(logits, label, class_counts);
  const auto a = adjusted(logits, class_counts);
  return log_sum_exp(a) - a[static_cast<std::size_t>(label)];
}

std::vector<double> balanced_softmax_grad(std::span<const double> logits, int label,
                                          std::span<const std::int64_t> class_counts) {
  check_label(logits, label, class_counts);
  auto a = adjusted(logits, class_counts);
  const double lse = log_sum_exp(a);
  for (auto& v : a) v = std::exp(v - lse);
  a[static_cast<std::size_t>(label)] -= 1.0;
  return a;
}

double cross_entropy_loss(std::span<const double> logits, int label) { return balanced_softmax_loss(logits, label, {}); }

double batch_loss(const nn::Matrix& logits, std::span<const int> labels, std::span<const std::int64_t> class_counts,
                  nn::Matrix& grad) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) throw ParameterError("one label per logit row required");
  grad.resize(logits.rows(), logits.cols());
  if (logits.rows() == 0) return 0.0;
  const double inv_b = 1.0 / static_cast<double>(logits.rows());
  double total = 0.0;
  std::vector<double> row(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    for (Eigen::Index k = 0; k < logits.cols(); ++k) row[static_cast<std::size_t>(k)] = logits(r, k);
    const int y = labels[static_cast<std::size_t>(r)];
    check_label(row, y, class_counts);
    auto a = adjusted(row, class_counts);
    const double lse = log_sum_exp(a);
    total += lse - a[static_cast<std::size_t>(y)];
    for (Eigen::Index k = 0; k < logits.cols(); ++k) {
      double g = std::exp(a[static_cast<std::size_t>(k)] - lse);
      if (k == y) g -= 1.0;
      grad(r, k) = static_cast<float>(g * inv_b);
    }
  }
  return total * inv_b;
}

void MetricLog::append(const EpochMetrics& m, std::string_view run) const {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::app);
  if (!out) throw DataError("cannot open metric log " + path_.string());
  json j{{"run", run}, {"epoch", m.epoch}, {"train_loss", m.train_loss}, {"val_top1", m.val_top1}, {"lr", m.lr}};
  out << j.dump() << '\n';
}

std::vector<EpochMetrics> MetricLog::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open metric log " + path.string());
  std::vector<EpochMetrics> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      out.push_back({j.at("epoch").get<int>(), j.at("train_loss").get<double>(), j.at("val_top1").get<double>(),
                     j.at("lr").get<double>()});
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

double top1_accuracy(std::span<const int> predictions, const LabeledDataset& ds) {
  if (predictions.size() != ds.size()) throw ParameterError("one prediction per sample required");
  if (ds.empty()) throw ParameterError("top-1 accuracy of an empty dataset");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) hit += predictions[i] == ds[i].label ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(ds.size());
}

namespace {

nn::Matrix all_rows(const LabeledDataset& ds) {
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return to_batch(ds, idx);
}

std::vector<int> labels_of(const LabeledDataset& ds) {
  std::vector<int> y;
  y.reserve(ds.size());
  for (const auto& s : ds.samples()) y.push_back(s.label);
  return y;
}

void check_compatible(const LabeledDataset& a, const LabeledDataset& b, const char* what) {
  if (!b.empty() && b.num_classes() != a.num_classes())
    throw DataError(std::string(what) + " has a different class table");
}

std::size_t batches_per_epoch(std::size_t n, int batch) {
  return std::max<std::size_t>(1, (n + static_cast<std::size_t>(batch) - 1) / static_cast<std::size_t>(batch));
}

void gather(const nn::Matrix& src, const std::vector<int>& src_y, const std::vector<std::size_t>& idx,
            nn::Matrix& dst, std::vector<int>& dst_y, Eigen::Index offset) {
  for (std::size_t i = 0; i < idx.size(); ++i) {
    dst.row(offset + static_cast<Eigen::Index>(i)) = src.row(static_cast<Eigen::Index>(idx[i]));
    dst_y[static_cast<std::size_t>(offset) + i] = src_y[idx[i]];
  }
}

}  // namespace

TrainResult train_from_scratch(ConvClassifier& model, const LabeledDataset& real, const LabeledDataset& synth,
                               const LabeledDataset& val, const TrainConfig& cfg, const MetricLog* log,
                               std::span<const std::int64_t> class_counts) {
  cfg.validate();
  if (real.empty()) throw TrainingError("no real training images");
  check_compatible(real, synth, "synthetic set");
  check_compatible(real, val, "validation set");
  if (real.num_classes() != model.num_classes()) throw TrainingError("model and dataset class counts differ");
  const double real_fraction = synth.empty() ? 1.0 : cfg.real_fraction;

  std::vector<std::int64_t> counts;
  if (cfg.loss == LossKind::balanced_softmax) {
    if (class_counts.empty()) {
      counts = class_histogram(real);
      const auto sc = class_histogram(synth);
      for (std::size_t k = 0; k < sc.size() && k < counts.size(); ++k) counts[k] += sc[k];
    } else {
      counts.assign(class_counts.begin(), class_counts.end());
    }
  }

  const nn::Matrix xr = all_rows(real);
  const auto yr = labels_of(real);
  const nn::Matrix xs = synth.empty() ? nn::Matrix() : all_rows(synth);
  const auto ys = labels_of(synth);

  auto params = model.params();
  nn::Sgd opt(params, cfg.momentum, cfg.weight_decay);
  MixedBatchStream stream(real.size(), synth.size(), cfg.batch, MixMode::deterministic,
                          Rng(derive_seed(cfg.seed, {tag_of("batches")})), real_fraction);
  const std::size_t per_epoch = batches_per_epoch(real.size() + synth.size(), cfg.batch);
  const long total = static_cast<long>(per_epoch) * cfg.epochs;
  long step = 0;

  TrainResult result;
  nn::Matrix xb, grad;
  std::vector<int> yb;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    double lr = cfg.lr;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const auto mb = stream.next();
      xb.resize(static_cast<Eigen::Index>(mb.size()), xr.cols());
      yb.assign(mb.size(), 0);
      gather(xr, yr, mb.real, xb, yb, 0);
      if (!mb.synthetic.empty()) gather(xs, ys, mb.synthetic, xb, yb, static_cast<Eigen::Index>(mb.real.size()));
      nn::zero_grads(params);
      const nn::Matrix logits = model.forward(xb);
      const double loss = batch_loss(logits, yb, counts, grad);
      if (!std::isfinite(loss))
        throw TrainingError("training loss diverged at epoch " + std::to_string(epoch) + "; lower the learning rate");
      model.backward(grad);
      lr = cfg.schedule == LrSchedule::cosine ? nn::cosine_lr(cfg.lr, step, total) : cfg.lr;
      opt.step(lr);
      ++step;
      loss_sum += loss;
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(per_epoch);
    m.val_top1 = val.empty() ? 0.0 : top1_accuracy(predict(model, val), val);
    m.lr = lr;
    result.history.push_back(m);
    if (log) log->append(m, "train");
  }
  result.weights_checksum = params_checksum(params);
  return result;
}

FewShotReport finetune_last_layer(const ConvClassifier* pretrained, std::span<const FewShotTrial> trials,
                                  const LabeledDataset& synth, const LabeledDataset& val, const FineTuneConfig& cfg) {
  cfg.validate();
  if (pretrained == nullptr) throw ParameterError("fine-tuning needs a pretrained backbone");
  if (trials.empty()) throw ParameterError("no few-shot trials");
  if (val.empty()) throw ParameterError("fine-tuning needs a validation set");
  auto reference = pretrained->clone();

  FewShotReport report;
  report.backbone_checksum_before = params_checksum(reference->backbone_params());
  report.shots = static_cast<std::int64_t>(trials.front().train.size()) /
                 std::max(1, trials.front().train.num_classes());

  // The backbone is frozen, so features are computed once.
  const nn::Matrix fs = synth.empty() ? nn::Matrix() : reference->features(all_rows(synth));
  const auto ys = labels_of(synth);
  const nn::Matrix fv = reference->features(all_rows(val));
  const auto yv = labels_of(val);

  std::uint64_t after = report.backbone_checksum_before;
  for (const auto& trial : trials) {
    if (trial.train.empty()) throw TrainingError("empty few-shot trial");
    check_compatible(trial.train, synth, "synthetic set");
    auto model = pretrained->clone();
    model->reset_head(derive_seed(cfg.seed, {tag_of("head"), trial.seed}));
    const nn::Matrix fr = model->features(all_rows(trial.train));
    const auto yr = labels_of(trial.train);
    std::vector<std::int64_t> counts;
    if (cfg.loss == LossKind::balanced_softmax) {
      counts = class_histogram(trial.train);
      const auto sc = class_histogram(synth);
      for (std::size_t k = 0; k < sc.size() && k < counts.size(); ++k) counts[k] += sc[k];
    }

    auto head = model->head_params();  // weight (d x K), bias (1 x K)
    nn::Param& w = *head.at(0);
    nn::Param& bias = *head.at(1);
    nn::Adam opt(head);
    MixedBatchStream stream(trial.train.size(), synth.size(), cfg.batch, MixMode::stochastic,
                            Rng(derive_seed(cfg.seed, {tag_of("ft-batches"), trial.seed})),
                            synth.empty() ? 1.0 : cfg.real_fraction);
    const std::size_t per_epoch = batches_per_epoch(trial.train.size() + synth.size(), cfg.batch);
    double best = 0.0;
    nn::Matrix fb, grad;
    std::vector<int> yb;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      for (std::size_t b = 0; b < per_epoch; ++b) {
        const auto mb = stream.next();
        fb.resize(static_cast<Eigen::Index>(mb.size()), fr.cols());
        yb.assign(mb.size(), 0);
        gather(fr, yr, mb.real, fb, yb, 0);
        if (!mb.synthetic.empty()) gather(fs, ys, mb.synthetic, fb, yb, static_cast<Eigen::Index>(mb.real.size()));
        const nn::Matrix logits = (fb * w.value).rowwise() + bias.value.row(0);
        const double loss = batch_loss(logits, yb, counts, grad);
        if (!std::isfinite(loss)) throw TrainingError("fine-tuning loss diverged; lower the learning rate");
        w.grad = fb.transpose() * grad;
        bias.grad = grad.colwise().sum();
        opt.step(cfg.lr);
      }
      const nn::Matrix vl = (fv * w.value).rowwise() + bias.value.row(0);
      std::size_t hit = 0;
      for (Eigen::Index r = 0; r < vl.rows(); ++r) {
        Eigen::Index arg = 0;
        vl.row(r).maxCoeff(&arg);
        hit += static_cast<int>(arg) == yv[static_cast<std::size_t>(r)] ? 1 : 0;
      }
      best = std::max(best, static_cast<double>(hit) / static_cast<double>(vl.rows()));
    }
    const auto trial_backbone = params_checksum(model->backbone_params());
    if (trial_backbone != report.backbone_checksum_before) after = trial_backbone;
    report.trial_seeds.push_back(trial.seed);
    report.trial_best_acc.push_back(best);
  }
  const auto pretrained_now = params_checksum(const_cast<ConvClassifier*>(pretrained)->backbone_params());
  report.backbone_checksum_after = pretrained_now != report.backbone_checksum_before ? pretrained_now : after;

  const double n = static_cast<double>(report.trial_best_acc.size());
  report.mean = std::accumulate(report.trial_best_acc.begin(), report.trial_best_acc.end(), 0.0) / n;
  double ss = 0.0;
  for (double a : report.trial_best_acc) ss += (a - report.mean) * (a - report.mean);
  report.variance = n > 1 ? ss / (n - 1.0) : 0.0;
  return report;
}

void save_checkpoint(ConvClassifier& model, const std::filesystem::path& dir, const std::string& config_json,
                     std::uint64_t seed, std::span<const EpochMetrics> history) {
  std::filesystem::create_directories(dir);
  nn::save_params(model.params(), dir / "weights.bin");
  const auto& a = model.arch();
  json j;
  j["arch"] = {{"height", a.height}, {"width", a.width}, {"channels", a.channels}, {"conv1", a.conv1},
               {"conv2", a.conv2},   {"embed_dim", a.embed_dim}, {"num_classes", a.num_classes}};
  try {
    j["config"] = config_json.empty() ? json::object() : json::parse(config_json);
  } catch (const json::exception& e) {
    throw ParameterError(std::string("checkpoint config is not JSON: ") + e.what());
  }
  j["seed"] = std::to_string(seed);
  j["weights_checksum"] = std::to_string(params_checksum(model.params()));
  j["history"] = json::array();
  for (const auto& m : history)
    j["history"].push_back({{"epoch", m.epoch}, {"train_loss", m.train_loss}, {"val_top1", m.val_top1}, {"lr", m.lr}});
  write_file_atomic(dir / "checkpoint.json", j.dump(2));
}

std::unique_ptr<ConvClassifier> load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "checkpoint.json");
  if (!in) throw DataError("no checkpoint.json in " + dir.string());
  ClassifierArch a;
  std::uint64_t expected = 0;
  try {
    const auto j = json::parse(in);
    const auto& ja = j.at("arch");
    a.height = ja.at("height").get<int>();
    a.width = ja.at("width").get<int>();
    a.channels = ja.at("channels").get<int>();
    a.conv1 = ja.at("conv1").get<int>();
    a.conv2 = ja.at("conv2").get<int>();
    a.embed_dim = ja.at("embed_dim").get<int>();
    a.num_classes = ja.at("num_classes").get<int>();
    expected = std::stoull(j.at("weights_checksum").get<std::string>());
  } catch (const std::exception& e) {
    throw DataError("bad checkpoint.json in " + dir.string() + ": " + e.what());
  }
  auto model = std::make_unique<ConvClassifier>(a, 0);
  nn::load_params(model->params(), dir / "weights.bin");
  if (params_checksum(model->params()) != expected) throw DataError("checkpoint weights do not match their checksum");
  return model;
}

}  // namespace augsynth
