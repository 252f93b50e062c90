#include "augsynth/harness/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "augsynth/error.hpp"
#include "augsynth/image_io.hpp"
#include "augsynth/nn/serialize.hpp"

namespace augsynth::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

void require_buildable(const ExperimentConfig& cfg) {
  if (cfg.classifier_arch != "conv-small")
    throw ConfigError("classifier.arch '" + cfg.classifier_arch +
                      "' is a named configuration only; this build implements 'conv-small'");
}

FeatureMatrix to_double(const nn::Matrix& m) { return m.cast<double>(); }

std::vector<int> labels_of(const LabeledDataset& ds) {
  std::vector<int> y;
  for (const auto& s : ds.samples()) y.push_back(s.label);
  return y;
}

}  // namespace

Workspace::Workspace(ExperimentConfig cfg, std::optional<fs::path> root)
    : cfg_(std::move(cfg)), root_(root.value_or(fs::path(cfg_.output_dir))) {
  cfg_.validate();
  fs::create_directories(root_);
}

const LabeledDataset& Workspace::full() {
  if (full_) return *full_;
  const auto dir = root_ / "data" / "full";
  if (fs::exists(dir / "manifest.json")) {
    full_ = load_manifest(dir);
  } else if (cfg_.dataset.id == "desk-10class") {
    full_ = make_desk_dataset(cfg_.dataset.desk);
    save_manifest(*full_, dir);
  } else {
    full_ = load_manifest(fs::path(*cfg_.dataset.manifest).parent_path());
  }
  if (full_->num_classes() != cfg_.classifier.num_classes)
    throw DataError("dataset has " + std::to_string(full_->num_classes()) + " classes, config expects " +
                    std::to_string(cfg_.classifier.num_classes));
  return *full_;
}

LabeledDataset Workspace::split(Split s) { return full().filter(s); }

LabeledDataset Workspace::longtail(std::uint64_t seed) {
  const auto dir = root_ / "data" / ("lt-" + std::to_string(seed));
  if (fs::exists(dir / "manifest.json")) return load_manifest(dir);
  Rng rng(derive_seed(seed, {tag_of("longtail")}));
  auto lt = build_longtail_subset(split(Split::train), cfg_.longtail, rng);
  save_manifest(lt, dir);
  return lt;
}

gen::ConvEncoder& Workspace::encoder() {
  if (encoder_) return *encoder_;
  require_buildable(cfg_);
  const auto dir = root_ / "models" / "encoder";
  std::unique_ptr<ConvClassifier> model;
  if (fs::exists(dir / "checkpoint.json")) {
    model = load_checkpoint(dir);
  } else {
    model = std::make_unique<ConvClassifier>(cfg_.classifier, derive_seed(cfg_.encoder_train.seed, {tag_of("encoder")}));
    const auto losses = gen::train_encoder(*model, full(), cfg_.encoder_train);
    std::vector<EpochMetrics> hist;
    for (std::size_t e = 0; e < losses.size(); ++e) hist.push_back({static_cast<int>(e), losses[e], 0.0, 0.0});
    save_checkpoint(*model, dir, json{{"encoder_train", to_json(cfg_)["encoder_train"]}}.dump(),
                    cfg_.encoder_train.seed, hist);
  }
  encoder_ = std::make_unique<gen::ConvEncoder>(std::move(model));
  return *encoder_;
}

gen::DeskGenerator& Workspace::generator() {
  if (generator_) return *generator_;
  const auto dir = root_ / "models" / "generator";
  const auto weights = dir / "denoiser.bin";
  auto schedule = gen::NoiseSchedule::linear(cfg_.schedule.T, cfg_.schedule.beta_start, cfg_.schedule.beta_end);
  auto denoiser =
      std::make_shared<gen::Denoiser>(cfg_.denoiser, derive_seed(cfg_.generator_train.seed, {tag_of("denoiser")}));
  if (fs::exists(weights)) {
    nn::load_params(denoiser->params(), weights);
  } else {
    auto& enc = encoder();
    const auto stats = gen::train_generator(*denoiser, full(), enc, schedule, cfg_.generator_train);
    fs::create_directories(dir);
    nn::save_params(denoiser->params(), weights);
    json j{{"epoch_loss", stats.epoch_loss},
           {"examples", stats.examples},
           {"null_replacements", stats.null_replacements},
           {"dropped_conditions", stats.dropped_conditions},
           {"encoder_id", enc.id()}};
    write_file_atomic(dir / "train_stats.json", j.dump(2));
  }
  generator_ = std::make_unique<gen::DeskGenerator>(std::move(denoiser), std::move(schedule));
  return *generator_;
}

SyntheticCache& Workspace::cache() {
  if (!cache_) cache_ = std::make_unique<SyntheticCache>(root_ / "cache", full().class_names());
  return *cache_;
}

gen::GenerationConfig Workspace::generation_config(double cfg_scale, std::uint64_t seed) const {
  auto g = cfg_.generation;
  g.cfg_scale = cfg_scale;
  g.seed = derive_seed(cfg_.generation.seed, {tag_of("generation"), seed});
  return g;
}

AugmentationSpec Workspace::augmentation_spec(const std::string& method, std::uint64_t seed,
                                              std::optional<double> dropout_p) const {
  auto s = cfg_.augmentation;
  s.method = parse_method(method);
  s.rng_seed = derive_seed(cfg_.augmentation.rng_seed, {tag_of("conditioning"), seed});
  if (dropout_p) s.dropout_p = *dropout_p;
  s.validate();
  return s;
}

LabeledDataset Workspace::synthesize(const AugmentationSpec& spec, const gen::GenerationConfig& gen_cfg,
                                     const LabeledDataset& real, const BalancePlan& plan, const std::string& tag,
                                     CampaignStats* stats) {
  CampaignOptions opts;
  opts.checkpoint = root_ / "synth" / tag / "campaign_checkpoint.json";
  auto& gen = generator();
  auto out = run_generation_campaign(plan, spec, gen_cfg, gen, real, encoder(), cache(), opts, stats);
  save_manifest(out, root_ / "synth" / tag);
  return out;
}

FeatureMatrix Workspace::features(const LabeledDataset& ds) { return to_double(encoder().encode_dataset(ds)); }

LongTailRun Workspace::run_longtail(const std::string& method, double cfg_scale, std::uint64_t seed,
                                    std::optional<double> dropout_p) {
  require_buildable(cfg_);
  const bool real_only = method == kRealOnlyMethod;
  const auto lt = longtail(seed);
  const auto val = split(Split::val);
  const auto test = split(Split::test);

  std::string tag = method + "-s" + fmt(cfg_scale);
  if (dropout_p) tag += "-p" + fmt(*dropout_p);
  tag += "-seed" + std::to_string(seed);

  LongTailRun run;
  run.method = method;
  run.cfg_scale = cfg_scale;
  run.dropout_p = dropout_p.value_or(cfg_.augmentation.dropout_p);
  run.seed = seed;

  LabeledDataset synth(lt.class_names());
  if (!real_only) {
    synth = synthesize(augmentation_spec(method, seed, dropout_p), generation_config(cfg_scale, seed), lt,
                       plan_balance(lt, cfg_.balance_target), tag);
  }
  run.synthetic_images = synth.size();

  ConvClassifier model(cfg_.classifier, derive_seed(cfg_.train.seed, {tag_of("classifier-init"), seed}));
  auto tcfg = cfg_.train;
  tcfg.seed = derive_seed(cfg_.train.seed, {tag_of("train"), seed});
  const auto run_dir = root_ / "runs" / tag;
  fs::create_directories(run_dir);
  fs::remove(run_dir / "metrics.jsonl");
  MetricLog log(run_dir / "metrics.jsonl");
  const auto result = train_from_scratch(model, lt, synth, val, tcfg, &log);
  save_checkpoint(model, run_dir, to_json(cfg_).dump(), tcfg.seed, result.history);
  for (const auto& m : result.history) run.best_val_top1 = std::max(run.best_val_top1, m.val_top1);

  const auto preds = predict(model, test);
  const auto labels = labels_of(test);
  run.accuracy = top1_by_category(preds, labels, class_histogram(lt), cfg_.thresholds);

  if (synth.size() >= 2) {
    if (!feature_cache_.count("test")) feature_cache_["test"] = features(test);
    const auto fsyn = features(synth);
    run.fid = fid_score(fsyn, feature_cache_["test"]);
    run.within_class_var = mean_within_class_variance(fsyn, labels_of(synth));
  }
  return run;
}

FewShotReport Workspace::run_fewshot(const std::string& method, double cfg_scale, std::int64_t shots,
                                     std::uint64_t seed) {
  require_buildable(cfg_);
  const auto train = split(Split::train);
  const auto val = split(Split::val);
  FewShotSpec spec{shots, cfg_.fewshot.trials, false, derive_seed(seed, {tag_of("fewshot")})};
  const auto trials = make_fewshot_subsets(train, spec);
  const ConvClassifier& backbone = encoder().model();

  BalancePlan plan;
  plan.target = shots + cfg_.fewshot.synthetic_per_class;
  plan.quota.assign(static_cast<std::size_t>(train.num_classes()), cfg_.fewshot.synthetic_per_class);

  auto ft = cfg_.finetune;
  FewShotReport merged;
  merged.shots = shots;
  for (std::size_t t = 0; t < trials.size(); ++t) {
    const std::string tag =
        "fewshot-" + method + "-s" + fmt(cfg_scale) + "-k" + std::to_string(shots) + "-seed" + std::to_string(seed) +
        "-t" + std::to_string(t);
    LabeledDataset synth(train.class_names());
    if (method != kRealOnlyMethod && cfg_.fewshot.synthetic_per_class > 0)
      synth = synthesize(augmentation_spec(method, trials[t].seed), generation_config(cfg_scale, trials[t].seed),
                         trials[t].train, plan, tag);
    ft.seed = derive_seed(cfg_.finetune.seed, {tag_of("finetune"), seed});
    const auto rep = finetune_last_layer(&backbone, std::span(&trials[t], 1), synth, val, ft);
    if (t == 0) merged.backbone_checksum_before = rep.backbone_checksum_before;
    if (t == 0 || rep.backbone_checksum_after != rep.backbone_checksum_before)
      merged.backbone_checksum_after = rep.backbone_checksum_after;
    merged.trial_seeds.push_back(rep.trial_seeds.front());
    merged.trial_best_acc.push_back(rep.trial_best_acc.front());
  }
  const double n = static_cast<double>(merged.trial_best_acc.size());
  merged.mean = std::accumulate(merged.trial_best_acc.begin(), merged.trial_best_acc.end(), 0.0) / n;
  double ss = 0.0;
  for (double a : merged.trial_best_acc) ss += (a - merged.mean) * (a - merged.mean);
  merged.variance = n > 1 ? ss / (n - 1.0) : 0.0;
  return merged;
}

CategoryAccuracy mean_accuracy(const std::vector<LongTailRun>& runs) {
  CategoryAccuracy m;
  if (runs.empty()) return m;
  auto avg = [&](auto get) -> std::optional<double> {
    double s = 0.0;
    int n = 0;
    for (const auto& r : runs)
      if (auto v = get(r.accuracy)) {
        s += *v;
        ++n;
      }
    if (n == 0) return std::nullopt;
    return s / n;
  };
  m.overall = *avg([](const CategoryAccuracy& a) { return std::optional<double>(a.overall); });
  m.many = avg([](const CategoryAccuracy& a) { return a.many; });
  m.medium = avg([](const CategoryAccuracy& a) { return a.medium; });
  m.few = avg([](const CategoryAccuracy& a) { return a.few; });
  m.n_many = runs.front().accuracy.n_many;
  m.n_medium = runs.front().accuracy.n_medium;
  m.n_few = runs.front().accuracy.n_few;
  return m;
}

std::vector<CfgSweepRow> run_cfg_sweep(Workspace& ws, const std::vector<double>& scales) {
  if (scales.empty()) throw ParameterError("empty CFG scale list");
  const auto& cfg = ws.config();
  std::vector<CfgSweepRow> rows;
  for (double s : scales) {
    CfgSweepRow row;
    row.cfg_scale = s;
    try {
      for (auto seed : cfg.seeds) row.runs.push_back(ws.run_longtail(cfg.sweeps.cfg_method, s, seed));
      row.mean = mean_accuracy(row.runs);
      for (const auto& r : row.runs) {
        row.fid += r.fid / static_cast<double>(row.runs.size());
        row.within_class_var += r.within_class_var / static_cast<double>(row.runs.size());
      }
    } catch (const Error& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::pair<double, double> dropout_embedding_variance(const std::vector<EmbeddingVector>& embeddings, double p,
                                                     int draws, std::uint64_t seed) {
  constexpr int kBatches = 10;
  if (embeddings.empty()) throw ParameterError("no embeddings");
  if (draws < 2 * kBatches) throw ParameterError("need at least 20 draws");
  const int per = draws / kBatches;
  std::vector<double> stats(kBatches, 0.0);
  std::size_t coords = 0;
  for (const auto& e : embeddings) coords += e.dim();
  for (std::size_t ei = 0; ei < embeddings.size(); ++ei) {
    const auto& e = embeddings[ei];
    Rng rng(derive_seed(seed, {tag_of("dropout-variance"), static_cast<std::uint64_t>(ei)}));
    for (int b = 0; b < kBatches; ++b) {
      std::vector<double> sum(e.dim(), 0.0), sq(e.dim(), 0.0);
      for (int d = 0; d < per; ++d) {
        const auto x = dropout_embedding(e, p, rng);
        for (std::size_t j = 0; j < e.dim(); ++j) {
          sum[j] += x.values[j];
          sq[j] += static_cast<double>(x.values[j]) * x.values[j];
        }
      }
      for (std::size_t j = 0; j < e.dim(); ++j) {
        const double mean = sum[j] / per;
        stats[static_cast<std::size_t>(b)] += (sq[j] - per * mean * mean) / (per - 1);
      }
    }
  }
  for (auto& s : stats) s /= static_cast<double>(coords);
  const double mean = std::accumulate(stats.begin(), stats.end(), 0.0) / kBatches;
  double ss = 0.0;
  for (double s : stats) ss += (s - mean) * (s - mean);
  return {mean, std::sqrt(ss / (kBatches - 1) / kBatches)};
}

std::vector<DropoutSweepRow> run_dropout_sweep(Workspace& ws, const std::vector<double>& ps) {
  if (ps.empty()) throw ParameterError("empty dropout list");
  const auto& cfg = ws.config();
  const auto seed = cfg.seeds.front();
  const auto lt = ws.longtail(seed);
  const auto test = ws.split(Split::test);
  auto& enc = ws.encoder();
  std::vector<EmbeddingVector> embeddings;
  for (const auto& s : lt.samples()) embeddings.push_back(enc.encode(s.pixels));
  const auto ftest = ws.features(test);

  BalancePlan plan;
  plan.target = cfg.sweeps.dropout_images_per_class;
  plan.quota.assign(static_cast<std::size_t>(lt.num_classes()), cfg.sweeps.dropout_images_per_class);

  std::vector<DropoutSweepRow> rows;
  for (double p : ps) {
    DropoutSweepRow row;
    row.p = p;
    try {
      std::tie(row.embedding_variance, row.embedding_variance_se) =
          dropout_embedding_variance(embeddings, p, 200, derive_seed(seed, {tag_of("sweep-dropout")}));
      const auto synth = ws.synthesize(ws.augmentation_spec("Dropout", seed, p),
                                       ws.generation_config(cfg.generation.cfg_scale, seed), lt, plan,
                                       "dropout-sweep-p" + fmt(p) + "-seed" + std::to_string(seed));
      const auto fsyn = ws.features(synth);
      row.diversity = mean_within_class_distance(fsyn, labels_of(synth));
      row.fid = fid_score(fsyn, ftest);
    } catch (const Error& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace augsynth::harness
