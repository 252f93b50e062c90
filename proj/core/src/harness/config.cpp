#include "augsynth/harness/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "augsynth/error.hpp"
#include "augsynth/hash.hpp"
#include "augsynth/image_io.hpp"

namespace augsynth::harness {

using nlohmann::json;

namespace {

// Strict object reader: every key must be consumed exactly once.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type (" + j_.at(key).dump() + ")");
    }
  }

  Reader child(const char* key) {
    seen_.insert(key);
    return Reader(j_.at(key), path_ + "." + key);
  }
  bool has(const char* key) const { return j_.contains(key); }
  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }
  const std::string& path() const noexcept { return path_; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(path_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json desk_preset() {
  return json{
      {"version", kConfigVersion},
      {"preset", "desk-10class"},
      {"dataset", {{"id", "desk-10class"},
                   {"desk", {{"size", 28}, {"train_per_class", 200}, {"val_per_class", 50}, {"test_per_class", 50},
                             {"seed", 1}}}}},
      {"longtail", {{"targets", {100, 100, 60, 35, 20, 12, 8, 5, 5, 5}}, {"min_count", 5}, {"max_count", 200}}},
      {"thresholds", {{"many_min", 100}, {"few_max", 20}}},
      {"balance_target", 100},
      {"augmentation",
       {{"method", "Embed-CutMix-Dropout"}, {"beta_alpha", 1.0}, {"dropout_p", 0.4}, {"embed_mask", "contiguous"},
        {"rng_seed", 0}}},
      {"methods",
       {"RandomImage", "Dropout", "Mixup", "Mixup-Dropout", "Embed-Mixup", "Embed-Mixup-Dropout", "CutMix",
        "CutMix-Dropout", "Embed-CutMix", "Embed-CutMix-Dropout"}},
      {"generation", {{"cfg_scale", 2.0}, {"steps", 30}, {"seed", 0}, {"batch", 1}}},
      {"schedule", {{"T", 200}, {"beta_start", 5e-4}, {"beta_end", 0.1}}},
      {"denoiser",
       {{"embed_dim", 64}, {"time_features", 64}, {"cond_width", 128}, {"base_channels", 16}, {"blocks", 2},
        {"null_probability", 0.1}}},
      {"generator_train", {{"epochs", 120}, {"batch", 64}, {"lr", 1e-3}, {"ema_decay", 0.995}, {"grad_clip", 1.0},
                           {"conditioning_dropout", 0.5}, {"conditioning_dropout_max_p", 0.6}, {"seed", 11}}},
      {"classifier", {{"arch", "conv-small"}, {"conv1", 8}, {"conv2", 16}, {"embed_dim", 64}}},
      {"encoder_train", {{"epochs", 12}, {"batch", 64}, {"lr", 2e-3}, {"seed", 7}}},
      {"train", {{"epochs", 30}, {"batch", 64}, {"lr", 0.05}, {"momentum", 0.9}, {"weight_decay", 5e-4},
                 {"schedule", "cosine"}, {"loss", "balanced_softmax"}, {"real_fraction", 0.5}, {"seed", 0}}},
      {"finetune", {{"epochs", 50}, {"lr", 1e-3}, {"batch", 32}, {"loss", "cross_entropy"}, {"real_fraction", 0.5},
                    {"seed", 0}}},
      {"fewshot", {{"shots", {1, 2, 4, 8, 16}}, {"trials", 4}, {"synthetic_per_class", 16}, {"cfg_scale", 10.0},
                   {"methods", {"Embed-CutMix-Dropout"}}}},
      {"sweeps", {{"cfg_scales", {2.0, 4.0, 7.0, 10.0}}, {"dropout_ps", {0.0, 0.4, 1.0}},
                  {"dropout_images_per_class", 30}, {"cfg_method", "Embed-CutMix-Dropout"}}},
      {"seeds", {0, 1, 2}},
      {"output_dir", "runs/desk"},
  };
}

// ImageNet-LT-shaped profile: 1000 classes decaying geometrically from 1280 to 5.
std::vector<std::int64_t> imagenet_lt_profile() {
  std::vector<std::int64_t> t(1000);
  for (std::size_t k = 0; k < t.size(); ++k)
    t[k] = static_cast<std::int64_t>(std::floor(1280.0 * std::pow(5.0 / 1280.0, static_cast<double>(k) / 999.0) + 1e-9));
  return t;
}

json imagenet_preset() {
  json j = desk_preset();
  j["preset"] = "imagenet-lt-paper";
  j["dataset"] = {{"id", "imagenet-lt"}, {"manifest", "data/imagenet-lt/manifest.json"}};
  j["longtail"] = {{"targets", imagenet_lt_profile()}, {"min_count", 5}, {"max_count", 1280}};
  j["balance_target"] = 1280;
  j["generation"]["steps"] = 30;
  j["classifier"] = {{"arch", "resnext50"}, {"conv1", 64}, {"conv2", 128}, {"embed_dim", 2048}};
  j["denoiser"]["embed_dim"] = 2048;
  j["train"] = {{"epochs", 150}, {"batch", 512}, {"lr", 0.2}, {"momentum", 0.9}, {"weight_decay", 5e-4},
                {"schedule", "cosine"}, {"loss", "balanced_softmax"}, {"real_fraction", 0.5}, {"seed", 0}};
  j["finetune"] = {{"epochs", 50}, {"lr", 1e-4}, {"batch", 32}, {"loss", "cross_entropy"}, {"real_fraction", 0.5},
                   {"seed", 0}};
  j["output_dir"] = "runs/imagenet-lt";
  return j;
}

bool is_desk(const std::string& id) { return id == "desk-10class"; }

}  // namespace

std::vector<std::string> preset_names() { return {"desk-10class", "imagenet-lt-paper"}; }

json preset_json(const std::string& name) {
  if (name == "desk-10class") return desk_preset();
  if (name == "imagenet-lt-paper") return imagenet_preset();
  throw ConfigError("unknown preset '" + name + "' (known: desk-10class, imagenet-lt-paper)");
}

void ExperimentConfig::validate() const {
  auto bad = [](const std::string& what) { throw ConfigError(what); };
  if (is_desk(dataset.id)) {
    if (dataset.desk.size % 4 != 0 || dataset.desk.size < 8) bad("dataset.desk.size must be a multiple of 4, >= 8");
    if (classifier.num_classes != 10) bad("desk dataset has 10 classes");
  } else if (!dataset.manifest) {
    bad("dataset '" + dataset.id + "' needs dataset.manifest");
  }
  try {
    longtail.validate(classifier.num_classes);
    thresholds.validate();
    augmentation.validate();
    for (const auto& m : methods)
      if (m != kRealOnlyMethod) parse_method(m);
    for (const auto& m : fewshot.methods)
      if (m != kRealOnlyMethod) parse_method(m);
    parse_method(sweeps.cfg_method);
    denoiser.validate();
    train.validate();
    finetune.validate();
    const auto sched = gen::NoiseSchedule::linear(schedule.T, schedule.beta_start, schedule.beta_end);
    generation.validate(sched);
    for (double s : sweeps.cfg_scales) gen::GenerationConfig{s, generation.steps, 0, 1}.validate(sched);
    gen::GenerationConfig{fewshot.cfg_scale, generation.steps, 0, 1}.validate(sched);
    for (auto shots : fewshot.shots) FewShotSpec{shots, fewshot.trials, false, 0}.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  for (auto t : longtail.targets)
    if (t > balance_target) bad("balance_target must be >= every long-tail target");
  if (denoiser.embed_dim != classifier.embed_dim) bad("denoiser.embed_dim must equal classifier.embed_dim");
  if (denoiser.num_classes != classifier.num_classes) bad("denoiser and classifier class counts differ");
  if (classifier_arch != "conv-small" && classifier_arch != "resnext50" && classifier_arch != "resnet50")
    bad("unknown classifier.arch '" + classifier_arch + "'");
  for (double p : sweeps.dropout_ps)
    if (!(p >= 0.0 && p <= 1.0)) bad("sweeps.dropout_ps entries must lie in [0,1]");
  if (!(generator_train.conditioning_dropout >= 0.0 && generator_train.conditioning_dropout <= 1.0))
    bad("generator_train.conditioning_dropout must lie in [0,1]");
  if (!(generator_train.conditioning_dropout_max_p >= 0.0 && generator_train.conditioning_dropout_max_p < 1.0))
    bad("generator_train.conditioning_dropout_max_p must lie in [0,1)");
  if (sweeps.dropout_images_per_class < 2) bad("sweeps.dropout_images_per_class must be >= 2");
  if (fewshot.synthetic_per_class < 0) bad("fewshot.synthetic_per_class must be >= 0");
  if (seeds.empty()) bad("seeds must list at least one seed");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) bad("seeds must be distinct");
  if (output_dir.empty()) bad("output_dir must be set");
}

ExperimentConfig resolve_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  std::string preset = "desk-10class";
  if (doc.contains("preset")) {
    if (!doc["preset"].is_string()) throw ConfigError("preset must be a string");
    preset = doc["preset"].get<std::string>();
  }
  json merged = preset_json(preset);
  merged.merge_patch(doc);

  ExperimentConfig c;
  Reader r(merged, "config");
  int version = 0;
  r.get("version", version);
  if (version != kConfigVersion)
    throw ConfigError("config version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kConfigVersion) + ")");
  r.get("preset", c.preset);
  std::string snapshot_hash;  // present in written snapshots
  r.get("config_hash", snapshot_hash);
  {
    auto d = r.child("dataset");
    d.get("id", c.dataset.id);
    if (d.has("manifest")) {
      std::string m;
      d.get("manifest", m);
      c.dataset.manifest = m;
    }
    if (d.has("desk")) {
      auto k = d.child("desk");
      k.get("size", c.dataset.desk.size);
      k.get("train_per_class", c.dataset.desk.train_per_class);
      k.get("val_per_class", c.dataset.desk.val_per_class);
      k.get("test_per_class", c.dataset.desk.test_per_class);
      k.get("seed", c.dataset.desk.seed);
      k.finish();
    }
    d.finish();
  }
  {
    auto l = r.child("longtail");
    l.get("targets", c.longtail.targets);
    l.get("min_count", c.longtail.min_count);
    l.get("max_count", c.longtail.max_count);
    l.finish();
  }
  {
    auto t = r.child("thresholds");
    t.get("many_min", c.thresholds.many_min);
    t.get("few_max", c.thresholds.few_max);
    t.finish();
  }
  r.get("balance_target", c.balance_target);
  {
    auto a = r.child("augmentation");
    std::string method = "RandomImage", mask = "contiguous";
    a.get("method", method);
    a.get("beta_alpha", c.augmentation.beta_alpha);
    a.get("dropout_p", c.augmentation.dropout_p);
    a.get("embed_mask", mask);
    a.get("rng_seed", c.augmentation.rng_seed);
    a.finish();
    try {
      c.augmentation.method = parse_method(method);
    } catch (const Error& e) {
      throw ConfigError(std::string("config.augmentation.method: ") + e.what());
    }
    if (mask == "contiguous") c.augmentation.embed_mask = EmbedMaskKind::contiguous;
    else if (mask == "scattered") c.augmentation.embed_mask = EmbedMaskKind::scattered;
    else throw ConfigError("config.augmentation.embed_mask must be 'contiguous' or 'scattered'");
  }
  r.get("methods", c.methods);
  {
    auto g = r.child("generation");
    g.get("cfg_scale", c.generation.cfg_scale);
    g.get("steps", c.generation.steps);
    g.get("seed", c.generation.seed);
    g.get("batch", c.generation.batch);
    g.finish();
  }
  {
    auto s = r.child("schedule");
    s.get("T", c.schedule.T);
    s.get("beta_start", c.schedule.beta_start);
    s.get("beta_end", c.schedule.beta_end);
    s.finish();
  }
  {
    auto d = r.child("denoiser");
    d.get("embed_dim", c.denoiser.embed_dim);
    d.get("time_features", c.denoiser.time_features);
    d.get("cond_width", c.denoiser.cond_width);
    d.get("base_channels", c.denoiser.base_channels);
    d.get("blocks", c.denoiser.blocks);
    d.get("null_probability", c.denoiser.null_probability);
    d.finish();
  }
  {
    auto g = r.child("generator_train");
    g.get("epochs", c.generator_train.epochs);
    g.get("batch", c.generator_train.batch);
    g.get("lr", c.generator_train.lr);
    g.get("ema_decay", c.generator_train.ema_decay);
    g.get("grad_clip", c.generator_train.grad_clip);
    g.get("conditioning_dropout", c.generator_train.conditioning_dropout);
    g.get("conditioning_dropout_max_p", c.generator_train.conditioning_dropout_max_p);
    g.get("seed", c.generator_train.seed);
    g.finish();
  }
  {
    auto k = r.child("classifier");
    k.get("arch", c.classifier_arch);
    k.get("conv1", c.classifier.conv1);
    k.get("conv2", c.classifier.conv2);
    k.get("embed_dim", c.classifier.embed_dim);
    k.finish();
  }
  {
    auto e = r.child("encoder_train");
    e.get("epochs", c.encoder_train.epochs);
    e.get("batch", c.encoder_train.batch);
    e.get("lr", c.encoder_train.lr);
    e.get("seed", c.encoder_train.seed);
    e.finish();
  }
  {
    auto t = r.child("train");
    std::string sched = "cosine", loss = "balanced_softmax";
    t.get("epochs", c.train.epochs);
    t.get("batch", c.train.batch);
    t.get("lr", c.train.lr);
    t.get("momentum", c.train.momentum);
    t.get("weight_decay", c.train.weight_decay);
    t.get("schedule", sched);
    t.get("loss", loss);
    t.get("real_fraction", c.train.real_fraction);
    t.get("seed", c.train.seed);
    t.finish();
    c.train.schedule = parse_lr_schedule(sched);
    c.train.loss = parse_loss(loss);
  }
  {
    auto f = r.child("finetune");
    std::string loss = "cross_entropy";
    f.get("epochs", c.finetune.epochs);
    f.get("lr", c.finetune.lr);
    f.get("batch", c.finetune.batch);
    f.get("loss", loss);
    f.get("real_fraction", c.finetune.real_fraction);
    f.get("seed", c.finetune.seed);
    f.finish();
    c.finetune.loss = parse_loss(loss);
  }
  {
    auto f = r.child("fewshot");
    f.get("shots", c.fewshot.shots);
    f.get("trials", c.fewshot.trials);
    f.get("synthetic_per_class", c.fewshot.synthetic_per_class);
    f.get("cfg_scale", c.fewshot.cfg_scale);
    f.get("methods", c.fewshot.methods);
    f.finish();
  }
  {
    auto s = r.child("sweeps");
    s.get("cfg_scales", c.sweeps.cfg_scales);
    s.get("dropout_ps", c.sweeps.dropout_ps);
    s.get("dropout_images_per_class", c.sweeps.dropout_images_per_class);
    s.get("cfg_method", c.sweeps.cfg_method);
    s.finish();
  }
  r.get("seeds", c.seeds);
  r.get("output_dir", c.output_dir);
  r.finish();

  // Shapes follow the dataset.
  const int num_classes = static_cast<int>(c.longtail.targets.size());
  c.classifier.num_classes = num_classes;
  c.denoiser.num_classes = num_classes;
  if (is_desk(c.dataset.id)) {
    c.classifier.height = c.classifier.width = c.dataset.desk.size;
    c.classifier.channels = 1;
  } else {
    c.classifier.height = c.classifier.width = 224;
    c.classifier.channels = 3;
  }
  c.denoiser.height = c.classifier.height;
  c.denoiser.width = c.classifier.width;
  c.denoiser.channels = c.classifier.channels;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return resolve_config(doc);
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["version"] = kConfigVersion;
  j["preset"] = c.preset;
  j["dataset"] = {{"id", c.dataset.id}};
  if (c.dataset.manifest) j["dataset"]["manifest"] = *c.dataset.manifest;
  if (is_desk(c.dataset.id))
    j["dataset"]["desk"] = {{"size", c.dataset.desk.size},
                            {"train_per_class", c.dataset.desk.train_per_class},
                            {"val_per_class", c.dataset.desk.val_per_class},
                            {"test_per_class", c.dataset.desk.test_per_class},
                            {"seed", c.dataset.desk.seed}};
  j["longtail"] = {{"targets", c.longtail.targets}, {"min_count", c.longtail.min_count},
                   {"max_count", c.longtail.max_count}};
  j["thresholds"] = {{"many_min", c.thresholds.many_min}, {"few_max", c.thresholds.few_max}};
  j["balance_target"] = c.balance_target;
  j["augmentation"] = {{"method", to_string(c.augmentation.method)},
                       {"beta_alpha", c.augmentation.beta_alpha},
                       {"dropout_p", c.augmentation.dropout_p},
                       {"embed_mask", c.augmentation.embed_mask == EmbedMaskKind::contiguous ? "contiguous" : "scattered"},
                       {"rng_seed", c.augmentation.rng_seed}};
  j["methods"] = c.methods;
  j["generation"] = {{"cfg_scale", c.generation.cfg_scale},
                     {"steps", c.generation.steps},
                     {"seed", c.generation.seed},
                     {"batch", c.generation.batch}};
  j["schedule"] = {{"T", c.schedule.T}, {"beta_start", c.schedule.beta_start}, {"beta_end", c.schedule.beta_end}};
  j["denoiser"] = {{"embed_dim", c.denoiser.embed_dim},   {"time_features", c.denoiser.time_features},
                   {"cond_width", c.denoiser.cond_width}, {"base_channels", c.denoiser.base_channels},
                   {"blocks", c.denoiser.blocks},         {"null_probability", c.denoiser.null_probability}};
  j["generator_train"] = {{"epochs", c.generator_train.epochs},   {"batch", c.generator_train.batch},
                          {"lr", c.generator_train.lr},           {"ema_decay", c.generator_train.ema_decay},
                          {"grad_clip", c.generator_train.grad_clip}, {"seed", c.generator_train.seed},
                          {"conditioning_dropout", c.generator_train.conditioning_dropout},
                          {"conditioning_dropout_max_p", c.generator_train.conditioning_dropout_max_p}};
  j["classifier"] = {{"arch", c.classifier_arch},
                     {"conv1", c.classifier.conv1},
                     {"conv2", c.classifier.conv2},
                     {"embed_dim", c.classifier.embed_dim}};
  j["encoder_train"] = {{"epochs", c.encoder_train.epochs},
                        {"batch", c.encoder_train.batch},
                        {"lr", c.encoder_train.lr},
                        {"seed", c.encoder_train.seed}};
  j["train"] = {{"epochs", c.train.epochs},
                {"batch", c.train.batch},
                {"lr", c.train.lr},
                {"momentum", c.train.momentum},
                {"weight_decay", c.train.weight_decay},
                {"schedule", to_string(c.train.schedule)},
                {"loss", to_string(c.train.loss)},
                {"real_fraction", c.train.real_fraction},
                {"seed", c.train.seed}};
  j["finetune"] = {{"epochs", c.finetune.epochs},
                   {"lr", c.finetune.lr},
                   {"batch", c.finetune.batch},
                   {"loss", to_string(c.finetune.loss)},
                   {"real_fraction", c.finetune.real_fraction},
                   {"seed", c.finetune.seed}};
  j["fewshot"] = {{"shots", c.fewshot.shots},
                  {"trials", c.fewshot.trials},
                  {"synthetic_per_class", c.fewshot.synthetic_per_class},
                  {"cfg_scale", c.fewshot.cfg_scale},
                  {"methods", c.fewshot.methods}};
  j["sweeps"] = {{"cfg_scales", c.sweeps.cfg_scales},
                 {"dropout_ps", c.sweeps.dropout_ps},
                 {"dropout_images_per_class", c.sweeps.dropout_images_per_class},
                 {"cfg_method", c.sweeps.cfg_method}};
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  return j;
}

std::string config_hash(const ExperimentConfig& cfg) { return sha256_hex(to_json(cfg).dump()); }

std::filesystem::path write_config_snapshot(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                                            const std::string& stage) {
  std::filesystem::create_directories(dir);
  const auto path = dir / (stage + ".resolved.json");
  json j = to_json(cfg);
  j["config_hash"] = config_hash(cfg);
  write_file_atomic(path, j.dump(2) + "\n");
  return path;
}

}  // namespace augsynth::harness
