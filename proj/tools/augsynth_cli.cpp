// augsynth: command-line driver for the augmentation-conditioned synthetic
// data pipeline. Every subcommand resolves the config, writes a snapshot
// under <output_dir>/configs/, then runs its stage.

#include <malloc.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "augsynth/error.hpp"
#include "augsynth/harness/config.hpp"
#include "augsynth/harness/metrics.hpp"
#include "augsynth/harness/pipeline.hpp"
#include "augsynth/harness/report.hpp"
#include "augsynth/image_io.hpp"

namespace fs = std::filesystem;
using namespace augsynth;
using namespace augsynth::harness;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kGeneration = 4, kTraining = 5 };

struct Common {
  std::string config;
  std::string preset;
  std::string output_dir;
  std::vector<std::string> overrides;  // key.path=json
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config, "experiment config (JSON)");
  app->add_option("--preset", c.preset, "named preset when no config file is given");
  app->add_option("-o,--output-dir", c.output_dir, "override output_dir");
  app->add_option("--set", c.overrides, "override one key, e.g. --set train.epochs=5");
}

ExperimentConfig resolve(const Common& c) {
  json doc = json::object();
  if (!c.config.empty()) {
    std::ifstream in(c.config);
    if (!in) throw ConfigError("cannot read config " + c.config);
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError(c.config + ": " + e.what());
    }
  }
  if (!c.preset.empty()) doc["preset"] = c.preset;
  if (!c.output_dir.empty()) doc["output_dir"] = c.output_dir;
  for (const auto& o : c.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
    json value;
    try {
      value = json::parse(o.substr(eq + 1));
    } catch (const json::exception&) {
      value = o.substr(eq + 1);  // bare string
    }
    std::string ptr = "/" + o.substr(0, eq);
    for (auto& ch : ptr)
      if (ch == '.') ch = '/';
    // Overlay onto the preset so partial paths work.
    json base = preset_json(doc.value("preset", std::string("desk-10class")));
    base.merge_patch(doc);
    base[json::json_pointer(ptr)] = value;
    doc = base;
  }
  return resolve_config(doc);
}

void snapshot(const ExperimentConfig& cfg, const std::string& stage) {
  const auto path = write_config_snapshot(cfg, fs::path(cfg.output_dir) / "configs", stage);
  std::fprintf(stderr, "[augsynth] config %s -> %s\n", config_hash(cfg).substr(0, 12).c_str(), path.c_str());
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

void print_accuracy(const LongTailRun& r) {
  auto p = [](std::optional<double> v) { return v ? std::to_string(*v * 100.0) : std::string("-"); };
  std::printf("%s cfg=%g seed=%llu overall=%.2f many=%s medium=%s few=%s fid=%.3f synth=%llu\n", r.method.c_str(),
              r.cfg_scale, static_cast<unsigned long long>(r.seed), r.accuracy.overall * 100.0,
              p(r.accuracy.many).c_str(), p(r.accuracy.medium).c_str(), p(r.accuracy.few).c_str(), r.fid,
              static_cast<unsigned long long>(r.synthetic_images));
}

void save_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  write_file_atomic(path, j.dump(2) + "\n");
}

std::string fmt_scale(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", s);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  // Layer buffers are large and short-lived; keep them off mmap so they are reused.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  CLI::App app{"augsynth: augmentation-conditioned synthetic data for long-tail and few-shot classification"};
  app.require_subcommand(1);

  Common common;
  std::uint64_t seed = 0;
  std::string method = "Embed-CutMix-Dropout";
  std::optional<double> cfg_scale;
  std::optional<double> dropout_p;
  std::int64_t shots = 1;
  std::string run_dir, set_a, set_b, sections = "methods,cfg,dropout,fewshot";
  std::vector<double> scales, ps;

  auto* build_lt = app.add_subcommand("build-lt", "materialize the dataset and a long-tail subset");
  add_common(build_lt, common);
  build_lt->add_option("--seed", seed, "long-tail subset seed");

  auto* train_gen = app.add_subcommand("train-generator", "train the encoder and the conditional denoiser");
  add_common(train_gen, common);

  auto* generate = app.add_subcommand("generate", "run a balance-plan generation campaign");
  add_common(generate, common);
  generate->add_option("--method", method, "conditioning method");
  generate->add_option("--cfg-scale", cfg_scale, "guidance scale (default: config)");
  generate->add_option("--dropout-p", dropout_p, "override dropout probability");
  generate->add_option("--seed", seed, "experiment seed");

  auto* train = app.add_subcommand("train", "generate, train from scratch on real+synthetic, evaluate");
  add_common(train, common);
  train->add_option("--method", method, "conditioning method or 'real-only'");
  train->add_option("--cfg-scale", cfg_scale, "guidance scale (default: config)");
  train->add_option("--dropout-p", dropout_p, "override dropout probability");
  train->add_option("--seed", seed, "experiment seed");

  auto* finetune = app.add_subcommand("finetune", "few-shot last-layer fine-tuning");
  add_common(finetune, common);
  finetune->add_option("--method", method, "conditioning method or 'real-only'");
  finetune->add_option("--cfg-scale", cfg_scale, "guidance scale (default: fewshot.cfg_scale)");
  finetune->add_option("--shots", shots, "examples per class (1, 2, 4, 8, 16)");
  finetune->add_option("--seed", seed, "experiment seed");

  auto* eval = app.add_subcommand("eval", "evaluate a trained checkpoint on the test split");
  add_common(eval, common);
  eval->add_option("--run-dir", run_dir, "directory holding checkpoint.json")->required();
  eval->add_option("--seed", seed, "seed of the long-tail subset the run used");

  auto* fid = app.add_subcommand("fid", "FID between two manifests using the workspace encoder");
  add_common(fid, common);
  fid->add_option("--a", set_a, "first manifest directory")->required();
  fid->add_option("--b", set_b, "second manifest directory")->required();

  auto* sweep_cfg = app.add_subcommand("sweep-cfg", "CFG scale sweep");
  add_common(sweep_cfg, common);
  sweep_cfg->add_option("--scales", scales, "scales (default: config)");

  auto* sweep_drop = app.add_subcommand("sweep-dropout", "embedding dropout sweep");
  add_common(sweep_drop, common);
  sweep_drop->add_option("--ps", ps, "dropout probabilities (default: config)");

  auto* report = app.add_subcommand("report", "run configured experiments and emit tables and plots");
  add_common(report, common);
  report->add_option("--sections", sections, "comma list of methods,cfg,dropout,fewshot");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    const auto cfg = resolve(common);
    auto* sub = app.get_subcommands().front();
    snapshot(cfg, sub->get_name());
    Workspace ws(cfg);
    Timer timer;

    if (sub == build_lt) {
      const auto lt = ws.longtail(seed);
      const auto hist = class_histogram(lt);
      std::printf("long-tail subset (seed %llu): %zu images\n", static_cast<unsigned long long>(seed), lt.size());
      for (std::size_t k = 0; k < hist.size(); ++k)
        std::printf("  %-10s %5lld  %s\n", lt.class_name(static_cast<int>(k)).c_str(),
                    static_cast<long long>(hist[k]),
                    std::string(to_string(categorize_class(hist[k], cfg.thresholds))).c_str());
    } else if (sub == train_gen) {
      ws.encoder();
      ws.generator();
      std::printf("encoder %s\ngenerator %s\n", ws.encoder().id().c_str(), ws.generator().id().c_str());
    } else if (sub == generate) {
      const auto lt = ws.longtail(seed);
      const double s = cfg_scale.value_or(cfg.generation.cfg_scale);
      CampaignStats stats;
      const std::string tag = method + "-s" + fmt_scale(s) + "-seed" + std::to_string(seed);
      const auto synth = ws.synthesize(ws.augmentation_spec(method, seed, dropout_p), ws.generation_config(s, seed),
                                       lt, plan_balance(lt, cfg.balance_target), tag, &stats);
      std::printf("%zu synthetic images (%llu requests, %llu generated, %llu cache hits) -> %s\n", synth.size(),
                  static_cast<unsigned long long>(stats.requests), static_cast<unsigned long long>(stats.generated),
                  static_cast<unsigned long long>(stats.cache_hits), (ws.root() / "synth" / tag).c_str());
    } else if (sub == train) {
      const auto r = ws.run_longtail(method, cfg_scale.value_or(cfg.generation.cfg_scale), seed, dropout_p);
      print_accuracy(r);
      save_json(ws.root() / "results" / (method + "-s" + fmt_scale(r.cfg_scale) + "-seed" + std::to_string(seed) + ".json"),
                to_json(r));
    } else if (sub == finetune) {
      const double s = cfg_scale.value_or(cfg.fewshot.cfg_scale);
      const auto r = ws.run_fewshot(method, s, shots, seed);
      std::printf("%s cfg=%g shots=%lld mean=%.2f variance=%.6f trials:", method.c_str(), s,
                  static_cast<long long>(shots), r.mean * 100.0, r.variance);
      for (double a : r.trial_best_acc) std::printf(" %.2f", a * 100.0);
      std::printf("\nbackbone checksum %llu -> %llu\n", static_cast<unsigned long long>(r.backbone_checksum_before),
                  static_cast<unsigned long long>(r.backbone_checksum_after));
      save_json(ws.root() / "results" /
                    ("fewshot-" + method + "-s" + fmt_scale(s) + "-k" + std::to_string(shots) + "-seed" +
                     std::to_string(seed) + ".json"),
                to_json(r));
    } else if (sub == eval) {
      auto model = load_checkpoint(run_dir);
      const auto test = ws.split(Split::test);
      const auto preds = predict(*model, test);
      std::vector<int> labels;
      for (const auto& smp : test.samples()) labels.push_back(smp.label);
      const auto acc = top1_by_category(preds, labels, class_histogram(ws.longtail(seed)), cfg.thresholds);
      auto p = [](std::optional<double> v) { return v ? std::to_string(*v * 100.0) : std::string("-"); };
      std::printf("overall=%.2f many=%s medium=%s few=%s\n", acc.overall * 100.0, p(acc.many).c_str(),
                  p(acc.medium).c_str(), p(acc.few).c_str());
    } else if (sub == fid) {
      const auto a = load_manifest(set_a);
      const auto b = load_manifest(set_b);
      std::printf("%.6f\n", fid_score(ws.features(a), ws.features(b)));
    } else if (sub == sweep_cfg) {
      const auto rows = run_cfg_sweep(ws, scales.empty() ? cfg.sweeps.cfg_scales : scales);
      ReportData d;
      d.config_hash = config_hash(cfg);
      d.seeds = cfg.seeds;
      d.cfg_sweep = rows;
      std::fputs(cfg_table_markdown(d).c_str(), stdout);
      save_json(ws.root() / "results" / "cfg_sweep.json", to_json(d));
    } else if (sub == sweep_drop) {
      const auto rows = run_dropout_sweep(ws, ps.empty() ? cfg.sweeps.dropout_ps : ps);
      ReportData d;
      d.config_hash = config_hash(cfg);
      d.seeds = cfg.seeds;
      d.dropout_sweep = rows;
      std::fputs(dropout_table_markdown(d).c_str(), stdout);
      save_json(ws.root() / "results" / "dropout_sweep.json", to_json(d));
    } else if (sub == report) {
      ReportData d;
      d.config_hash = config_hash(cfg);
      d.seeds = cfg.seeds;
      auto want = [&](const char* s) { return ("," + sections + ",").find("," + std::string(s) + ",") != std::string::npos; };
      if (want("methods")) {
        for (const auto& m : cfg.methods) {
          std::vector<LongTailRun> runs;
          for (auto sd : cfg.seeds) {
            runs.push_back(ws.run_longtail(m, cfg.generation.cfg_scale, sd));
            print_accuracy(runs.back());
          }
          d.methods.push_back(summarize_method(std::move(runs)));
        }
      }
      if (want("cfg")) d.cfg_sweep = run_cfg_sweep(ws, cfg.sweeps.cfg_scales);
      if (want("dropout")) d.dropout_sweep = run_dropout_sweep(ws, cfg.sweeps.dropout_ps);
      if (want("fewshot")) {
        for (const auto& m : cfg.fewshot.methods) {
          FewShotCurve curve;
          curve.method = m;
          curve.cfg_scale = cfg.fewshot.cfg_scale;
          for (auto k : cfg.fewshot.shots) curve.points.push_back(ws.run_fewshot(m, cfg.fewshot.cfg_scale, k, cfg.seeds.front()));
          d.fewshot.push_back(std::move(curve));
        }
      }
      for (const auto& path : emit_report(d, ws.root() / "report")) std::printf("wrote %s\n", path.c_str());
    }
    std::fprintf(stderr, "[augsynth] %s finished in %.1fs\n", sub->get_name().c_str(), timer.seconds());
    return kOk;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const ParameterError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const GenerationError& e) {
    std::fprintf(stderr, "generation error%s: %s\n",
                 e.request_key().empty() ? "" : (" [request " + e.request_key() + "]").c_str(), e.what());
    return kGeneration;
  } catch (const TrainingError& e) {
    std::fprintf(stderr, "training error: %s\n", e.what());
    return kTraining;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kOther;
  }
}
