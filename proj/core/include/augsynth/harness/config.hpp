#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "augsynth/augcond.hpp"
#include "augsynth/classifier.hpp"
#include "augsynth/curriculum.hpp"
#include "augsynth/generator/encoder.hpp"
#include "augsynth/generator/generator.hpp"
#include "augsynth/harness/desk_dataset.hpp"
#include "augsynth/trainer.hpp"

namespace augsynth::harness {

inline constexpr int kConfigVersion = 1;

/// Method name for runs trained on real images only.
inline constexpr std::string_view kRealOnlyMethod = "real-only";

struct DatasetSection {
  std::string id = "desk-10class";
  std::optional<std::string> manifest;  // required for non-desk datasets
  DeskDatasetConfig desk;
};

struct ScheduleSection {
  int T = 200;
  double beta_start = 5e-4;
  double beta_end = 0.1;
};

struct FewShotSection {
  std::vector<std::int64_t> shots = {1, 2, 4, 8, 16};
  int trials = 4;
  int synthetic_per_class = 16;
  double cfg_scale = 10.0;
  std::vector<std::string> methods = {"Embed-CutMix-Dropout"};
};

struct SweepSection {
  std::vector<double> cfg_scales = {2.0, 4.0, 7.0, 10.0};
  std::vector<double> dropout_ps = {0.0, 0.4, 1.0};
  int dropout_images_per_class = 30;
  std::string cfg_method = "Embed-CutMix-Dropout";
};

struct ExperimentConfig {
  std::string preset = "desk-10class";
  DatasetSection dataset;
  LongTailProfile longtail;
  CategoryThresholds thresholds;
  std::int64_t balance_target = 100;
  AugmentationSpec augmentation;
  std::vector<std::string> methods;  // rows of the per-method table
  gen::GenerationConfig generation;
  ScheduleSection schedule;
  gen::DenoiserConfig denoiser;
  gen::GeneratorTrainConfig generator_train;
  std::string classifier_arch = "conv-small";
  ClassifierArch classifier;
  gen::EncoderTrainConfig encoder_train;
  TrainConfig train;
  FineTuneConfig finetune;
  FewShotSection fewshot;
  SweepSection sweeps;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::string output_dir = "runs/desk";

  void validate() const;
};

/// Named presets: "desk-10class" and "imagenet-lt-paper".
std::vector<std::string> preset_names();
nlohmann::json preset_json(const std::string& name);

/// Resolve a config document: start from its "preset" (default
/// desk-10class), merge-patch the document over it, then parse strictly.
/// Unknown keys, wrong types, and failed validation raise ConfigError.
ExperimentConfig resolve_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const ExperimentConfig& cfg);
/// SHA-256 of the canonical resolved JSON.
std::string config_hash(const ExperimentConfig& cfg);

/// Writes <dir>/<stage>.resolved.json and returns its path.
std::filesystem::path write_config_snapshot(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                                            const std::string& stage);

}  // namespace augsynth::harness
