#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "augsynth/cache.hpp"
#include "augsynth/generator/encoder.hpp"
#include "augsynth/generator/generator.hpp"
#include "augsynth/harness/campaign.hpp"
#include "augsynth/harness/config.hpp"
#include "augsynth/harness/metrics.hpp"

namespace augsynth::harness {

/// Outcome of one long-tail run (one method, one scale, one seed).
struct LongTailRun {
  std::string method;
  double cfg_scale = 0.0;
  double dropout_p = 0.0;
  std::uint64_t seed = 0;
  CategoryAccuracy accuracy;
  double best_val_top1 = 0.0;
  double fid = 0.0;              // synthetic vs real test features
  double within_class_var = 0.0; // generated-set feature diversity
  std::uint64_t synthetic_images = 0;
};

/// On-disk experiment workspace rooted at the config's output directory.
/// Every stage persists its product and reloads it when present, so
/// stages can be run separately from the CLI or in one process.
///
///   data/full/            full dataset (train/val/test)
///   data/lt-<seed>/       long-tail training subset
///   models/encoder/       encoder checkpoint
///   models/generator/     denoiser weights + training stats
///   cache/                content-addressed synthetic images
///   synth/<tag>/          manifests of campaign outputs
///   runs/<tag>/           classifier checkpoints + metric logs
class Workspace {
 public:
  explicit Workspace(ExperimentConfig cfg, std::optional<std::filesystem::path> root = std::nullopt);

  const ExperimentConfig& config() const noexcept { return cfg_; }
  const std::filesystem::path& root() const noexcept { return root_; }

  const LabeledDataset& full();
  LabeledDataset split(Split s);
  LabeledDataset longtail(std::uint64_t seed);

  gen::ConvEncoder& encoder();
  gen::DeskGenerator& generator();
  SyntheticCache& cache();

  /// Balance-plan campaign on the seed's long-tail subset; manifest saved under synth/<tag>.
  LabeledDataset synthesize(const AugmentationSpec& spec, const gen::GenerationConfig& gen_cfg,
                            const LabeledDataset& real, const BalancePlan& plan, const std::string& tag,
                            CampaignStats* stats = nullptr);

  /// build LT subset -> plan -> generate -> train -> evaluate.
  LongTailRun run_longtail(const std::string& method, double cfg_scale, std::uint64_t seed,
                           std::optional<double> dropout_p = std::nullopt);

  /// Few-shot protocol for one method / scale / shot count.
  FewShotReport run_fewshot(const std::string& method, double cfg_scale, std::int64_t shots,
                            std::uint64_t seed);

  /// Encoder features of a dataset as doubles.
  FeatureMatrix features(const LabeledDataset& ds);

  /// Stage-specific generation config with seed mixed in.
  gen::GenerationConfig generation_config(double cfg_scale, std::uint64_t seed) const;
  AugmentationSpec augmentation_spec(const std::string& method, std::uint64_t seed,
                                     std::optional<double> dropout_p = std::nullopt) const;

 private:
  ExperimentConfig cfg_;
  std::filesystem::path root_;
  std::optional<LabeledDataset> full_;
  std::unique_ptr<gen::ConvEncoder> encoder_;
  std::unique_ptr<gen::DeskGenerator> generator_;
  std::unique_ptr<SyntheticCache> cache_;
  std::map<std::string, FeatureMatrix> feature_cache_;
};

/// Per-field means over runs; absent categories stay absent.
CategoryAccuracy mean_accuracy(const std::vector<LongTailRun>& runs);

struct CfgSweepRow {
  double cfg_scale = 0.0;
  std::vector<LongTailRun> runs;  // one per seed
  CategoryAccuracy mean;
  double fid = 0.0;
  double within_class_var = 0.0;
  std::string error;  // non-empty when the cell failed
};

struct DropoutSweepRow {
  double p = 0.0;
  double embedding_variance = 0.0;  // per-coordinate, pre-generation
  double embedding_variance_se = 0.0;
  double diversity = 0.0;           // mean within-class pairwise feature distance
  double fid = 0.0;                 // generated set vs real test split
  std::string error;
};

/// Generate -> train -> evaluate per scale with every other seed shared.
std::vector<CfgSweepRow> run_cfg_sweep(Workspace& ws, const std::vector<double>& scales);

/// Dropout-conditioned generation per p, with conditioning-embedding
/// variance, within-class diversity, and FID to the real test split.
std::vector<DropoutSweepRow> run_dropout_sweep(Workspace& ws, const std::vector<double>& ps);

/// Mean and standard error of the per-coordinate variance of
/// dropout_embedding(e, p) over `draws` draws, averaged over the embeddings.
std::pair<double, double> dropout_embedding_variance(const std::vector<EmbeddingVector>& embeddings, double p,
                                                     int draws, std::uint64_t seed);

}  // namespace augsynth::harness
