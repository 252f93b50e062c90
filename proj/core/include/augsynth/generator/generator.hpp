#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "augsynth/augcond.hpp"
#include "augsynth/cache.hpp"
#include "augsynth/generator/denoiser.hpp"
#include "augsynth/generator/schedule.hpp"

namespace augsynth::gen {

struct GenerationConfig {
  double cfg_scale = 2.0;
  int steps = 30;
  std::uint64_t seed = 0;
  int batch = 1;

  void validate(const NoiseSchedule& schedule) const;
};

/// Guided noise estimate eps_u + s*(eps_c - eps_u), evaluated as
/// (1-s)*eps_u + s*eps_c so that s=1 and s=0 reproduce the conditional and
/// unconditional predictions bit-for-bit.
nn::Matrix guided_prediction(const nn::Matrix& eps_uncond, const nn::Matrix& eps_cond, double scale);

/// Per-step instrumentation hook.
struct SamplerStep {
  int timestep;
  const nn::Matrix& eps_uncond;
  const nn::Matrix& eps_cond;
  const nn::Matrix& eps_guided;
};
using SamplerObserver = std::function<void(const SamplerStep&)>;

/// Ancestral sampling over the respaced timesteps with classifier-free
/// guidance. Returns cfg.batch images clipped to [0,1].
std::vector<Image> sample_cfg(Denoiser& denoiser, const NoiseSchedule& schedule, const ConditioningBundle& bundle,
                              const GenerationConfig& cfg, const SamplerObserver& observer = {});

/// Several requests sharing steps and cfg_scale. Request i's images equal
/// sample_cfg(bundles[i], cfgs[i]) bit-for-bit, whatever else is in the call.
std::vector<std::vector<Image>> sample_cfg_many(Denoiser& denoiser, const NoiseSchedule& schedule,
                                                std::span<const ConditioningBundle> bundles,
                                                std::span<const GenerationConfig> cfgs,
                                                const SamplerObserver& observer = {});

class GeneratorInterface {
 public:
  virtual ~GeneratorInterface() = default;
  /// cfg.batch images with complete synthetic provenance.
  virtual std::vector<ImageSample> generate(const ConditioningBundle& bundle, const GenerationConfig& cfg) = 0;
  /// Several independent requests; result i answers request i. The default
  /// forwards to generate() one at a time.
  virtual std::vector<std::vector<ImageSample>> generate_many(std::span<const ConditioningBundle> bundles,
                                                              std::span<const GenerationConfig> cfgs);
  virtual std::string id() const = 0;
};

/// Cache key fields of one generation request.
CacheKeyFields request_fields(const ConditioningBundle& bundle, const GenerationConfig& cfg,
                              const std::string& generator_id);
std::string request_key(const ConditioningBundle& bundle, const GenerationConfig& cfg,
                        const std::string& generator_id);

/// Fills ids (request key plus index) and provenance for generated images.
std::vector<ImageSample> make_synthetic_samples(std::vector<Image> images, const ConditioningBundle& bundle,
                                                const GenerationConfig& cfg, const std::string& key);

/// The trainable desk-scale generator.
class DeskGenerator final : public GeneratorInterface {
 public:
  DeskGenerator(std::shared_ptr<Denoiser> denoiser, NoiseSchedule schedule);

  std::vector<ImageSample> generate(const ConditioningBundle& bundle, const GenerationConfig& cfg) override;
  std::vector<std::vector<ImageSample>> generate_many(std::span<const ConditioningBundle> bundles,
                                                      std::span<const GenerationConfig> cfgs) override;
  std::string id() const override { return id_; }

  Denoiser& denoiser() noexcept { return *denoiser_; }
  const NoiseSchedule& schedule() const noexcept { return schedule_; }

 private:
  std::shared_ptr<Denoiser> denoiser_;
  NoiseSchedule schedule_;
  std::string id_;
};

/// Serves repeated requests from a SyntheticCache; only misses reach the
/// wrapped generator.
class CachedGenerator final : public GeneratorInterface {
 public:
  CachedGenerator(GeneratorInterface& inner, SyntheticCache& cache) : inner_(inner), cache_(cache) {}

  std::vector<ImageSample> generate(const ConditioningBundle& bundle, const GenerationConfig& cfg) override;
  std::vector<std::vector<ImageSample>> generate_many(std::span<const ConditioningBundle> bundles,
                                                      std::span<const GenerationConfig> cfgs) override;
  std::string id() const override { return inner_.id(); }

  std::uint64_t inner_calls() const noexcept { return inner_calls_; }

 private:
  GeneratorInterface& inner_;
  SyntheticCache& cache_;
  std::uint64_t inner_calls_ = 0;
};

struct GeneratorTrainConfig {
  int epochs = 150;
  int batch = 128;
  double lr = 1e-3;
  double ema_decay = 0.999;
  double grad_clip = 1.0;
  // Fraction of examples whose conditioning embedding gets inverted dropout at
  // a rate drawn from U[0, conditioning_dropout_max_p]. Teaches the denoiser
  // to map perturbed embeddings back into the class.
  double conditioning_dropout = 0.0;
  double conditioning_dropout_max_p = 0.5;
  std::uint64_t seed = 11;
};

struct GeneratorTrainStats {
  std::vector<double> epoch_loss;
  std::uint64_t examples = 0;
  std::uint64_t null_replacements = 0;
  std::uint64_t dropped_conditions = 0;
};

/// Minimizes E||eps - eps_theta(x_t, t, cond)||^2 over the training split.
/// Conditioning embeddings come from `encoder`; each example's conditioning
/// is replaced by the null embedding with the configured probability, or
/// else perturbed by conditioning dropout. The returned denoiser holds the
/// EMA weights.
GeneratorTrainStats train_generator(Denoiser& denoiser, const LabeledDataset& ds, const ImageEncoder& encoder,
                                    const NoiseSchedule& schedule, const GeneratorTrainConfig& cfg);

}  // namespace augsynth::gen
