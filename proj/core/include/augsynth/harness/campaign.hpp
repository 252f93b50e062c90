#pragma once

#include <filesystem>
#include <optional>

#include "augsynth/augcond.hpp"
#include "augsynth/cache.hpp"
#include "augsynth/curriculum.hpp"
#include "augsynth/generator/generator.hpp"

namespace augsynth::harness {

struct CampaignOptions {
  int max_retries = 3;
  int chunk = 32;  // requests handed to the generator at once
  std::optional<std::filesystem::path> checkpoint;  // written if the campaign halts
};

struct CampaignStats {
  std::uint64_t requests = 0;
  std::uint64_t generated = 0;  // requests that missed the cache
  std::uint64_t cache_hits = 0;
};

/// Generates exactly plan.quota[k] synthetic images per class. Request i of
/// class k draws its conditioning from the stream derive_seed(spec.rng_seed,
/// {k, i}) and its noise from derive_seed(gen_cfg.seed, {k, i}), so a rerun
/// reproduces every request and is served from the cache.
LabeledDataset run_generation_campaign(const BalancePlan& plan, const AugmentationSpec& spec,
                                       const gen::GenerationConfig& gen_cfg, gen::GeneratorInterface& generator,
                                       const LabeledDataset& real, const ImageEncoder& encoder,
                                       SyntheticCache& cache, const CampaignOptions& options = {},
                                       CampaignStats* stats = nullptr);

}  // namespace augsynth::harness
