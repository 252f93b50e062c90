#include "augsynth/harness/campaign.hpp"

#include <nlohmann/json.hpp>

#include "augsynth/error.hpp"
#include "augsynth/image_io.hpp"

namespace augsynth::harness {

namespace {

struct Request {
  int k;
  std::int64_t i;
};

void write_checkpoint(const std::filesystem::path& path, const BalancePlan& plan, std::span<const std::int64_t> done,
                      const GenerationError& e) {
  nlohmann::json j;
  j["quota"] = plan.quota;
  j["completed"] = std::vector<std::int64_t>(done.begin(), done.end());
  j["failed_request_key"] = e.request_key();
  j["error"] = e.what();
  j["resume"] = "rerun the same campaign; completed requests are served from the cache";
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_file_atomic(path, j.dump(2));
}

}  // namespace

LabeledDataset run_generation_campaign(const BalancePlan& plan, const AugmentationSpec& spec,
                                       const gen::GenerationConfig& gen_cfg, gen::GeneratorInterface& generator,
                                       const LabeledDataset& real, const ImageEncoder& encoder,
                                       SyntheticCache& cache, const CampaignOptions& options, CampaignStats* stats) {
  spec.validate();
  if (static_cast<int>(plan.quota.size()) != real.num_classes())
    throw ParameterError("balance plan has " + std::to_string(plan.quota.size()) + " classes, dataset has " +
                         std::to_string(real.num_classes()));
  if (options.chunk < 1 || options.max_retries < 0) throw ParameterError("invalid campaign options");
  for (auto q : plan.quota)
    if (q < 0) throw ParameterError("negative quota");

  std::vector<Request> requests;
  for (int k = 0; k < real.num_classes(); ++k)
    for (std::int64_t i = 0; i < plan.quota[static_cast<std::size_t>(k)]; ++i) requests.push_back({k, i});

  gen::CachedGenerator cached(generator, cache);
  LabeledDataset out(real.class_names());
  std::vector<std::int64_t> done(plan.quota.size(), 0);
  CampaignStats local;

  for (std::size_t start = 0; start < requests.size(); start += static_cast<std::size_t>(options.chunk)) {
    const std::size_t end = std::min(requests.size(), start + static_cast<std::size_t>(options.chunk));
    std::vector<ConditioningBundle> bundles;
    std::vector<gen::GenerationConfig> cfgs;
    for (std::size_t r = start; r < end; ++r) {
      const auto k = static_cast<std::uint64_t>(requests[r].k);
      const auto i = static_cast<std::uint64_t>(requests[r].i);
      Rng rng(derive_seed(spec.rng_seed, {k, i}));
      bundles.push_back(build_conditioning(spec, real, requests[r].k, encoder, rng));
      auto c = gen_cfg;
      c.seed = derive_seed(gen_cfg.seed, {k, i});
      c.batch = 1;
      cfgs.push_back(c);
    }
    const auto before = cached.inner_calls();
    std::vector<std::vector<ImageSample>> results;
    for (int attempt = 0;; ++attempt) {
      try {
        results = cached.generate_many(bundles, cfgs);
        break;
      } catch (const GenerationError& e) {
        if (e.retriable() && attempt < options.max_retries) continue;
        if (options.checkpoint) write_checkpoint(*options.checkpoint, plan, done, e);
        throw GenerationError("campaign halted after " + std::to_string(attempt + 1) + " attempt(s): " + e.what(),
                              false, e.request_key());
      }
    }
    const auto fresh = cached.inner_calls() - before;
    local.requests += end - start;
    local.generated += fresh;
    local.cache_hits += (end - start) - fresh;
    for (std::size_t r = 0; r < results.size(); ++r) {
      for (auto& s : results[r]) out.add(std::move(s));
      ++done[static_cast<std::size_t>(requests[start + r].k)];
    }
  }
  if (stats) *stats = local;
  return out;
}

}  // namespace augsynth::harness
