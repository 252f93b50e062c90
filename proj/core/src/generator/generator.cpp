#include "augsynth/generator/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "augsynth/error.hpp"
#include "augsynth/hash.hpp"
#include "augsynth/nn/optim.hpp"

namespace augsynth::gen {

void GenerationConfig::validate(const NoiseSchedule& schedule) const {
  if (!(cfg_scale >= 0.0) || !std::isfinite(cfg_scale)) throw ParameterError("cfg_scale must be finite and >= 0");
  if (steps <= 0) throw ParameterError("steps must be positive");
  if (steps > schedule.steps())
    throw ParameterError("steps (" + std::to_string(steps) + ") exceed schedule length T=" +
                         std::to_string(schedule.steps()));
  if (batch <= 0) throw ParameterError("batch must be positive");
}

nn::Matrix guided_prediction(const nn::Matrix& eps_uncond, const nn::Matrix& eps_cond, double scale) {
  const auto s = static_cast<float>(scale);
  return ((1.0f - s) * eps_uncond.array() + s * eps_cond.array()).matrix();
}

std::vector<std::vector<Image>> sample_cfg_many(Denoiser& denoiser, const NoiseSchedule& schedule,
                                                std::span<const ConditioningBundle> bundles,
                                                std::span<const GenerationConfig> cfgs,
                                                const SamplerObserver& observer) {
  if (bundles.size() != cfgs.size()) throw ParameterError("one generation config per bundle required");
  if (bundles.empty()) return {};
  const auto& dcfg = denoiser.config();
  denoiser.set_input_skip(schedule.noise_scales());
  for (const auto& c : cfgs) {
    c.validate(schedule);
    if (c.steps != cfgs.front().steps || c.cfg_scale != cfgs.front().cfg_scale)
      throw ParameterError("batched sampling requires equal steps and cfg_scale");
  }
  // GEMM summation order depends on the row count, so requests sharing one
  // forward pass would not be bit-identical to the same requests run alone.
  // Each request therefore gets its own reverse process.
  if (cfgs.size() > 1) {
    std::vector<std::vector<Image>> out;
    out.reserve(cfgs.size());
    for (std::size_t i = 0; i < cfgs.size(); ++i)
      out.push_back(std::move(sample_cfg_many(denoiser, schedule, bundles.subspan(i, 1), cfgs.subspan(i, 1), observer).front()));
    return out;
  }

  // Row layout: request i contributes cfgs[i].batch consecutive rows.
  std::vector<std::size_t> owner;
  for (std::size_t i = 0; i < cfgs.size(); ++i) owner.insert(owner.end(), static_cast<std::size_t>(cfgs[i].batch), i);
  const auto rows = static_cast<Eigen::Index>(owner.size());
  const int n = dcfg.pixels();

  DenoiserCondition cond;
  cond.embeddings.resize(2 * rows, dcfg.embed_dim);
  cond.labels.resize(static_cast<std::size_t>(2 * rows));
  cond.is_null.assign(static_cast<std::size_t>(2 * rows), 0);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& b = bundles[owner[static_cast<std::size_t>(r)]];
    if (static_cast<int>(b.image_embedding.dim()) != dcfg.embed_dim)
      throw ParameterError("conditioning embedding has dimension " + std::to_string(b.image_embedding.dim()) +
                           ", denoiser expects " + std::to_string(dcfg.embed_dim));
    for (int j = 0; j < dcfg.embed_dim; ++j) cond.embeddings(r, j) = b.image_embedding.values[static_cast<std::size_t>(j)];
    cond.embeddings.row(rows + r).setZero();
    cond.labels[static_cast<std::size_t>(r)] = b.class_label;
    cond.labels[static_cast<std::size_t>(rows + r)] = b.class_label;
    cond.is_null[static_cast<std::size_t>(rows + r)] = 1;
  }

  std::vector<Rng> streams;
  streams.reserve(cfgs.size());
  for (const auto& c : cfgs) streams.emplace_back(c.seed);
  auto draw_noise = [&](nn::Matrix& z) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      auto& rng = streams[owner[static_cast<std::size_t>(r)]];
      for (int j = 0; j < n; ++j) z(r, j) = static_cast<float>(rng.normal());
    }
  };

  nn::Matrix x(rows, n);
  draw_noise(x);
  const auto timesteps = respaced_timesteps(schedule.steps(), cfgs.front().steps);
  const double scale = cfgs.front().cfg_scale;
  nn::Matrix both(2 * rows, n);
  std::vector<int> tvec(static_cast<std::size_t>(2 * rows));
  nn::Matrix z(rows, n);
  nn::Matrix x0;
  for (std::size_t i = 0; i < timesteps.size(); ++i) {
    const int t = timesteps[i];
    const int t_prev = i + 1 < timesteps.size() ? timesteps[i + 1] : -1;
    const double ab_t = schedule.alpha_bars[static_cast<std::size_t>(t)];
    const double ab_prev = t_prev >= 0 ? schedule.alpha_bars[static_cast<std::size_t>(t_prev)] : 1.0;

    both.topRows(rows) = x;
    both.bottomRows(rows) = x;
    std::fill(tvec.begin(), tvec.end(), t);
    const nn::Matrix eps = denoiser.forward(both, tvec, cond);
    const nn::Matrix eps_cond = eps.topRows(rows);
    const nn::Matrix eps_uncond = eps.bottomRows(rows);
    const nn::Matrix eps_hat = guided_prediction(eps_uncond, eps_cond, scale);
    if (observer) observer(SamplerStep{t, eps_uncond, eps_cond, eps_hat});

    x0 = ((x.array() - static_cast<float>(std::sqrt(1.0 - ab_t)) * eps_hat.array()) / static_cast<float>(std::sqrt(ab_t)))
             .cwiseMax(-1.0f)
             .cwiseMin(1.0f)
             .matrix();
    if (t_prev < 0) break;
    const double beta = 1.0 - ab_t / ab_prev;
    const double c0 = std::sqrt(ab_prev) * beta / (1.0 - ab_t);
    const double ct = std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab_t);
    const double var = beta * (1.0 - ab_prev) / (1.0 - ab_t);
    draw_noise(z);
    x = (static_cast<float>(c0) * x0.array() + static_cast<float>(ct) * x.array() +
         static_cast<float>(std::sqrt(var)) * z.array())
            .matrix();
  }

  std::vector<std::vector<Image>> out(cfgs.size());
  std::vector<float> planar(static_cast<std::size_t>(n));
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (int j = 0; j < n; ++j) planar[static_cast<std::size_t>(j)] = std::clamp(0.5f * (x0(r, j) + 1.0f), 0.0f, 1.0f);
    out[owner[static_cast<std::size_t>(r)]].push_back(
        Image::from_planar(dcfg.height, dcfg.width, dcfg.channels, planar));
  }
  return out;
}

std::vector<Image> sample_cfg(Denoiser& denoiser, const NoiseSchedule& schedule, const ConditioningBundle& bundle,
                              const GenerationConfig& cfg, const SamplerObserver& observer) {
  auto out = sample_cfg_many(denoiser, schedule, std::span(&bundle, 1), std::span(&cfg, 1), observer);
  return std::move(out.front());
}

std::vector<std::vector<ImageSample>> GeneratorInterface::generate_many(std::span<const ConditioningBundle> bundles,
                                                                        std::span<const GenerationConfig> cfgs) {
  if (bundles.size() != cfgs.size()) throw ParameterError("one generation config per bundle required");
  std::vector<std::vector<ImageSample>> out;
  out.reserve(bundles.size());
  for (std::size_t i = 0; i < bundles.size(); ++i) out.push_back(generate(bundles[i], cfgs[i]));
  return out;
}

CacheKeyFields request_fields(const ConditioningBundle& bundle, const GenerationConfig& cfg,
                              const std::string& generator_id) {
  CacheKeyFields f;
  f.method = bundle.method;
  f.method_params = bundle.method_params;
  f.source_ids = bundle.source_ids;
  f.seed = cfg.seed;
  f.cfg_scale = cfg.cfg_scale;
  f.steps = cfg.steps;
  f.batch = cfg.batch;
  f.generator_id = generator_id;
  return f;
}

std::string request_key(const ConditioningBundle& bundle, const GenerationConfig& cfg, const std::string& generator_id) {
  return cache_key(request_fields(bundle, cfg, generator_id));
}

std::vector<ImageSample> make_synthetic_samples(std::vector<Image> images, const ConditioningBundle& bundle,
                                                const GenerationConfig& cfg, const std::string& key) {
  std::vector<ImageSample> out;
  out.reserve(images.size());
  for (std::size_t j = 0; j < images.size(); ++j) {
    ImageSample s;
    s.id = j == 0 ? key : key + "." + std::to_string(j);
    s.pixels = std::move(images[j]);
    s.pixels.quantize();
    s.label = bundle.class_label;
    s.split = Split::train;
    s.provenance.origin = Origin::synthetic;
    s.provenance.method = bundle.method;
    s.provenance.cfg_scale = cfg.cfg_scale;
    s.provenance.seed = cfg.seed;
    s.provenance.source_ids = bundle.source_ids;
    out.push_back(std::move(s));
  }
  return out;
}

DeskGenerator::DeskGenerator(std::shared_ptr<Denoiser> denoiser, NoiseSchedule schedule)
    : denoiser_(std::move(denoiser)), schedule_(std::move(schedule)) {
  if (!denoiser_) throw ParameterError("DeskGenerator needs a denoiser");
  schedule_.validate();
  id_ = "desk-ddpm:" + sha256_hex(nn::flatten_values(denoiser_->params())).substr(0, 16);
}

std::vector<ImageSample> DeskGenerator::generate(const ConditioningBundle& bundle, const GenerationConfig& cfg) {
  auto out = generate_many(std::span(&bundle, 1), std::span(&cfg, 1));
  return std::move(out.front());
}

std::vector<std::vector<ImageSample>> DeskGenerator::generate_many(std::span<const ConditioningBundle> bundles,
                                                                   std::span<const GenerationConfig> cfgs) {
  std::vector<std::vector<ImageSample>> out(bundles.size());
  // Requests with different (steps, scale) run as separate batches.
  std::vector<bool> done(bundles.size(), false);
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    if (done[i]) continue;
    std::vector<std::size_t> group;
    for (std::size_t j = i; j < bundles.size(); ++j)
      if (!done[j] && cfgs[j].steps == cfgs[i].steps && cfgs[j].cfg_scale == cfgs[i].cfg_scale) group.push_back(j);
    std::vector<ConditioningBundle> gb;
    std::vector<GenerationConfig> gc;
    for (auto j : group) {
      gb.push_back(bundles[j]);
      gc.push_back(cfgs[j]);
      done[j] = true;
    }
    auto images = sample_cfg_many(*denoiser_, schedule_, gb, gc);
    for (std::size_t g = 0; g < group.size(); ++g) {
      const auto j = group[g];
      out[j] = make_synthetic_samples(std::move(images[g]), bundles[j], cfgs[j], request_key(bundles[j], cfgs[j], id_));
    }
  }
  return out;
}

std::vector<ImageSample> CachedGenerator::generate(const ConditioningBundle& bundle, const GenerationConfig& cfg) {
  auto out = generate_many(std::span(&bundle, 1), std::span(&cfg, 1));
  return std::move(out.front());
}

std::vector<std::vector<ImageSample>> CachedGenerator::generate_many(std::span<const ConditioningBundle> bundles,
                                                                     std::span<const GenerationConfig> cfgs) {
  if (bundles.size() != cfgs.size()) throw ParameterError("one generation config per bundle required");
  std::vector<std::vector<ImageSample>> out(bundles.size());
  std::vector<std::size_t> missing;
  std::vector<std::string> keys;
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    keys.push_back(request_key(bundles[i], cfgs[i], inner_.id()));
    if (auto hit = cache_.lookup(keys.back())) {
      out[i] = std::move(*hit);
    } else {
      missing.push_back(i);
    }
  }
  if (missing.empty()) return out;
  std::vector<ConditioningBundle> mb;
  std::vector<GenerationConfig> mc;
  for (auto i : missing) {
    mb.push_back(bundles[i]);
    mc.push_back(cfgs[i]);
  }
  auto fresh = inner_.generate_many(mb, mc);
  inner_calls_ += missing.size();
  for (std::size_t m = 0; m < missing.size(); ++m) {
    const auto i = missing[m];
    cache_.store(keys[i], fresh[m]);
    out[i] = std::move(fresh[m]);
  }
  return out;
}

GeneratorTrainStats train_generator(Denoiser& denoiser, const LabeledDataset& ds, const ImageEncoder& encoder,
                                    const NoiseSchedule& schedule, const GeneratorTrainConfig& cfg) {
  schedule.validate();
  if (!(cfg.conditioning_dropout >= 0.0 && cfg.conditioning_dropout <= 1.0) ||
      !(cfg.conditioning_dropout_max_p >= 0.0 && cfg.conditioning_dropout_max_p < 1.0))
    throw ParameterError("conditioning dropout fraction must lie in [0,1] and max_p in [0,1)");
  const auto& dcfg = denoiser.config();
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds[i].split == Split::train) order.push_back(i);
  if (order.empty()) throw TrainingError("generator training set is empty");
  {
    std::vector<bool> seen(static_cast<std::size_t>(ds.num_classes()), false);
    for (auto i : order) seen[static_cast<std::size_t>(ds[i].label)] = true;
    for (std::size_t k = 0; k < seen.size(); ++k)
      if (!seen[k]) throw TrainingError("generator training needs >= 1 image of class " + ds.class_name(static_cast<int>(k)));
  }
  const int n = dcfg.pixels();

  // Conditioning embeddings and model-space pixels, computed once.
  nn::Matrix embeds(static_cast<Eigen::Index>(ds.size()), dcfg.embed_dim);
  nn::Matrix pixels(static_cast<Eigen::Index>(ds.size()), n);
  for (auto i : order) {
    const auto e = encoder.encode(ds[i].pixels);
    if (static_cast<int>(e.dim()) != dcfg.embed_dim) throw TrainingError("encoder dimension does not match denoiser");
    for (int j = 0; j < dcfg.embed_dim; ++j) embeds(static_cast<Eigen::Index>(i), j) = e.values[static_cast<std::size_t>(j)];
    const auto planar = ds[i].pixels.to_planar();
    for (int j = 0; j < n; ++j) pixels(static_cast<Eigen::Index>(i), j) = 2.0f * planar[static_cast<std::size_t>(j)] - 1.0f;
  }

  denoiser.set_input_skip(schedule.noise_scales());
  auto params = denoiser.params();
  nn::Adam opt(params);
  std::vector<nn::Matrix> ema;
  for (auto* p : params) ema.push_back(p->value);
  const auto decay = static_cast<float>(cfg.ema_decay);

  Rng rng(cfg.seed);
  GeneratorTrainStats stats;
  const long steps_per_epoch = static_cast<long>((order.size() + cfg.batch - 1) / cfg.batch);
  const long total = steps_per_epoch * cfg.epochs;
  long step = 0;
  const int T = schedule.steps();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t bsz = std::min(order.size() - start, static_cast<std::size_t>(cfg.batch));
      const auto rows = static_cast<Eigen::Index>(bsz);
      nn::Matrix x_t(rows, n), eps(rows, n);
      std::vector<int> ts(bsz);
      DenoiserCondition cond;
      cond.embeddings.resize(rows, dcfg.embed_dim);
      cond.labels.resize(bsz);
      cond.is_null.resize(bsz);
      for (std::size_t b = 0; b < bsz; ++b) {
        const auto idx = static_cast<Eigen::Index>(order[start + b]);
        const auto r = static_cast<Eigen::Index>(b);
        const int t = static_cast<int>(rng.uniform_int(0, T - 1));
        ts[b] = t;
        for (int j = 0; j < n; ++j) eps(r, j) = static_cast<float>(rng.normal());
        x_t.row(r) = pixels.row(idx);
        cond.embeddings.row(r) = embeds.row(idx);
        cond.labels[b] = ds[static_cast<std::size_t>(idx)].label;
        const bool null = rng.bernoulli(dcfg.null_probability);
        cond.is_null[b] = null ? 1 : 0;
        stats.null_replacements += null ? 1 : 0;
        if (!null && cfg.conditioning_dropout > 0.0 && rng.bernoulli(cfg.conditioning_dropout)) {
          const double p = cfg.conditioning_dropout_max_p * rng.uniform();
          const auto keep = static_cast<float>(1.0 / (1.0 - p));
          for (int j = 0; j < dcfg.embed_dim; ++j) cond.embeddings(r, j) = rng.bernoulli(p) ? 0.0f : keep * cond.embeddings(r, j);
          ++stats.dropped_conditions;
        }
      }
      x_t = schedule.diffuse(x_t, ts, eps);
      stats.examples += bsz;

      nn::zero_grads(params);
      const nn::Matrix pred = denoiser.forward(x_t, ts, cond);
      const nn::Matrix diff = pred - eps;
      const double loss = static_cast<double>(diff.squaredNorm()) / static_cast<double>(diff.size());
      if (!std::isfinite(loss))
        throw TrainingError("generator loss is not finite at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(step) + "; lower the learning rate");
      denoiser.backward(diff * (2.0f / static_cast<float>(diff.size())));
      if (cfg.grad_clip > 0.0) nn::clip_grad_norm(params, cfg.grad_clip);
      opt.step(nn::cosine_lr(cfg.lr, step++, total));
      for (std::size_t i = 0; i < params.size(); ++i) ema[i] = decay * ema[i] + (1.0f - decay) * params[i]->value;
      loss_sum += loss * static_cast<double>(bsz);
    }
    stats.epoch_loss.push_back(loss_sum / static_cast<double>(order.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = ema[i];
  return stats;
}

}  // namespace augsynth::gen
