#include "augsynth/augcond.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "augsynth/error.hpp"

namespace augsynth {

std::string_view to_string(AugMethod m) noexcept {
  switch (m) {
    case AugMethod::RandomImage: return "RandomImage";
    case AugMethod::Dropout: return "Dropout";
    case AugMethod::Mixup: return "Mixup";
    case AugMethod::MixupDropout: return "Mixup-Dropout";
    case AugMethod::EmbedMixup: return "Embed-Mixup";
    case AugMethod::EmbedMixupDropout: return "Embed-Mixup-Dropout";
    case AugMethod::CutMix: return "CutMix";
    case AugMethod::CutMixDropout: return "CutMix-Dropout";
    case AugMethod::EmbedCutMix: return "Embed-CutMix";
    case AugMethod::EmbedCutMixDropout: return "Embed-CutMix-Dropout";
  }
  return "RandomImage";
}

AugMethod parse_method(std::string_view name) {
  for (auto m : kAllMethods)
    if (to_string(m) == name) return m;
  if (name == "Random-Image" || name == "Random Image") return AugMethod::RandomImage;
  throw ParameterError("unknown augmentation method '" + std::string(name) + "'");
}

bool uses_pair(AugMethod m) noexcept { return m != AugMethod::RandomImage && m != AugMethod::Dropout; }

bool uses_dropout(AugMethod m) noexcept {
  switch (m) {
    case AugMethod::Dropout:
    case AugMethod::MixupDropout:
    case AugMethod::EmbedMixupDropout:
    case AugMethod::CutMixDropout:
    case AugMethod::EmbedCutMixDropout: return true;
    default: return false;
  }
}

bool mixes_in_embedding(AugMethod m) noexcept {
  switch (m) {
    case AugMethod::EmbedMixup:
    case AugMethod::EmbedMixupDropout:
    case AugMethod::EmbedCutMix:
    case AugMethod::EmbedCutMixDropout: return true;
    default: return false;
  }
}

bool is_cutmix(AugMethod m) noexcept {
  switch (m) {
    case AugMethod::CutMix:
    case AugMethod::CutMixDropout:
    case AugMethod::EmbedCutMix:
    case AugMethod::EmbedCutMixDropout: return true;
    default: return false;
  }
}

void AugmentationSpec::validate() const {
  if (!(beta_alpha > 0.0) || !std::isfinite(beta_alpha)) throw ParameterError("beta_alpha must be > 0");
  if (!(dropout_p >= 0.0 && dropout_p <= 1.0)) throw ParameterError("dropout_p must lie in [0,1]");
}

std::string AugmentationSpec::canonical_params() const {
  std::ostringstream os;
  os << std::setprecision(17);
  if (uses_pair(method)) os << "alpha=" << beta_alpha << ';';
  if (uses_dropout(method)) os << "p=" << dropout_p << ';';
  if (mixes_in_embedding(method) && is_cutmix(method))
    os << "mask=" << (embed_mask == EmbedMaskKind::contiguous ? "contiguous" : "scattered") << ';';
  return os.str();
}

MixCoefficient sample_mix_coefficient(double alpha, Rng& rng) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ParameterError("Beta alpha must be > 0");
  // Beta(a, a) as X / (X + Y) with X, Y ~ Gamma(a, 1).
  const double x = rng.gamma(alpha);
  const double y = rng.gamma(alpha);
  const double sum = x + y;
  const double lambda = sum > 0.0 ? x / sum : 0.5;
  return {std::clamp(lambda, 0.0, 1.0)};
}

PatchMask sample_patch_mask(double lambda, int height, int width, Rng& rng) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ParameterError("lambda must lie in [0,1]");
  const double side = std::sqrt(1.0 - lambda);
  PatchMask m;
  m.height = std::clamp(static_cast<int>(std::lround(height * side)), 0, height);
  m.width = std::clamp(static_cast<int>(std::lround(width * side)), 0, width);
  m.top = static_cast<int>(rng.uniform_int(0, height - m.height));
  m.left = static_cast<int>(rng.uniform_int(0, width - m.width));
  return m;
}

Image apply_patch(const Image& x1, const Image& x2, const PatchMask& mask) {
  if (!x1.same_shape(x2)) throw ParameterError("cutmix: image shapes differ");
  Image out = x1;
  for (int y = mask.top; y < mask.top + mask.height; ++y)
    for (int x = mask.left; x < mask.left + mask.width; ++x)
      for (int c = 0; c < x1.channels(); ++c) out.at(y, x, c) = x2.at(y, x, c);
  return out;
}

Image cutmix_pixel(const Image& x1, const Image& x2, double lambda, Rng& rng) {
  if (!x1.same_shape(x2)) throw ParameterError("cutmix: image shapes differ");
  return apply_patch(x1, x2, sample_patch_mask(lambda, x1.height(), x1.width(), rng));
}

Image mixup_pixel(const Image& x1, const Image& x2, double lambda) {
  if (!x1.same_shape(x2)) throw ParameterError("mixup: image shapes differ");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ParameterError("lambda must lie in [0,1]");
  Image out = x1;
  auto dst = out.pixels();
  auto b = x2.pixels();
  const auto l = static_cast<float>(lambda);
  // Equal coordinates are copied so mixing identical inputs is exact for any lambda.
  for (std::size_t i = 0; i < dst.size(); ++i)
    if (dst[i] != b[i]) dst[i] = std::clamp(l * dst[i] + (1.0f - l) * b[i], 0.0f, 1.0f);
  return out;
}

namespace {
void check_pair(const EmbeddingVector& e1, const EmbeddingVector& e2) {
  if (e1.dim() != e2.dim())
    throw ParameterError("embedding dimensions differ: " + std::to_string(e1.dim()) + " vs " + std::to_string(e2.dim()));
  if (e1.encoder_id != e2.encoder_id)
    throw ParameterError("embeddings come from different encoders: " + e1.encoder_id + " vs " + e2.encoder_id);
}
}  // namespace

EmbeddingVector cutmix_embedding(const EmbeddingVector& e1, const EmbeddingVector& e2, double lambda, Rng& rng,
                                 EmbedMaskKind kind) {
  check_pair(e1, e2);
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ParameterError("lambda must lie in [0,1]");
  const auto d = static_cast<std::int64_t>(e1.dim());
  const auto len = std::clamp<std::int64_t>(std::llround((1.0 - lambda) * static_cast<double>(d)), 0, d);
  EmbeddingVector out = e1;
  if (kind == EmbedMaskKind::contiguous) {
    const auto offset = rng.uniform_int(0, d - len);
    for (std::int64_t i = offset; i < offset + len; ++i) out.values[i] = e2.values[i];
  } else {
    std::vector<std::size_t> idx(static_cast<std::size_t>(d));
    std::iota(idx.begin(), idx.end(), 0);
    // Partial Fisher-Yates: the first `len` entries are a uniform subset.
    for (std::int64_t i = 0; i < len; ++i) {
      const auto j = rng.uniform_int(i, d - 1);
      std::swap(idx[i], idx[j]);
      out.values[idx[i]] = e2.values[idx[i]];
    }
  }
  return out;
}

EmbeddingVector mixup_embedding(const EmbeddingVector& e1, const EmbeddingVector& e2, double lambda) {
  check_pair(e1, e2);
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ParameterError("lambda must lie in [0,1]");
  EmbeddingVector out = e1;
  const auto l = static_cast<float>(lambda);
  for (std::size_t i = 0; i < out.values.size(); ++i)
    if (e1.values[i] != e2.values[i]) out.values[i] = l * e1.values[i] + (1.0f - l) * e2.values[i];
  return out;
}

EmbeddingVector dropout_embedding(const EmbeddingVector& e, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("dropout p must lie in [0,1]");
  EmbeddingVector out = e;
  if (p == 0.0) return out;
  if (p == 1.0) {
    std::fill(out.values.begin(), out.values.end(), 0.0f);
    return out;
  }
  const auto scale = static_cast<float>(1.0 / (1.0 - p));
  for (float& v : out.values) v = rng.bernoulli(p) ? 0.0f : v * scale;
  return out;
}

std::pair<const ImageSample*, const ImageSample*> select_source_pair(const LabeledDataset& ds, int class_k, Rng& rng) {
  std::vector<const ImageSample*> pool;
  for (const auto& s : ds.samples())
    if (s.label == class_k && s.split == Split::train && s.provenance.origin == Origin::real) pool.push_back(&s);
  if (pool.empty())
    throw DataError("class " + std::to_string(class_k) + " has no real training images to condition on");
  const auto n = static_cast<std::int64_t>(pool.size());
  if (n == 1) return {pool[0], pool[0]};
  const auto i = rng.uniform_int(0, n - 1);
  auto j = rng.uniform_int(0, n - 2);
  if (j >= i) ++j;
  return {pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]};
}

ConditioningBundle build_conditioning(const AugmentationSpec& spec, const LabeledDataset& ds, int class_k,
                                      const ImageEncoder& encoder, Rng& rng) {
  spec.validate();
  const auto [s1, s2] = select_source_pair(ds, class_k, rng);
  ConditioningBundle b;
  b.class_label = class_k;
  b.class_text = ds.class_name(class_k);
  b.method = std::string(to_string(spec.method));
  b.method_params = spec.canonical_params();

  EmbeddingVector x;
  if (!uses_pair(spec.method)) {
    b.source_ids = {s1->id};
    x = encoder.encode(s1->pixels);
  } else {
    b.source_ids = {s1->id, s2->id};
    b.lambda = sample_mix_coefficient(spec.beta_alpha, rng).lambda;
    if (mixes_in_embedding(spec.method)) {
      const auto e1 = encoder.encode(s1->pixels);
      const auto e2 = encoder.encode(s2->pixels);
      x = is_cutmix(spec.method) ? cutmix_embedding(e1, e2, b.lambda, rng, spec.embed_mask)
                                 : mixup_embedding(e1, e2, b.lambda);
    } else {
      const Image mixed = is_cutmix(spec.method) ? cutmix_pixel(s1->pixels, s2->pixels, b.lambda, rng)
                                                 : mixup_pixel(s1->pixels, s2->pixels, b.lambda);
      x = encoder.encode(mixed);
    }
  }
  if (uses_dropout(spec.method)) x = dropout_embedding(x, spec.dropout_p, rng);
  if (!x.finite()) throw ParameterError("conditioning embedding is not finite");
  b.image_embedding = std::move(x);
  return b;
}

}  // namespace augsynth
