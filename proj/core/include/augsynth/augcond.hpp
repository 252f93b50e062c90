#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "augsynth/datamodel.hpp"
#include "augsynth/rng.hpp"

namespace augsynth {

enum class AugMethod {
  RandomImage,
  Dropout,
  Mixup,
  MixupDropout,
  EmbedMixup,
  EmbedMixupDropout,
  CutMix,
  CutMixDropout,
  EmbedCutMix,
  EmbedCutMixDropout,
};

inline constexpr std::array<AugMethod, 10> kAllMethods = {
    AugMethod::RandomImage, AugMethod::Dropout,         AugMethod::Mixup,
    AugMethod::MixupDropout, AugMethod::EmbedMixup,     AugMethod::EmbedMixupDropout,
    AugMethod::CutMix,       AugMethod::CutMixDropout,  AugMethod::EmbedCutMix,
    AugMethod::EmbedCutMixDropout,
};

/// Canonical names: "RandomImage", "Dropout", "Mixup", "Mixup-Dropout",
/// "Embed-Mixup", "Embed-Mixup-Dropout", "CutMix", "CutMix-Dropout",
/// "Embed-CutMix", "Embed-CutMix-Dropout".
std::string_view to_string(AugMethod m) noexcept;
AugMethod parse_method(std::string_view name);

bool uses_pair(AugMethod m) noexcept;
bool uses_dropout(AugMethod m) noexcept;
bool mixes_in_embedding(AugMethod m) noexcept;
bool is_cutmix(AugMethod m) noexcept;

/// How the embedding-space CutMix picks coordinates.
enum class EmbedMaskKind { contiguous, scattered };

struct AugmentationSpec {
  AugMethod method = AugMethod::RandomImage;
  double beta_alpha = 1.0;
  double dropout_p = 0.4;
  EmbedMaskKind embed_mask = EmbedMaskKind::contiguous;
  std::uint64_t rng_seed = 0;

  /// Throws ParameterError when a field is out of range.
  void validate() const;
  /// Stable text form of the parameters that influence x~ (cache keys).
  std::string canonical_params() const;
};

struct MixCoefficient {
  double lambda = 1.0;
};

/// Rectangle replaced by the second image. The binary mask is 0 inside, 1 outside.
struct PatchMask {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;

  int area() const noexcept { return height * width; }
  bool contains(int y, int x) const noexcept {
    return y >= top && y < top + height && x >= left && x < left + width;
  }
};

struct ConditioningBundle {
  EmbeddingVector image_embedding;  // x~
  int class_label = 0;
  std::string class_text;
  std::string method = "RandomImage";
  std::string method_params;  // AugmentationSpec::canonical_params()
  std::vector<std::string> source_ids;
  double lambda = 1.0;  // mixing coefficient used (1 for unmixed methods)
};

/// Anything that maps an image to an embedding.
class ImageEncoder {
 public:
  virtual ~ImageEncoder() = default;
  virtual EmbeddingVector encode(const Image& image) const = 0;
  virtual std::size_t embedding_dim() const = 0;
  virtual std::string id() const = 0;
};

/// lambda ~ Beta(alpha, alpha).
MixCoefficient sample_mix_coefficient(double alpha, Rng& rng);

/// Patch of side round(H*sqrt(1-lambda)) x round(W*sqrt(1-lambda)) at a
/// uniform offset that keeps it inside the image.
PatchMask sample_patch_mask(double lambda, int height, int width, Rng& rng);

Image apply_patch(const Image& x1, const Image& x2, const PatchMask& mask);
Image cutmix_pixel(const Image& x1, const Image& x2, double lambda, Rng& rng);
Image mixup_pixel(const Image& x1, const Image& x2, double lambda);

/// Replaces a contiguous segment of round((1-lambda)*d) coordinates, at a
/// uniform offset, with the second embedding's values.
EmbeddingVector cutmix_embedding(const EmbeddingVector& e1, const EmbeddingVector& e2, double lambda, Rng& rng,
                                 EmbedMaskKind kind = EmbedMaskKind::contiguous);
EmbeddingVector mixup_embedding(const EmbeddingVector& e1, const EmbeddingVector& e2, double lambda);

/// Inverted dropout. p = 1 returns the zero vector.
EmbeddingVector dropout_embedding(const EmbeddingVector& e, double p, Rng& rng);

/// Two uniform draws among the real training images of one class; distinct
/// when the class has at least two, the same image twice otherwise.
std::pair<const ImageSample*, const ImageSample*> select_source_pair(const LabeledDataset& ds, int class_k, Rng& rng);

ConditioningBundle build_conditioning(const AugmentationSpec& spec, const LabeledDataset& ds, int class_k,
                                      const ImageEncoder& encoder, Rng& rng);

}  // namespace augsynth
