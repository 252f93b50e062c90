#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "augsynth/curriculum.hpp"

namespace augsynth::harness {

struct CategoryAccuracy {
  double overall = 0.0;
  std::optional<double> many;
  std::optional<double> medium;
  std::optional<double> few;
  std::int64_t n_many = 0, n_medium = 0, n_few = 0;  // test samples per category
};

/// Top-1 overall and per shot category. A class's category comes from its
/// training count; categories without test samples are absent.
CategoryAccuracy top1_by_category(std::span<const int> predictions, std::span<const int> labels,
                                  std::span<const std::int64_t> class_counts,
                                  const CategoryThresholds& thresholds = {});

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Frechet distance between Gaussians fitted to two feature sets (rows are
/// samples): |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}).
double fid_score(const FeatureMatrix& features_a, const FeatureMatrix& features_b);

/// Mean pairwise Euclidean distance between rows sharing a label, averaged over labels.
double mean_within_class_distance(const FeatureMatrix& features, std::span<const int> labels);
/// Trace of the per-class feature covariance, averaged over labels.
double mean_within_class_variance(const FeatureMatrix& features, std::span<const int> labels);

}  // namespace augsynth::harness
