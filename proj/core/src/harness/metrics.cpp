#include "augsynth/harness/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>

#include <Eigen/Eigenvalues>

#include "augsynth/error.hpp"

namespace augsynth::harness {

CategoryAccuracy top1_by_category(std::span<const int> predictions, std::span<const int> labels,
                                  std::span<const std::int64_t> class_counts, const CategoryThresholds& thresholds) {
  if (predictions.size() != labels.size()) throw ParameterError("one prediction per label required");
  if (labels.empty()) throw ParameterError("no test samples");
  thresholds.validate();
  std::int64_t hit[3] = {0, 0, 0}, n[3] = {0, 0, 0};
  std::int64_t total_hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= class_counts.size())
      throw ParameterError("label " + std::to_string(y) + " has no training count");
    const auto c = static_cast<int>(categorize_class(class_counts[static_cast<std::size_t>(y)], thresholds));
    const bool ok = predictions[i] == y;
    hit[c] += ok ? 1 : 0;
    ++n[c];
    total_hit += ok ? 1 : 0;
  }
  CategoryAccuracy out;
  out.overall = static_cast<double>(total_hit) / static_cast<double>(labels.size());
  auto acc = [&](Category c) -> std::optional<double> {
    const auto i = static_cast<int>(c);
    if (n[i] == 0) return std::nullopt;
    return static_cast<double>(hit[i]) / static_cast<double>(n[i]);
  };
  out.many = acc(Category::many);
  out.medium = acc(Category::medium);
  out.few = acc(Category::few);
  out.n_many = n[static_cast<int>(Category::many)];
  out.n_medium = n[static_cast<int>(Category::medium)];
  out.n_few = n[static_cast<int>(Category::few)];
  return out;
}

namespace {

void moments(const FeatureMatrix& f, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
  mu = f.colwise().mean().transpose();
  const Eigen::MatrixXd centered = f.rowwise() - mu.transpose();
  cov = centered.transpose() * centered / static_cast<double>(f.rows() - 1);
}

}  // namespace

double fid_score(const FeatureMatrix& a, const FeatureMatrix& b) {
  if (a.rows() < 2 || b.rows() < 2) throw ParameterError("FID needs at least two samples per set");
  if (a.cols() != b.cols() || a.cols() == 0) throw ParameterError("FID feature dimensions differ");
  if (!a.allFinite() || !b.allFinite()) throw ParameterError("FID features are not finite");
  Eigen::VectorXd mu_a, mu_b;
  Eigen::MatrixXd s_a, s_b;
  moments(a, mu_a, s_a);
  moments(b, mu_b, s_b);
  // Tr (S_a S_b)^{1/2} = Tr (S_a^{1/2} S_b S_a^{1/2})^{1/2}, which is symmetric PSD.
  auto trace_sqrt = [&](double jitter) -> std::optional<double> {
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(a.cols(), a.cols());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(s_a + jitter * eye);
    if (ea.info() != Eigen::Success) return std::nullopt;
    const Eigen::VectorXd la = ea.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd sqrt_a = ea.eigenvectors() * la.asDiagonal() * ea.eigenvectors().transpose();
    Eigen::MatrixXd m = sqrt_a * (s_b + jitter * eye) * sqrt_a;
    m = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(m, Eigen::EigenvaluesOnly);
    if (em.info() != Eigen::Success) return std::nullopt;
    const double t = em.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    if (!std::isfinite(t)) return std::nullopt;
    return t;
  };
  auto tr = trace_sqrt(0.0);
  if (!tr) tr = trace_sqrt(1e-6);
  if (!tr) throw ParameterError("FID matrix square root failed");
  const double tr_sqrt = *tr;
  const double fid = (mu_a - mu_b).squaredNorm() + s_a.trace() + s_b.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, fid);
}

namespace {

std::map<int, std::vector<Eigen::Index>> group_rows(const FeatureMatrix& f, std::span<const int> labels) {
  if (static_cast<std::size_t>(f.rows()) != labels.size()) throw ParameterError("one label per feature row required");
  std::map<int, std::vector<Eigen::Index>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(static_cast<Eigen::Index>(i));
  return groups;
}

}  // namespace

double mean_within_class_distance(const FeatureMatrix& f, std::span<const int> labels) {
  double sum = 0.0;
  int n = 0;
  for (const auto& [label, rows] : group_rows(f, labels)) {
    if (rows.size() < 2) continue;
    double s = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = i + 1; j < rows.size(); ++j, ++pairs) s += (f.row(rows[i]) - f.row(rows[j])).norm();
    sum += s / static_cast<double>(pairs);
    ++n;
  }
  if (n == 0) throw ParameterError("no class has two or more samples");
  return sum / n;
}

double mean_within_class_variance(const FeatureMatrix& f, std::span<const int> labels) {
  double sum = 0.0;
  int n = 0;
  for (const auto& [label, rows] : group_rows(f, labels)) {
    if (rows.size() < 2) continue;
    FeatureMatrix sub(static_cast<Eigen::Index>(rows.size()), f.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) sub.row(static_cast<Eigen::Index>(i)) = f.row(rows[i]);
    Eigen::VectorXd mu;
    Eigen::MatrixXd cov;
    moments(sub, mu, cov);
    sum += cov.trace();
    ++n;
  }
  if (n == 0) throw ParameterError("no class has two or more samples");
  return sum / n;
}

}  // namespace augsynth::harness
