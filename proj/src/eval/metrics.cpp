#include "qkd/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>

#include <Eigen/Dense>

#include "qkd/errors.hpp"

namespace qkd {

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.empty()) throw MetricError("accuracy: no predictions");
  if (predictions.size() != labels.size()) {
    throw MetricError("accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                      std::to_string(labels.size()) + " labels");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double eer(std::span<const Trial> trials) {
  std::vector<Trial> sorted(trials.begin(), trials.end());
  std::size_t pos = 0;
  for (const auto& t : sorted) {
    if (!std::isfinite(t.score)) throw MetricError("eer: non-finite score");
    pos += t.same;
  }
  const std::size_t neg = sorted.size() - pos;
  if (pos == 0 || neg == 0) throw MetricError("eer: needs both target and non-target trials");
  std::sort(sorted.begin(), sorted.end(),
            [](const Trial& a, const Trial& b) { return a.score < b.score; });

  // Walk thresholds upwards; at each unique score s, trials below s are
  // rejected.
  const double np = static_cast<double>(pos), nn = static_cast<double>(neg);
  std::size_t rejected_pos = 0, rejected_neg = 0;
  double prev_far = 1.0, prev_frr = 0.0;
  std::size_t i = 0;
  const auto crossing = [](double far0, double frr0, double far1, double frr1) {
    const double d0 = far0 - frr0, d1 = far1 - frr1;
    if (d0 == d1) return far0;
    const double t = d0 / (d0 - d1);
    return far0 + t * (far1 - far0);
  };
  while (i <= sorted.size()) {
    double far = 0.0, frr = 1.0;
    if (i < sorted.size()) {
      far = static_cast<double>(neg - rejected_neg) / nn;
      frr = static_cast<double>(rejected_pos) / np;
    }
    // The lowest threshold accepts everything, so FAR - FRR starts at 1.
    if (i > 0 && far - frr <= 0.0) return crossing(prev_far, prev_frr, far, frr);
    prev_far = far;
    prev_frr = frr;
    if (i == sorted.size()) break;
    const double s = sorted[i].score;
    while (i < sorted.size() && sorted[i].score == s) {
      (sorted[i].same ? rejected_pos : rejected_neg) += 1;
      ++i;
    }
  }
  return 0.0;
}

namespace {

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return std::sqrt(s);
}

}  // namespace

double silhouette(const PointSet& points, std::span<const int> labels) {
  if (labels.size() != points.count || points.values.size() != points.count * points.dim) {
    throw MetricError("silhouette: " + std::to_string(labels.size()) + " labels for " +
                      std::to_string(points.count) + " points");
  }
  std::map<int, std::size_t> sizes;
  for (int l : labels) ++sizes[l];
  if (sizes.size() < 2) throw MetricError("silhouette: needs at least two clusters");
  const std::size_t n = points.count;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (sizes[labels[i]] == 1) continue;
    std::map<int, double> sum;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) sum[labels[j]] += distance(points.row(i), points.row(j));
    }
    const double a = sum[labels[i]] / static_cast<double>(sizes[labels[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, s] : sum) {
      if (label != labels[i]) b = std::min(b, s / static_cast<double>(sizes[label]));
    }
    const double m = std::max(a, b);
    total += m > 0.0 ? (b - a) / m : 0.0;
  }
  return total / static_cast<double>(n);
}

std::vector<std::array<double, 2>> pca_2d(const PointSet& points) {
  if (points.count == 0 || points.dim == 0) throw MetricError("pca_2d: empty point set");
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Mat x = Eigen::Map<const Mat>(points.values.data(), static_cast<Eigen::Index>(points.count),
                                static_cast<Eigen::Index>(points.dim));
  x.rowwise() -= x.colwise().mean();
  const Eigen::MatrixXd cov = x.transpose() * x;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  const Eigen::Index d = cov.rows();
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(d, 2);
  for (Eigen::Index k = 0; k < std::min<Eigen::Index>(2, d); ++k) {
    Eigen::VectorXd v = solver.eigenvectors().col(d - 1 - k);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    basis.col(k) = v;
  }
  const Eigen::MatrixXd proj = x * basis;
  std::vector<std::array<double, 2>> out(points.count);
  for (std::size_t i = 0; i < points.count; ++i) {
    out[i] = {proj(static_cast<Eigen::Index>(i), 0), proj(static_cast<Eigen::Index>(i), 1)};
  }
  return out;
}

}  // namespace qkd
