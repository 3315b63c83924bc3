#pragma once

#include <array>
#include <span>
#include <vector>

namespace qkd {

/// Exact-match fraction. Throws MetricError for empty or unequal inputs.
double accuracy(std::span<const int> predictions, std::span<const int> labels);

struct Trial {
  double score = 0.0;
  bool same = false;
};

/// Equal-error rate. Thresholds are the sorted unique scores plus +inf, a
/// trial being accepted when score >= threshold. Between the adjacent
/// thresholds where FAR - FRR changes sign, FAR is interpolated linearly to
/// the crossing. Throws MetricError unless both classes are present.
double eer(std::span<const Trial> trials);

/// Row-major points, one per row.
struct PointSet {
  std::size_t count = 0;
  std::size_t dim = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
};

/// Mean silhouette coefficient with Euclidean distance; members of
/// singleton clusters score 0. Throws MetricError for fewer than two
/// clusters or mismatched labels.
double silhouette(const PointSet& points, std::span<const int> labels);

/// Projection onto the two leading principal components of the centred
/// data. Each component's largest-magnitude loading is made positive.
std::vector<std::array<double, 2>> pca_2d(const PointSet& points);

}  // namespace qkd
