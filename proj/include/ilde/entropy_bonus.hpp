#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace ilde {

/// Batch of state representations y_i = f(s_i) with a neighbor index k.
struct RepresentationBatch {
  std::vector<std::vector<double>> points;
  int k = 3;

  int size() const { return static_cast<int>(points.size()); }
  int dim() const { return points.empty() ? 0 : static_cast<int>(points.front().size()); }

  void validate() const {
    if (k < 1 || k >= size())
      throw std::invalid_argument("RepresentationBatch: need 1 <= k < N");
    for (const auto& p : points)
      if (static_cast<int>(p.size()) != dim())
        throw std::invalid_argument("RepresentationBatch: inconsistent dimensions");
  }
};

namespace detail {
inline double sq_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    double d = a[j] - b[j];
    acc += d * d;
  }
  return acc;
}
}  // namespace detail

/// Distance to the k-th nearest other point; ties broken by smaller index.
inline double knn_distance(const RepresentationBatch& batch, int index) {
  batch.validate();
  const int n = batch.size();
  if (index < 0 || index >= n) throw std::invalid_argument("knn_distance: index out of range");
  std::vector<std::pair<double, int>> dists;
  dists.reserve(n - 1);
  for (int j = 0; j < n; ++j)
    if (j != index) dists.emplace_back(detail::sq_distance(batch.points[index], batch.points[j]), j);
  std::nth_element(dists.begin(), dists.begin() + (batch.k - 1), dists.end());
  std::sort(dists.begin(), dists.begin() + batch.k);
  return std::sqrt(dists[batch.k - 1].first);
}

/// b(s_i) = log(||y_i - y_i^{k-NN}||_2 + 1); 0 iff the distance is 0.
inline double state_entropy_bonus(const RepresentationBatch& batch, int index) {
  return std::log1p(knn_distance(batch, index));
}

/// All bonuses of a batch in one pass (O(N^2) pairwise distances).
inline std::vector<double> state_entropy_bonuses(const RepresentationBatch& batch) {
  std::vector<double> out(batch.size());
  for (int i = 0; i < batch.size(); ++i) out[i] = state_entropy_bonus(batch, i);
  return out;
}

namespace detail {
// digamma at a positive integer: psi(k) = -gamma + H_{k-1}
inline double digamma_int(int k) {
  constexpr double kEulerGamma = 0.57721566490153286060;
  double acc = -kEulerGamma;
  for (int i = 1; i < k; ++i) acc += 1.0 / i;
  return acc;
}
}  // namespace detail

/// Kozachenko-Leonenko differential entropy estimate in nats:
/// (d/N) sum_i log R_i + log V_d + log N - psi(k), V_d the unit-ball volume.
/// Duplicate points are rejected (the log diverges); the +1-shifted bonus is
/// the right tool for batches with repeats.
inline double entropy_estimate(const RepresentationBatch& batch) {
  batch.validate();
  const int n = batch.size();
  const int d = batch.dim();
  double log_dist_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j)
      if (detail::sq_distance(batch.points[i], batch.points[j]) == 0.0)
        throw std::invalid_argument("entropy_estimate: duplicate points (diverging estimator)");
    log_dist_sum += std::log(knn_distance(batch, i));
  }
  double log_unit_ball = 0.5 * d * std::log(M_PI) - std::lgamma(0.5 * d + 1.0);
  return static_cast<double>(d) / n * log_dist_sum + log_unit_ball + std::log(static_cast<double>(n)) -
         detail::digamma_int(batch.k);
}

}  // namespace ilde
