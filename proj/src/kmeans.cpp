// SPDX-License-Identifier: Apache-2.0
#include "grace/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "grace/random.hpp"
#include "grace/simd.hpp"

namespace grace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::size_t nearest_centroid(const Matrix& centroids, std::span<const double> x) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = squared_distance(centroids.row(c), x);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::size_t count_distinct_rows(const Matrix& points) {
  std::vector<std::size_t> order(points.rows());
  std::iota(order.begin(), order.end(), 0);
  auto less = [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(points.row(a).begin(), points.row(a).end(), points.row(b).begin(),
                                        points.row(b).end());
  };
  std::sort(order.begin(), order.end(), less);
  std::size_t distinct = order.empty() ? 0 : 1;
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (less(order[i - 1], order[i])) ++distinct;
  }
  return distinct;
}

KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, std::size_t max_iterations) {
  const std::size_t n = points.rows();
  const std::size_t dim = points.cols();
  if (n == 0) throw std::invalid_argument("kmeans: no points");
  k = std::min(k, count_distinct_rows(points));
  if (k == 0) throw std::invalid_argument("kmeans: k must be positive");

  Rng rng(seed);
  KMeansResult r;
  r.centroids = Matrix(k, dim);

  // greedy k-means++: several D^2-sampled candidates per step, keep the one
  // with the lowest resulting potential
  const std::size_t trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(k)));
  std::vector<double> d2(n), cand_d2(n), best_d2(n);
  const std::size_t first = uniform_index(rng, n);
  std::copy_n(points.row(first).data(), dim, r.centroids.row(0).data());
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points.row(i), r.centroids.row(0));
  for (std::size_t c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = n;
    double best_pot = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < trials && total > 0.0; ++t) {
      double target = uniform01(rng) * total;
      std::size_t cand = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] == 0.0) continue;
        cand = i;
        target -= d2[i];
        if (target < 0.0) break;
      }
      double pot = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        cand_d2[i] = std::min(d2[i], squared_distance(points.row(i), points.row(cand)));
        pot += cand_d2[i];
      }
      if (pot < best_pot) {
        best_pot = pot;
        pick = cand;
        best_d2.swap(cand_d2);
      }
    }
    if (pick == n) {
      // every point already coincides with a centroid; cannot happen with k <= distinct
      throw std::logic_error("kmeans: seeding ran out of distinct points");
    }
    std::copy_n(points.row(pick).data(), dim, r.centroids.row(c).data());
    d2.swap(best_d2);
  }

  r.assignment.assign(n, 0);
  std::vector<std::size_t> counts(k);
  for (std::size_t iter = 0; iter < max_iterations; ++iter) {
    bool changed = iter == 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = nearest_centroid(r.centroids, points.row(i));
      if (c != r.assignment[i]) changed = true;
      r.assignment[i] = c;
    }
    r.iterations = iter + 1;
    if (!changed) break;

    Matrix sums(k, dim);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      simd::axpy(1.0, points.row(i).data(), sums.row(r.assignment[i]).data(), dim);
      ++counts[r.assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < dim; ++j) r.centroids(c, j) = sums(c, j) / static_cast<double>(counts[c]);
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[r.assignment[i]] <= 1) continue;
        const double d = squared_distance(points.row(i), r.centroids.row(r.assignment[i]));
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far_d < 0.0) continue;
      --counts[r.assignment[far]];
      r.assignment[far] = c;
      counts[c] = 1;
      std::copy_n(points.row(far).data(), dim, r.centroids.row(c).data());
    }
  }
  // Final assignment consistent with the returned centroids.
  for (std::size_t i = 0; i < n; ++i) r.assignment[i] = nearest_centroid(r.centroids, points.row(i));
  return r;
}

}  // namespace grace
