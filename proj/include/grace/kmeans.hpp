// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "grace/matrix.hpp"

namespace grace {

struct KMeansResult {
  Matrix centroids;                     // k x dim
  std::vector<std::size_t> assignment;  // one per point
  std::size_t iterations = 0;
};

/// Index of the closest centroid (squared L2); ties go to the lower index.
std::size_t nearest_centroid(const Matrix& centroids, std::span<const double> x);

double squared_distance(std::span<const double> a, std::span<const double> b);

/// Lloyd's algorithm with k-means++ seeding. k is clamped to the number of
/// distinct points. Empty clusters are re-seeded from the point farthest from
/// its centroid. Deterministic for a given seed.
KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, std::size_t max_iterations = 50);

std::size_t count_distinct_rows(const Matrix& points);

}  // namespace grace
