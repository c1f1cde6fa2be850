#pragma once

#include <cstddef>
#include <vector>

namespace dgd {

class SeededRng;

using Point = std::vector<double>;

struct KmeansResult {
  std::vector<Point> centroids;
  std::vector<int> assignments;
  double inertia = 0.0;
  int iterations_run = 0;
  /// Inertia after every Lloyd iteration of the winning restart.
  std::vector<double> inertia_history;
  /// Number of empty-cluster repairs in the winning restart.
  int empty_repairs = 0;
};

struct KmeansOptions {
  int max_iters = 100;
  int restarts = 10;
};

double squared_distance(const Point& a, const Point& b);

/// Index of the nearest centroid; ties go to the lowest index.
int nearest_centroid(const Point& p, const std::vector<Point>& centroids);

/// Sum of squared distances from each point to its assigned centroid.
double inertia(const std::vector<Point>& points, const std::vector<Point>& centroids,
               const std::vector<int>& assignments);

/// k-means++ seeding followed by Lloyd iterations until the assignment is a
/// fixpoint or max_iters. A cluster left empty adopts the point farthest from
/// its current centroid (ties to the lowest point index). The lowest-inertia
/// restart wins; earlier restarts win ties.
KmeansResult kmeans(const std::vector<Point>& points, int clusters, const KmeansOptions& opts, SeededRng& rng);

}  // namespace dgd
