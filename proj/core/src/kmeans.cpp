#include "dgd/kmeans.hpp"

#include <limits>
#include <string>

#include "dgd/error.hpp"
#include "dgd/rng.hpp"

namespace dgd {

double squared_distance(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

int nearest_centroid(const Point& p, const std::vector<Point>& centroids) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

double inertia(const std::vector<Point>& points, const std::vector<Point>& centroids,
               const std::vector<int>& assignments) {
  double s = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) s += squared_distance(points[i], centroids[assignments[i]]);
  return s;
}

namespace {

std::vector<Point> seed_plus_plus(const std::vector<Point>& points, int clusters, SeededRng& rng) {
  std::vector<Point> centroids;
  centroids.push_back(points[rng.below(points.size())]);
  std::vector<double> d2(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) d2[i] = squared_distance(points[i], centroids[0]);
  while (centroids.size() < static_cast<std::size_t>(clusters)) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total <= 0.0) {
      pick = rng.below(points.size());
    } else {
      double r = rng.uniform() * total;
      pick = points.size() - 1;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (d2[i] <= 0.0) continue;
        r -= d2[i];
        if (r < 0.0) {
          pick = i;
          break;
        }
      }
    }
    centroids.push_back(points[pick]);
    for (std::size_t i = 0; i < points.size(); ++i) d2[i] = std::min(d2[i], squared_distance(points[i], centroids.back()));
  }
  return centroids;
}

std::vector<Point> cluster_means(const std::vector<Point>& points, const std::vector<int>& assign, int clusters,
                                 const std::vector<Point>& previous) {
  const std::size_t dim = points.front().size();
  std::vector<Point> sums(clusters, Point(dim, 0.0));
  std::vector<std::size_t> counts(clusters, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    ++counts[assign[i]];
    for (std::size_t k = 0; k < dim; ++k) sums[assign[i]][k] += points[i][k];
  }
  for (int c = 0; c < clusters; ++c) {
    if (counts[c] == 0) {
      sums[c] = previous[c];
      continue;
    }
    for (double& v : sums[c]) v /= static_cast<double>(counts[c]);
  }
  return sums;
}

/// Moves the farthest point into each empty cluster. Returns the number of repairs.
int repair_empty(const std::vector<Point>& points, std::vector<int>& assign, std::vector<Point>& centroids) {
  const int clusters = static_cast<int>(centroids.size());
  std::vector<std::size_t> counts(clusters, 0);
  for (int a : assign) ++counts[a];
  int repairs = 0;
  std::vector<bool> adopted(points.size(), false);
  for (int c = 0; c < clusters; ++c) {
    if (counts[c] != 0) continue;
    std::size_t far = points.size();
    double far_d = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (adopted[i] || counts[assign[i]] <= 1) continue;
      const double d = squared_distance(points[i], centroids[assign[i]]);
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    if (far == points.size()) throw InvalidArgument("kmeans: cannot repair an empty cluster");
    --counts[assign[far]];
    assign[far] = c;
    counts[c] = 1;
    adopted[far] = true;
    centroids[c] = points[far];
    ++repairs;
  }
  return repairs;
}

KmeansResult lloyd(const std::vector<Point>& points, int clusters, int max_iters, SeededRng& rng) {
  KmeansResult r;
  r.centroids = seed_plus_plus(points, clusters, rng);
  r.assignments.assign(points.size(), -1);
  for (int iter = 1; iter <= max_iters; ++iter) {
    std::vector<int> next(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) next[i] = nearest_centroid(points[i], r.centroids);
    const int repairs = repair_empty(points, next, r.centroids);
    const bool changed = next != r.assignments;
    r.assignments = std::move(next);
    r.centroids = cluster_means(points, r.assignments, clusters, r.centroids);
    r.inertia_history.push_back(inertia(points, r.centroids, r.assignments));
    r.empty_repairs += repairs;
    r.iterations_run = iter;
    if (!changed && repairs == 0) break;
  }
  r.inertia = inertia(points, r.centroids, r.assignments);
  return r;
}

}  // namespace

KmeansResult kmeans(const std::vector<Point>& points, int clusters, const KmeansOptions& opts, SeededRng& rng) {
  if (points.empty()) throw InvalidArgument("kmeans: no points");
  if (clusters < 1 || static_cast<std::size_t>(clusters) > points.size())
    throw InvalidArgument("kmeans: cluster count " + std::to_string(clusters) + " must lie in [1, " +
                          std::to_string(points.size()) + "]");
  if (opts.max_iters < 1 || opts.restarts < 1) throw InvalidArgument("kmeans: max_iters and restarts must be >= 1");
  const std::size_t dim = points.front().size();
  if (dim == 0) throw InvalidArgument("kmeans: zero-dimensional points");
  for (const auto& p : points)
    if (p.size() != dim) throw InvalidArgument("kmeans: points differ in dimension");

  KmeansResult best;
  bool have = false;
  for (int r = 0; r < opts.restarts; ++r) {
    SeededRng run_rng = rng.fork({static_cast<std::uint64_t>(r)});
    auto res = lloyd(points, clusters, opts.max_iters, run_rng);
    if (!have || res.inertia < best.inertia) {
      best = std::move(res);
      have = true;
    }
  }
  rng.next_u64();
  return best;
}

}  // namespace dgd
