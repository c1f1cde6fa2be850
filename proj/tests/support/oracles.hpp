#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "dgd/kmeans.hpp"
#include "dgd/refine.hpp"

namespace dgd::testing {

/// Minimum K-means objective over every assignment of the points to
/// `clusters` non-empty groups (centroid = group mean), by enumeration.
inline double brute_force_kmeans_optimum(const std::vector<Point>& points, int clusters) {
  const std::size_t n = points.size(), dim = points.front().size();
  std::vector<int> assign(n, 0);
  long double best = std::numeric_limits<long double>::infinity();
  while (true) {
    std::vector<int> count(static_cast<std::size_t>(clusters), 0);
    for (int a : assign) ++count[static_cast<std::size_t>(a)];
    bool all_used = true;
    for (int c : count) all_used = all_used && c > 0;
    if (all_used) {
      std::vector<std::vector<long double>> mean(static_cast<std::size_t>(clusters), std::vector<long double>(dim, 0));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t d = 0; d < dim; ++d) mean[static_cast<std::size_t>(assign[i])][d] += points[i][d];
      for (std::size_t c = 0; c < mean.size(); ++c)
        for (auto& m : mean[c]) m /= count[c];
      long double cost = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t d = 0; d < dim; ++d) {
          const long double diff = points[i][d] - mean[static_cast<std::size_t>(assign[i])][d];
          cost += diff * diff;
        }
      if (cost < best) best = cost;
    }
    // Next assignment in base-`clusters` counting order.
    std::size_t pos = 0;
    while (pos < n && ++assign[pos] == clusters) assign[pos++] = 0;
    if (pos == n) break;
  }
  return static_cast<double>(best);
}

inline long double oracle_cosine(std::span<const float> a, std::span<const float> b) {
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  if (na == 0 || nb == 0) return 0;
  return dot / std::sqrt(na * nb);
}

/// Straight-line restatement of the selection rule: gate on label and
/// confidence > beta; keep candidates whose confidence rank (descending, ties
/// to the lower index) is below k; take the smallest summed cosine similarity
/// to the class pool, ties to higher confidence, then lower index.
inline std::optional<std::size_t> brute_force_select(std::span<const SyntheticSample> cands, const NormalPool& pool,
                                                     int k, double beta) {
  const std::size_t n = cands.size();
  auto passes = [&](std::size_t i) {
    return cands[i].predicted_label == cands[i].intended_label && cands[i].confidence > beta;
  };
  std::optional<std::size_t> best;
  long double best_sim = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!passes(i)) continue;
    std::size_t rank = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && passes(j) &&
          (cands[j].confidence > cands[i].confidence || (cands[j].confidence == cands[i].confidence && j < i)))
        ++rank;
    if (rank >= static_cast<std::size_t>(k)) continue;
    long double sim = 0;
    const int cls = cands[i].intended_label;
    for (const auto& f : pool.features(cls)) sim += oracle_cosine(cands[i].feature, f);
    const bool better = !best || sim < best_sim ||
                        (sim == best_sim && (cands[i].confidence > cands[*best].confidence ||
                                             (cands[i].confidence == cands[*best].confidence && i < *best)));
    if (better) {
      best = i;
      best_sim = sim;
    }
  }
  return best;
}

}  // namespace dgd::testing
