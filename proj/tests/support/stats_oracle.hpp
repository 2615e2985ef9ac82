#pragma once

// Brute-force reference for rank statistics on tiny samples. Deliberately
// naive: ranks by pairwise counting, H from its textbook definition, exact p
// by recursive assignment of every observation to every group.

#include <cmath>
#include <functional>
#include <vector>

namespace vocnet::testing {

struct OracleKruskal {
  double h = 0.0;
  double p = 1.0;
  long relabelings = 0;
};

// Rank of x among pooled: (#less) + (#equal + 1) / 2.
inline double brute_rank(double x, const std::vector<double>& pooled) {
  double less = 0, equal = 0;
  for (double v : pooled) {
    if (v < x) ++less;
    if (v == x) ++equal;
  }
  return less + (equal + 1.0) / 2.0;
}

inline double brute_h(const std::vector<std::vector<double>>& groups) {
  std::vector<double> pooled;
  for (const auto& g : groups) pooled.insert(pooled.end(), g.begin(), g.end());
  const double n = static_cast<double>(pooled.size());
  double s = 0.0;
  for (const auto& g : groups) {
    double r = 0.0;
    for (double x : g) r += brute_rank(x, pooled);
    s += r * r / static_cast<double>(g.size());
  }
  double h = 12.0 / (n * (n + 1.0)) * s - 3.0 * (n + 1.0);
  // Tie correction 1 - sum(t^3 - t) / (n^3 - n), t counted per distinct value.
  double ties = 0.0;
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    bool first = true;
    for (std::size_t j = 0; j < i; ++j) first = first && pooled[j] != pooled[i];
    if (!first) continue;
    double t = 0;
    for (double v : pooled) t += v == pooled[i];
    ties += t * t * t - t;
  }
  return h / (1.0 - ties / (n * n * n - n));
}

// Exact permutation p: fraction of observation-to-group assignments (group
// sizes fixed) whose H is at least the observed H.
inline OracleKruskal brute_kruskal(const std::vector<std::vector<double>>& groups) {
  std::vector<double> pooled;
  std::vector<std::size_t> capacity;
  for (const auto& g : groups) {
    pooled.insert(pooled.end(), g.begin(), g.end());
    capacity.push_back(g.size());
  }
  OracleKruskal out;
  out.h = brute_h(groups);
  std::vector<std::vector<double>> trial(groups.size());
  long hits = 0;
  std::function<void(std::size_t)> assign = [&](std::size_t i) {
    if (i == pooled.size()) {
      ++out.relabelings;
      if (brute_h(trial) >= out.h - 1e-9) ++hits;
      return;
    }
    for (std::size_t g = 0; g < trial.size(); ++g) {
      if (trial[g].size() == capacity[g]) continue;
      trial[g].push_back(pooled[i]);
      assign(i + 1);
      trial[g].pop_back();
    }
  };
  assign(0);
  out.p = static_cast<double>(hits) / static_cast<double>(out.relabelings);
  return out;
}

// Dunn z for groups a, b: (mean rank a - mean rank b) / sqrt(var * (1/na + 1/nb)).
inline double brute_dunn_z(const std::vector<std::vector<double>>& groups, std::size_t a,
                           std::size_t b) {
  std::vector<double> pooled;
  for (const auto& g : groups) pooled.insert(pooled.end(), g.begin(), g.end());
  const double n = static_cast<double>(pooled.size());
  auto mean_rank = [&](const std::vector<double>& g) {
    double r = 0.0;
    for (double x : g) r += brute_rank(x, pooled);
    return r / static_cast<double>(g.size());
  };
  double ties = 0.0;
  for (double x : pooled) {
    double t = 0;
    for (double v : pooled) t += v == x;
    ties += (t * t * t - t) / t;  // each tie group visited t times
  }
  const double var = n * (n + 1.0) / 12.0 - ties / (12.0 * (n - 1.0));
  const double se = std::sqrt(var * (1.0 / static_cast<double>(groups[a].size()) +
                                     1.0 / static_cast<double>(groups[b].size())));
  return (mean_rank(groups[a]) - mean_rank(groups[b])) / se;
}

inline double brute_two_sided_normal_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

}  // namespace vocnet::testing
