#include "vocnet/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "vocnet/errors.hpp"
#include "vocnet/tensor.hpp"

namespace vocnet {

std::vector<double> midranks(std::span<const double> pooled) {
  std::vector<std::size_t> order(pooled.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pooled[a] < pooled[b]; });
  std::vector<double> ranks(pooled.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double chi_squared_survival(double x, int dof) {
  if (dof < 1) throw DomainError("chi_squared_survival: dof must be >= 1");
  if (x <= 0.0) return 1.0;
  const double half = 0.5 * x;
  if (dof % 2 == 0) {
    // exp(-x/2) * sum_{i < dof/2} (x/2)^i / i!
    double term = 1.0, total = 1.0;
    for (int i = 1; i < dof / 2; ++i) {
      term *= half / i;
      total += term;
    }
    return std::min(1.0, std::exp(-half) * total);
  }
  double total = std::erfc(std::sqrt(half));
  double term = std::sqrt(2.0 * x / std::numbers::pi) * std::exp(-half);
  for (int i = 1; i <= (dof - 1) / 2; ++i) {
    if (i > 1) term *= x / (2.0 * i - 1.0);
    total += term;
  }
  return std::clamp(total, 0.0, 1.0);
}

double normal_survival(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

namespace {

struct Pooled {
  std::vector<double> values;
  std::vector<int> group;
  std::vector<std::size_t> sizes;
};

Pooled pool(std::span<const Sample> groups) {
  if (groups.size() < 2) throw DomainError("rank test: needs at least two groups");
  Pooled out;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) {
      throw DomainError("rank test: group " + std::to_string(g) + " is empty");
    }
    for (double v : groups[g]) {
      if (!std::isfinite(v)) throw DomainError("rank test: non-finite observation");
      out.values.push_back(v);
      out.group.push_back(static_cast<int>(g));
    }
    out.sizes.push_back(groups[g].size());
  }
  if (out.values.size() < 3) throw DomainError("rank test: needs at least three observations");
  if (std::all_of(out.values.begin(), out.values.end(),
                  [&](double v) { return v == out.values.front(); })) {
    throw DomainError("rank test: all observations identical, statistic is degenerate");
  }
  return out;
}

// Sum over tie blocks of t^3 - t.
double tie_sum(std::span<const double> ranks) {
  std::vector<double> sorted(ranks.begin(), ranks.end());
  std::sort(sorted.begin(), sorted.end());
  double total = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    total += t * t * t - t;
    i = j;
  }
  return total;
}

double h_statistic(std::span<const double> ranks, std::span<const int> group,
                   std::span<const std::size_t> sizes, double tie_correction) {
  std::vector<double> rank_sum(sizes.size(), 0.0);
  for (std::size_t i = 0; i < ranks.size(); ++i) rank_sum[group[i]] += ranks[i];
  const double n = static_cast<double>(ranks.size());
  double h = 0.0;
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    h += rank_sum[g] * rank_sum[g] / static_cast<double>(sizes[g]);
  }
  h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);
  return std::max(0.0, h / tie_correction);
}

double relabeling_count(std::span<const std::size_t> sizes) {
  double count = 1.0;
  std::size_t placed = 0;
  for (std::size_t s : sizes) {
    for (std::size_t k = 1; k <= s; ++k) count = count * static_cast<double>(placed + k) / k;
    placed += s;
  }
  return count;
}

}  // namespace

KruskalResult kruskal_wallis(std::span<const Sample> groups, PValueMethod method) {
  const Pooled pooled = pool(groups);
  const auto ranks = midranks(pooled.values);
  const double n = static_cast<double>(ranks.size());
  const double correction = 1.0 - tie_sum(ranks) / (n * n * n - n);

  KruskalResult result;
  result.dof = static_cast<int>(groups.size()) - 1;
  result.method = method;
  result.h = h_statistic(ranks, pooled.group, pooled.sizes, correction);
  if (method == PValueMethod::asymptotic) {
    result.p = chi_squared_survival(result.h, result.dof);
    return result;
  }

  if (relabeling_count(pooled.sizes) > kMaxExactRelabelings) {
    throw DomainError("kruskal_wallis: too many relabelings for the exact method");
  }
  std::vector<int> labels = pooled.group;
  std::sort(labels.begin(), labels.end());
  const double tolerance = 1e-9 * std::max(1.0, result.h);
  std::size_t extreme = 0, total = 0;
  do {
    ++total;
    extreme += h_statistic(ranks, labels, pooled.sizes, correction) >= result.h - tolerance;
  } while (std::next_permutation(labels.begin(), labels.end()));
  result.p = static_cast<double>(extreme) / static_cast<double>(total);
  return result;
}

std::string_view adjustment_name(Adjustment a) {
  switch (a) {
    case Adjustment::none: return "none";
    case Adjustment::bonferroni: return "bonferroni";
    case Adjustment::holm: return "holm";
  }
  return "none";
}

Adjustment parse_adjustment(std::string_view name) {
  if (name == "none") return Adjustment::none;
  if (name == "bonferroni") return Adjustment::bonferroni;
  if (name == "holm") return Adjustment::holm;
  throw DomainError("unknown p-value adjustment '" + std::string(name) + "'");
}

SignificanceMatrix dunn_posthoc(std::span<const Sample> groups, double alpha,
                                Adjustment adjustment, std::vector<std::string> names) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("dunn_posthoc: alpha must be in (0, 1)");
  const Pooled pooled = pool(groups);
  const Index k = static_cast<Index>(groups.size());
  if (names.empty()) {
    for (Index g = 0; g < k; ++g) names.push_back("group" + std::to_string(g));
  }
  if (static_cast<Index>(names.size()) != k) throw DomainError("dunn_posthoc: name count mismatch");

  const auto ranks = midranks(pooled.values);
  const double n = static_cast<double>(ranks.size());
  std::vector<double> mean_rank(k, 0.0);
  for (std::size_t i = 0; i < ranks.size(); ++i) mean_rank[pooled.group[i]] += ranks[i];
  for (Index g = 0; g < k; ++g) mean_rank[g] /= static_cast<double>(pooled.sizes[g]);
  const double variance = n * (n + 1.0) / 12.0 - tie_sum(ranks) / (12.0 * (n - 1.0));

  SignificanceMatrix m;
  m.names = std::move(names);
  m.alpha = alpha;
  m.adjustment = adjustment;
  m.z = Eigen::MatrixXd::Zero(k, k);
  m.p = Eigen::MatrixXd::Ones(k, k);
  m.significant = Eigen::MatrixX<bool>::Constant(k, k, false);

  struct Pair {
    Index i, j;
    double p;
  };
  std::vector<Pair> pairs;
  for (Index i = 0; i < k; ++i) {
    for (Index j = i + 1; j < k; ++j) {
      const double se = std::sqrt(variance * (1.0 / static_cast<double>(pooled.sizes[i]) +
                                              1.0 / static_cast<double>(pooled.sizes[j])));
      const double z = (mean_rank[i] - mean_rank[j]) / se;
      m.z(i, j) = z;
      m.z(j, i) = 0.0 - z;  // no signed zero for tied mean ranks
      pairs.push_back({i, j, std::min(1.0, 2.0 * normal_survival(std::abs(z)))});
    }
  }

  const double count = static_cast<double>(pairs.size());
  if (adjustment == Adjustment::bonferroni) {
    for (Pair& pr : pairs) pr.p = std::min(1.0, pr.p * count);
  } else if (adjustment == Adjustment::holm) {
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return pairs[a].p < pairs[b].p; });
    double running = 0.0;
    for (std::size_t r = 0; r < order.size(); ++r) {
      running = std::max(running, std::min(1.0, pairs[order[r]].p * (count - static_cast<double>(r))));
      pairs[order[r]].p = running;
    }
  }
  for (const Pair& pr : pairs) {
    m.p(pr.i, pr.j) = m.p(pr.j, pr.i) = pr.p;
    m.significant(pr.i, pr.j) = m.significant(pr.j, pr.i) = pr.p < alpha;
  }
  return m;
}

}  // namespace vocnet
