#pragma once

#include <Eigen/Core>

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vocnet {

using Sample = std::vector<double>;

// Midranks (1-based) of the pooled observations, in pooled order.
std::vector<double> midranks(std::span<const double> pooled);

// Upper tail of the chi-squared distribution with integer dof >= 1.
double chi_squared_survival(double x, int dof);
// Upper tail of the standard normal.
double normal_survival(double z);

enum class PValueMethod {
  asymptotic,  // chi-squared with k - 1 degrees of freedom
  exact,       // full enumeration of group relabelings; small samples only
};

struct KruskalResult {
  double h = 0.0;
  double p = 1.0;
  int dof = 0;
  PValueMethod method = PValueMethod::asymptotic;
};

// Tie-corrected H. Throws DomainError for fewer than two groups, an empty
// group, fewer than three observations, or all observations identical.
// The exact method throws DomainError when the number of distinct
// relabelings exceeds kMaxExactRelabelings.
KruskalResult kruskal_wallis(std::span<const Sample> groups,
                             PValueMethod method = PValueMethod::asymptotic);

inline constexpr double kMaxExactRelabelings = 2e6;

enum class Adjustment { none, bonferroni, holm };

std::string_view adjustment_name(Adjustment a);
Adjustment parse_adjustment(std::string_view name);

struct SignificanceMatrix {
  std::vector<std::string> names;
  Eigen::MatrixXd z;         // signed, row minus column mean rank
  Eigen::MatrixXd p;         // adjusted two-sided p; 1 on the diagonal
  Eigen::MatrixX<bool> significant;
  double alpha = 0.05;
  Adjustment adjustment = Adjustment::none;
};

// Dunn pairwise z on mean ranks with tie-corrected variance. names may be
// empty (defaults to group0, group1, ...). Errors as kruskal_wallis.
SignificanceMatrix dunn_posthoc(std::span<const Sample> groups, double alpha = 0.05,
                                Adjustment adjustment = Adjustment::none,
                                std::vector<std::string> names = {});

}  // namespace vocnet
