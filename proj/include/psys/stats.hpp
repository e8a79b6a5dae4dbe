#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace psys {

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// Upper tail P(X >= x) of a chi-square variable with one degree of freedom.
double chi_square1_upper(double x);
// Upper tail of the standard normal.
double normal_upper(double z);
// P(X >= k) for X ~ Binomial(n, 1/2).
double binomial_half_upper(std::size_t n, std::size_t k);

// One-sided test that the leaf beats the parent. `b` counts rows only the
// leaf gets right, `c` rows only the parent gets right.
TestResult mcnemar_test(std::size_t b, std::size_t c);

struct DelongComponents {
  double auc = 0.0;
  std::vector<double> v10;  // one per positive
  std::vector<double> v01;  // one per negative
};

DelongComponents delong_components(std::span<const double> scores, std::span<const int> labels);

struct DelongResult : TestResult {
  double auc_leaf = 0.0;
  double auc_parent = 0.0;
  double variance = 0.0;  // of auc_leaf - auc_parent
};

// One-sided z-test that the leaf's AUC exceeds the parent's.
DelongResult delong_test(std::span<const double> scores_leaf, std::span<const double> scores_parent,
                         std::span<const int> labels);

// Fills the leaf and parent risks on the given rows; returns false when the
// risk is undefined on that resample.
using ResampleRisk = std::function<bool(std::span<const std::size_t> rows, double& leaf, double& parent)>;

// Fraction of `resamples` bootstrap draws (with replacement, size n) in which
// the leaf's risk is not lower than the parent's. Draws where the risk is
// undefined count toward the null. The statistic is the observed risk gap.
TestResult bootstrap_test(std::size_t n, const ResampleRisk& risk, std::size_t resamples, std::uint64_t seed);

}  // namespace psys
