#include "psys/stats.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <numeric>
#include <random>

#include "psys/error.hpp"

namespace psys {

double chi_square1_upper(double x) {
  if (x <= 0.0) return 1.0;
  return std::erfc(std::sqrt(x / 2.0));
}

double normal_upper(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double binomial_half_upper(std::size_t n, std::size_t k) {
  if (k == 0) return 1.0;
  if (k > n) return 0.0;
  double total = 0.0;
  if (n <= 62) {
    long double exact = 0.0L;
    long double c = 1.0L;  // C(n, i), exact in long double for n <= 62
    for (std::size_t i = 0; i <= n; ++i) {
      if (i >= k) exact += c;
      c = c * static_cast<long double>(n - i) / static_cast<long double>(i + 1);
    }
    total = static_cast<double>(exact / std::ldexp(1.0L, static_cast<int>(n)));
  } else {
    const double log_half_n = -static_cast<double>(n) * std::log(2.0);
    const double lgn = std::lgamma(static_cast<double>(n) + 1.0);
    for (std::size_t i = n + 1; i-- > k;) {
      const double lc =
          lgn - std::lgamma(static_cast<double>(i) + 1.0) - std::lgamma(static_cast<double>(n - i) + 1.0);
      total += std::exp(lc + log_half_n);
    }
  }
  return std::clamp(total, 0.0, 1.0);
}

TestResult mcnemar_test(std::size_t b, std::size_t c) {
  TestResult out;
  const std::size_t m = b + c;
  if (m == 0) return out;
  const double diff = std::max(0.0, std::fabs(static_cast<double>(b) - static_cast<double>(c)) - 1.0);
  out.statistic = diff * diff / static_cast<double>(m);
  if (m < 25) {
    out.p_value = binomial_half_upper(m, b);
  } else {
    const double tail = chi_square1_upper(out.statistic);
    out.p_value = b > c ? tail / 2.0 : 1.0 - tail / 2.0;
  }
  return out;
}

namespace {

// 1-based midranks of v.
std::vector<double> midranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

double sample_cov(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  if (n < 2) return 0.0;
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += (a[i] - ma) * (b[i] - mb);
  return s / static_cast<double>(n - 1);
}

}  // namespace

DelongComponents delong_components(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error(Errc::kShapeMismatch, "scores and labels differ in length");
  std::vector<double> pos;
  std::vector<double> neg;
  for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(scores[i]);
  if (pos.empty() || neg.empty()) throw Error(Errc::kUndefinedMetric, "AUC needs both classes");
  std::vector<double> all(pos);
  all.insert(all.end(), neg.begin(), neg.end());
  const auto r_all = midranks(all);
  const auto r_pos = midranks(pos);
  const auto r_neg = midranks(neg);
  const double m = static_cast<double>(pos.size());
  const double n = static_cast<double>(neg.size());

  DelongComponents out;
  out.v10.resize(pos.size());
  out.v01.resize(neg.size());
  for (std::size_t i = 0; i < pos.size(); ++i) out.v10[i] = (r_all[i] - r_pos[i]) / n;
  for (std::size_t j = 0; j < neg.size(); ++j) out.v01[j] = 1.0 - (r_all[pos.size() + j] - r_neg[j]) / m;
  out.auc = std::accumulate(out.v10.begin(), out.v10.end(), 0.0) / m;
  return out;
}

DelongResult delong_test(std::span<const double> scores_leaf, std::span<const double> scores_parent,
                         std::span<const int> labels) {
  if (scores_leaf.size() != scores_parent.size())
    throw Error(Errc::kShapeMismatch, "leaf and parent score vectors differ in length");
  const auto a = delong_components(scores_leaf, labels);
  const auto b = delong_components(scores_parent, labels);
  DelongResult out;
  out.auc_leaf = a.auc;
  out.auc_parent = b.auc;
  if (std::equal(scores_leaf.begin(), scores_leaf.end(), scores_parent.begin())) return out;

  const double m = static_cast<double>(a.v10.size());
  const double n = static_cast<double>(a.v01.size());
  const double s10 = sample_cov(a.v10, a.v10) + sample_cov(b.v10, b.v10) - 2.0 * sample_cov(a.v10, b.v10);
  const double s01 = sample_cov(a.v01, a.v01) + sample_cov(b.v01, b.v01) - 2.0 * sample_cov(a.v01, b.v01);
  out.variance = std::max(0.0, s10 / m + s01 / n);
  const double diff = a.auc - b.auc;
  if (out.variance <= 0.0) {
    out.statistic = diff > 0.0 ? DBL_MAX : 0.0;
    out.p_value = diff > 0.0 ? DBL_MIN : 1.0;
    return out;
  }
  out.statistic = diff / std::sqrt(out.variance);
  out.p_value = std::clamp(normal_upper(out.statistic), DBL_MIN, 1.0);
  return out;
}

TestResult bootstrap_test(std::size_t n, const ResampleRisk& risk, std::size_t resamples, std::uint64_t seed) {
  TestResult out;
  if (n == 0 || resamples == 0) return out;
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  double leaf = 0.0;
  double parent = 0.0;
  if (risk(rows, leaf, parent)) out.statistic = parent - leaf;

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::size_t null_count = 0;
  for (std::size_t b = 0; b < resamples; ++b) {
    for (auto& r : rows) r = pick(rng);
    if (!risk(rows, leaf, parent) || leaf >= parent) ++null_count;
  }
  out.p_value = static_cast<double>(null_count) / static_cast<double>(resamples);
  return out;
}

}  // namespace psys
