#pragma once

#include <cstddef>
#include <vector>

#include "psys/pool.hpp"

// Reference implementations written independently of the library.
namespace psys::oracle {

// Independent count of sequential trees: pick a root attribute, then every
// child subtree independently covers the attributes left over.
inline std::size_t count_by_recursion(const std::vector<std::size_t>& levels, std::vector<bool> used) {
  std::size_t total = 0;
  bool any = false;
  for (std::size_t a = 0; a < levels.size(); ++a) {
    if (used[a]) continue;
    any = true;
    used[a] = true;
    const std::size_t sub = count_by_recursion(levels, used);
    used[a] = false;
    std::size_t product = 1;
    for (std::size_t l = 0; l < levels[a]; ++l) product *= sub;
    total += product;
  }
  return any ? total : 1;
}

// Viability written out from the definition: inputs reported, scope covering.
inline bool can_serve(const TrainedModel& m, const ReportingGroup& r) {
  for (auto a : m.spec.required_attributes)
    if (!r.reported(a)) return false;
  for (std::size_t a = 0; a < r.size(); ++a)
    if (m.spec.training_scope.reported(a) && m.spec.training_scope[a] != r[a]) return false;
  return true;
}

// Row n of Pascal's triangle scaled by 2^-n, built by repeated halving sums.
inline std::vector<long double> half_binomial_pmf(std::size_t n) {
  std::vector<long double> row{1.0L};
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<long double> next(row.size() + 1, 0.0L);
    for (std::size_t j = 0; j < row.size(); ++j) {
      next[j] += row[j] / 2;
      next[j + 1] += row[j] / 2;
    }
    row = std::move(next);
  }
  return row;
}

inline double tail(const std::vector<long double>& pmf, std::size_t k) {
  long double s = 0.0L;
  for (std::size_t j = k; j < pmf.size(); ++j) s += pmf[j];
  return static_cast<double>(s);
}

// DeLong variance from the O(n^2) structural components.
inline double direct_delong_variance(const std::vector<double>& a, const std::vector<double>& b, const std::vector<int>& y) {
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  for (std::size_t i = 0; i < y.size(); ++i) (y[i] ? pos : neg).push_back(i);
  auto psi = [](double u, double v) { return u > v ? 1.0 : u == v ? 0.5 : 0.0; };
  const double m = static_cast<double>(pos.size());
  const double n = static_cast<double>(neg.size());
  std::vector<double> v10a, v10b, v01a, v01b;
  for (auto i : pos) {
    double sa = 0, sb = 0;
    for (auto j : neg) {
      sa += psi(a[i], a[j]);
      sb += psi(b[i], b[j]);
    }
    v10a.push_back(sa / n);
    v10b.push_back(sb / n);
  }
  for (auto j : neg) {
    double sa = 0, sb = 0;
    for (auto i : pos) {
      sa += psi(a[i], a[j]);
      sb += psi(b[i], b[j]);
    }
    v01a.push_back(sa / m);
    v01b.push_back(sb / m);
  }
  auto cov = [](const std::vector<double>& u, const std::vector<double>& v) {
    if (u.size() < 2) return 0.0;
    double mu = 0, mv = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      mu += u[i];
      mv += v[i];
    }
    mu /= static_cast<double>(u.size());
    mv /= static_cast<double>(v.size());
    double s = 0;
    for (std::size_t i = 0; i < u.size(); ++i) s += (u[i] - mu) * (v[i] - mv);
    return s / static_cast<double>(u.size() - 1);
  };
  const double s10 = cov(v10a, v10a) + cov(v10b, v10b) - 2 * cov(v10a, v10b);
  const double s01 = cov(v01a, v01a) + cov(v01b, v01b) - 2 * cov(v01a, v01b);
  return s10 / m + s01 / n;
}

}  // namespace psys::oracle
