#include <doctest.h>

#include <cmath>
#include <random>

#include "psys/stats.hpp"
#include "oracles.hpp"

using namespace psys;
using namespace psys::oracle;

TEST_SUITE("stats") {
  TEST_CASE("mcnemar statistic with continuity correction") {
    const auto r = mcnemar_test(25, 0);
    CHECK(r.statistic == 23.04);
    CHECK(r.p_value == doctest::Approx(7.933281519755943e-07).epsilon(1e-9));

    const auto s = mcnemar_test(10, 2);
    CHECK(s.statistic == doctest::Approx(49.0 / 12.0).epsilon(1e-15));
    // Small sample: exact P(X >= 10), X ~ Bin(12, 1/2) = 79 / 4096.
    CHECK(s.p_value == doctest::Approx(79.0 / 4096.0).epsilon(1e-14));
  }

  TEST_CASE("mcnemar edge cases") {
    const auto none = mcnemar_test(0, 0);
    CHECK(none.statistic == 0.0);
    CHECK(none.p_value == 1.0);
    // The parent winning can never give a small p.
    CHECK(mcnemar_test(0, 30).p_value > 0.99);
    CHECK(mcnemar_test(2, 10).p_value > 0.9);
    // |b - c| = 1 is fully absorbed by the correction.
    CHECK(mcnemar_test(13, 12).statistic == 0.0);
  }

  TEST_CASE("small-sample branch matches exact binomial tails") {
    for (std::size_t n = 1; n < 25; ++n) {
      const auto pmf = half_binomial_pmf(n);
      for (std::size_t b = 0; b <= n; ++b) {
        const auto r = mcnemar_test(b, n - b);
        CHECK(std::abs(r.p_value - tail(pmf, b)) < 1e-12);
      }
    }
  }

  TEST_CASE("binomial tails across the exact and log-space ranges") {
    for (std::size_t n : {1u, 7u, 24u, 40u, 62u, 63u, 80u, 120u}) {
      const auto pmf = half_binomial_pmf(n);
      for (std::size_t k = 0; k <= n; ++k) {
        const double expected = tail(pmf, k);
        CHECK(std::abs(binomial_half_upper(n, k) - expected) <= 1e-12 * std::max(1.0, expected));
      }
    }
    CHECK(binomial_half_upper(120, 60) == doctest::Approx(0.536342489455058).epsilon(1e-12));
    CHECK(binomial_half_upper(100, 70) == doctest::Approx(3.925069822796835e-05).epsilon(1e-10));
    CHECK(binomial_half_upper(10, 11) == 0.0);
  }

  TEST_CASE("tail helpers") {
    CHECK(normal_upper(1.2345) == doctest::Approx(0.10850832336267019).epsilon(1e-12));
    CHECK(chi_square1_upper(3.0) == doctest::Approx(0.08326451666355042).epsilon(1e-12));
    CHECK(normal_upper(0.0) == 0.5);
    CHECK(chi_square1_upper(0.0) == 1.0);
  }

  TEST_CASE("delong variance matches the direct computation") {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> grid(0, 6);
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> a(10), b(10);
      std::vector<int> y(10);
      for (std::size_t i = 0; i < 10; ++i) {
        y[i] = static_cast<int>(i < 4 + trial % 3);
        // Coarse grids produce ties; every third trial uses continuous scores.
        a[i] = trial % 3 == 0 ? normal(rng) : grid(rng) / 6.0;
        b[i] = trial % 3 == 0 ? normal(rng) : grid(rng) / 6.0;
      }
      const auto r = delong_test(a, b, y);
      CHECK(std::abs(r.variance - direct_delong_variance(a, b, y)) < 1e-10);
      const auto ca = delong_components(a, y);
      double mean = 0;
      for (double v : ca.v10) mean += v;
      CHECK(mean / static_cast<double>(ca.v10.size()) == doctest::Approx(ca.auc).epsilon(1e-12));
      if (r.variance > 0) {
        const double z = (r.auc_leaf - r.auc_parent) / std::sqrt(r.variance);
        CHECK(r.statistic == doctest::Approx(z).epsilon(1e-12));
        CHECK(r.p_value == doctest::Approx(normal_upper(z)).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("identical predictions give p = 1") {
    const std::vector<double> s{0.1, 0.7, 0.3, 0.9, 0.5};
    const std::vector<int> y{0, 1, 0, 1, 1};
    const auto d = delong_test(s, s, y);
    CHECK(d.p_value == 1.0);
    CHECK(d.statistic == 0.0);
    CHECK(mcnemar_test(0, 0).p_value == 1.0);
    const auto boot = bootstrap_test(
        5, [](std::span<const std::size_t>, double& leaf, double& parent) {
          leaf = 0.2;
          parent = 0.2;
          return true;
        },
        50, 1);
    CHECK(boot.p_value == 1.0);
  }

  TEST_CASE("bootstrap is seeded and detects a clear gap") {
    // Leaf right on every row, parent wrong on half.
    std::vector<int> parent_wrong(200);
    for (std::size_t i = 0; i < parent_wrong.size(); ++i) parent_wrong[i] = static_cast<int>(i % 2);
    auto risk = [&](std::span<const std::size_t> rows, double& leaf, double& parent) {
      double wrong = 0;
      for (auto r : rows) wrong += parent_wrong[r];
      leaf = 0.0;
      parent = wrong / static_cast<double>(rows.size());
      return true;
    };
    const auto a = bootstrap_test(200, risk, 100, 9);
    const auto b = bootstrap_test(200, risk, 100, 9);
    CHECK(a.p_value == b.p_value);
    CHECK(a.p_value == 0.0);
    CHECK(a.statistic == doctest::Approx(0.5));

    // Undefined resamples count toward the null.
    const auto undefined = bootstrap_test(
        10, [](std::span<const std::size_t>, double&, double&) { return false; }, 20, 1);
    CHECK(undefined.p_value == 1.0);
  }
}
