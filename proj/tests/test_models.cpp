#include <doctest.h>

#include <cmath>
#include <random>

#include "psys/error.hpp"
#include "psys/models.hpp"
#include "support.hpp"

using namespace psys;

namespace {

// Pairwise count of correctly ordered (positive, negative) pairs.
double auc_by_pairs(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1.0;
        num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return num / pairs;
}

ModelSpec spec(std::string id, ModelClass cls = ModelClass::kLogistic) {
  ModelSpec s;
  s.id = std::move(id);
  s.training_scope = ReportingGroup::none(2);
  s.model_class = cls;
  return s;
}

}  // namespace

TEST_SUITE("models") {
  TEST_CASE("auc of a small ranking") {
    const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
    const std::vector<int> y{0, 0, 1, 1};
    CHECK(auc(s, y) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(risk_from_scores(s, y, Metric::kAuc) == doctest::Approx(0.25));
  }

  TEST_CASE("auc matches the pairwise count with ties") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> level(0, 4);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> s(30);
      std::vector<int> y(30);
      for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] = level(rng) / 4.0;
        y[i] = static_cast<int>(i % 3 == 0);
      }
      CHECK(auc(s, y) == doctest::Approx(auc_by_pairs(s, y)).epsilon(1e-12));
    }
  }

  TEST_CASE("metric definedness") {
    const std::vector<int> one_class{1, 1, 1};
    CHECK(metric_defined(Metric::kError, one_class));
    CHECK_FALSE(metric_defined(Metric::kAuc, one_class));
    CHECK_FALSE(metric_defined(Metric::kError, std::vector<int>{}));
    CHECK_THROWS_AS(risk_from_scores(std::vector<double>{0.2, 0.3, 0.4}, one_class, Metric::kAuc), Error);
  }

  TEST_CASE("error risk thresholds at one half") {
    const std::vector<double> s{0.5, 0.49, 0.9, 0.1};
    const std::vector<int> y{1, 1, 0, 0};
    CHECK(risk_from_scores(s, y, Metric::kError) == 0.5);
    CHECK(label_from_score(0.5) == 1);
  }

  TEST_CASE("logistic fit is a stationary point of the objective") {
    TaskOptions t;
    t.k = 2;
    t.n = 800;
    t.d = 3;
    t.seed = 21;
    const Dataset d = random_task(t);
    const auto m = train_model(spec("g"), d, 1);
    CHECK(m.converged);
    const auto& p = std::get<LogisticParameters>(m.parameters);
    const auto grad = logistic_gradient(d.features(), d.labels(), p.coefficients, p.intercept,
                                        m.spec.hyperparameters.logistic.l2);
    for (double g : grad) CHECK(std::abs(g) < 1e-6);

    // Nudging any parameter lowers the objective.
    const double best =
        logistic_objective(d.features(), d.labels(), p.coefficients, p.intercept, m.spec.hyperparameters.logistic.l2);
    for (std::size_t j = 0; j < p.coefficients.size(); ++j) {
      auto c = p.coefficients;
      c[j] += 1e-3;
      CHECK(logistic_objective(d.features(), d.labels(), c, p.intercept, m.spec.hyperparameters.logistic.l2) < best);
    }
  }

  TEST_CASE("logistic gradient matches finite differences") {
    const Dataset d = random_task({});
    const std::vector<double> c{0.3, -0.2, 0.1};
    const double b = 0.05;
    const double l2 = 0.01;
    const auto grad = logistic_gradient(d.features(), d.labels(), c, b, l2);
    const double h = 1e-6;
    for (std::size_t j = 0; j < c.size(); ++j) {
      auto up = c;
      auto down = c;
      up[j] += h;
      down[j] -= h;
      const double fd = (logistic_objective(d.features(), d.labels(), up, b, l2) -
                         logistic_objective(d.features(), d.labels(), down, b, l2)) / (2 * h);
      CHECK(grad[j] == doctest::Approx(fd).epsilon(1e-5));
    }
    const double fd = (logistic_objective(d.features(), d.labels(), c, b + h, l2) -
                       logistic_objective(d.features(), d.labels(), c, b - h, l2)) / (2 * h);
    CHECK(grad.back() == doctest::Approx(fd).epsilon(1e-5));
  }

  TEST_CASE("training is deterministic for a seed") {
    const Dataset d = random_task({});
    auto forest = spec("f", ModelClass::kForest);
    forest.hyperparameters.forest.trees = 10;
    const auto a = train_model(forest, d, 3);
    const auto b = train_model(forest, d, 3);
    CHECK(predict_scores(a, d) == predict_scores(b, d));
    const auto c = train_model(forest, d, 4);
    CHECK(predict_scores(a, d) != predict_scores(c, d));
    for (double s : predict_scores(a, d)) CHECK((s >= 0.0 && s <= 1.0));
  }

  TEST_CASE("a forest beats chance on separable data") {
    TaskOptions t;
    t.n = 1500;
    t.seed = 8;
    const Dataset d = random_task(t);
    auto forest = spec("f", ModelClass::kForest);
    forest.hyperparameters.forest.trees = 20;
    const auto m = train_model(forest, d, 1);
    CHECK(empirical_risk(m, d, Metric::kAuc) < 0.3);
  }

  TEST_CASE("training needs both classes in scope") {
    const auto f = figure_one();
    auto s = spec("fo");
    s.kind = ModelKind::kSubgroup;
    s.training_scope = ReportingGroup({0, 0});
    s.required_attributes = {0, 1};
    CHECK_FALSE(can_train(s, f.data));
    try {
      train_model(s, f.data, 0);
      FAIL("trained on one class");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::kInsufficientData);
    }
  }

  TEST_CASE("prediction checks width and reported attributes") {
    const auto f = figure_one();
    const std::vector<double> x{0.3};
    CHECK(predict_one(f.h, f.data.schema(), x, ReportingGroup({0, 1})) == 1.0);
    CHECK(predict_one(f.h, f.data.schema(), x, ReportingGroup({1, 1})) == 0.0);
    CHECK(predict_one(f.h0, f.data.schema(), x, ReportingGroup::none(2)) == 0.0);
    try {
      predict_one(f.h, f.data.schema(), x, ReportingGroup({0, kNotReported}));
      FAIL("predicted without a required attribute");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::kPartialInput);
    }
    const std::vector<double> wide{0.3, 0.4};
    try {
      predict_one(f.h0, f.data.schema(), wide, ReportingGroup::none(2));
      FAIL("accepted a wide feature vector");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::kShapeMismatch);
    }
  }

  TEST_CASE("fixed rules reproduce the example error counts") {
    const auto f = figure_one();
    CHECK(empirical_risk(f.h, f.data, Metric::kError) * 101 == doctest::Approx(24));
    CHECK(empirical_risk(f.h0, f.data, Metric::kError) * 101 == doctest::Approx(50));
  }

  TEST_CASE("spec validation") {
    const auto f = figure_one();
    auto s = spec("bad");
    s.required_attributes = {1, 0};
    CHECK_THROWS_AS(s.validate(f.data.schema()), Error);
    s.required_attributes = {3};
    CHECK_THROWS_AS(s.validate(f.data.schema()), Error);
    CHECK(parse_model_class("forest") == ModelClass::kForest);
    CHECK_THROWS_AS(parse_metric("f1"), Error);
  }
}
