#include "psys/synthetic.hpp"

#include <cmath>
#include <random>

#include "psys/error.hpp"

namespace psys {

namespace {

GroupSchema sex_age() {
  return GroupSchema({{"sex", {"female", "male"}}, {"age", {"old", "young"}}});
}

}  // namespace

FigureOne figure_one() {
  FigureOne f;
  const GroupSchema schema = sex_age();
  struct Cell {
    int sex, age;
    std::size_t pos, neg;
  };
  const Cell cells[] = {{0, 0, 0, 24}, {0, 1, 25, 0}, {1, 0, 25, 0}, {1, 1, 0, 27}};
  std::vector<double> x;
  std::vector<int> y;
  std::vector<ReportingGroup> g;
  for (const auto& c : cells) {
    for (std::size_t i = 0; i < c.pos + c.neg; ++i) {
      x.push_back(static_cast<double>(y.size() % 10) / 10.0);
      y.push_back(i < c.pos ? 1 : 0);
      g.emplace_back(std::vector<int>{c.sex, c.age});
    }
  }
  const std::size_t n = y.size();
  f.data = Dataset(schema, {"x"}, FeatureMatrix(n, 1, std::move(x)), std::move(y), std::move(g));

  f.config.label_column = "y";
  f.config.feature_columns = {"x"};
  f.config.schema = schema;
  f.config.group_columns = {"sex", "age"};

  ModelSpec h;
  h.id = "h";
  h.kind = ModelKind::kFixed;
  h.required_attributes = {0, 1};
  h.training_scope = ReportingGroup::none(2);
  h.model_class = ModelClass::kFixedRule;
  FixedRuleParameters hr;
  hr.scores = {{{0, 0}, 1.0}, {{0, 1}, 1.0}, {{1, 0}, 1.0}, {{1, 1}, 0.0}};
  f.h = make_fixed_model(h, 1, hr);

  ModelSpec h0;
  h0.id = "h0";
  h0.kind = ModelKind::kFixed;
  h0.training_scope = ReportingGroup::none(2);
  h0.model_class = ModelClass::kFixedRule;
  f.h0 = make_fixed_model(h0, 1, FixedRuleParameters{});
  return f;
}

Dataset random_task(const TaskOptions& o) {
  if (o.k == 0 || o.n == 0 || o.d == 0 || o.max_levels < 2)
    throw Error(Errc::kInvalidConfig, "random task needs k, n, d >= 1 and at least two levels");
  std::mt19937_64 rng(o.seed);
  std::uniform_int_distribution<std::size_t> levels(2, o.max_levels);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<GroupAttribute> attrs;
  for (std::size_t a = 0; a < o.k; ++a) {
    GroupAttribute attr;
    attr.name = "g" + std::to_string(a + 1);
    const std::size_t m = levels(rng);
    for (std::size_t l = 0; l < m; ++l) attr.levels.push_back("v" + std::to_string(l));
    attrs.push_back(std::move(attr));
  }
  GroupSchema schema(attrs);
  const auto groups = schema.full_groups();

  // Uneven group frequencies; roughly half the groups get their own shift.
  std::vector<double> weight(groups.size());
  std::vector<double> shift(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    weight[i] = 0.3 + unit(rng);
    shift[i] = unit(rng) < 0.5 ? o.group_effect * normal(rng) : 0.0;
  }
  std::vector<double> coef(o.d);
  for (auto& c : coef) c = normal(rng);
  std::discrete_distribution<std::size_t> pick(weight.begin(), weight.end());

  std::vector<double> x;
  std::vector<int> y;
  std::vector<ReportingGroup> g;
  for (std::size_t i = 0; i < o.n; ++i) {
    const std::size_t gi = pick(rng);
    double logit = shift[gi];
    for (std::size_t j = 0; j < o.d; ++j) {
      const double v = normal(rng);
      x.push_back(v);
      logit += coef[j] * v;
    }
    y.push_back(unit(rng) < 1.0 / (1.0 + std::exp(-logit)) ? 1 : 0);
    g.push_back(groups[gi]);
  }
  std::vector<std::string> names;
  for (std::size_t j = 0; j < o.d; ++j) names.push_back("x" + std::to_string(j + 1));
  return Dataset(schema, std::move(names), FeatureMatrix(o.n, o.d, std::move(x)), std::move(y), std::move(g));
}

Dataset worsenalization_task(std::uint64_t seed, std::size_t scale) {
  if (scale == 0) throw Error(Errc::kInvalidConfig, "scale must be positive");
  const GroupSchema schema = sex_age();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  struct Cell {
    int sex, age;
    std::size_t size;
    double intercept;
  };
  // Three large cells pin the additive fit: intercept -2, +4 for male, +4
  // for young. The smaller (male, young) cell breaks additivity with -2, so
  // the one-hot model scores it near +6 and predicts the minority label.
  const Cell cells[] = {{0, 0, 30, -2.0}, {0, 1, 30, 2.0}, {1, 0, 30, 2.0}, {1, 1, 15, -2.0}};
  std::vector<double> x;
  std::vector<int> y;
  std::vector<ReportingGroup> g;
  for (const auto& c : cells) {
    for (std::size_t i = 0; i < c.size * scale; ++i) {
      const double v = normal(rng);
      x.push_back(v);
      const double logit = c.intercept + 1.5 * v;
      y.push_back(unit(rng) < 1.0 / (1.0 + std::exp(-logit)) ? 1 : 0);
      g.emplace_back(std::vector<int>{c.sex, c.age});
    }
  }
  const std::size_t n = y.size();
  return Dataset(schema, {"x1"}, FeatureMatrix(n, 1, std::move(x)), std::move(y), std::move(g));
}

SchemaConfig config_for(const Dataset& d) {
  SchemaConfig c;
  c.label_column = "y";
  c.feature_columns = d.feature_names();
  c.schema = d.schema();
  for (const auto& a : d.schema().attributes()) c.group_columns.push_back(a.name);
  return c;
}

}  // namespace psys
