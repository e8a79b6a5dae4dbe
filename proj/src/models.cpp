#include "psys/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include "psys/error.hpp"

namespace psys {

std::string_view model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kGeneric: return "generic";
    case ModelKind::kOneHot: return "onehot";
    case ModelKind::kIntersectional: return "intersectional";
    case ModelKind::kSubgroup: return "subgroup";
    case ModelKind::kFixed: return "fixed";
  }
  return "generic";
}

ModelKind parse_model_kind(std::string_view name) {
  for (auto k : {ModelKind::kGeneric, ModelKind::kOneHot, ModelKind::kIntersectional, ModelKind::kSubgroup,
                 ModelKind::kFixed})
    if (model_kind_name(k) == name) return k;
  throw Error(Errc::kInvalidArgument, "unknown model kind '" + std::string(name) + "'");
}

std::string_view model_class_name(ModelClass c) {
  switch (c) {
    case ModelClass::kLogistic: return "logistic";
    case ModelClass::kForest: return "forest";
    case ModelClass::kFixedRule: return "fixed_rule";
  }
  return "logistic";
}

ModelClass parse_model_class(std::string_view name) {
  for (auto c : {ModelClass::kLogistic, ModelClass::kForest, ModelClass::kFixedRule})
    if (model_class_name(c) == name) return c;
  throw Error(Errc::kInvalidArgument, "unknown model class '" + std::string(name) + "'");
}

std::string_view metric_name(Metric m) { return m == Metric::kError ? "error" : "auc"; }

Metric parse_metric(std::string_view name) {
  if (name == "error") return Metric::kError;
  if (name == "auc") return Metric::kAuc;
  throw Error(Errc::kInvalidArgument, "unknown metric '" + std::string(name) + "'");
}

void ModelSpec::validate(const GroupSchema& schema) const {
  if (id.empty()) throw Error(Errc::kInvalidArgument, "model spec without id");
  schema.check(training_scope);
  if (!std::is_sorted(required_attributes.begin(), required_attributes.end()) ||
      std::adjacent_find(required_attributes.begin(), required_attributes.end()) != required_attributes.end())
    throw Error(Errc::kInvalidArgument, "required attributes of '" + id + "' must be sorted and unique");
  for (auto a : required_attributes)
    if (a >= schema.k()) throw Error(Errc::kInvalidArgument, "required attribute out of range in '" + id + "'");
  if (kind == ModelKind::kGeneric &&
      (!required_attributes.empty() || encoding != Encoding::kNone || !training_scope.is_none()))
    throw Error(Errc::kInvalidArgument, "generic model '" + id + "' may not use group attributes");
  if (kind == ModelKind::kSubgroup && training_scope.is_none())
    throw Error(Errc::kInvalidArgument, "subgroup model '" + id + "' needs a reported training scope");
  if (encoding != Encoding::kNone && required_attributes.size() != schema.k())
    throw Error(Errc::kInvalidArgument, "encoded model '" + id + "' must require every attribute");
}

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

LogisticParameters fit_logistic(const FeatureMatrix& x, std::span<const int> y, const LogisticOptions& opt,
                                bool& converged) {
  const auto n = static_cast<Eigen::Index>(x.rows());
  const auto p = static_cast<Eigen::Index>(x.cols());
  Eigen::Map<const RowMatrix> xm(x.values().data(), n, p);
  // Design with a trailing intercept column.
  Eigen::MatrixXd design(n, p + 1);
  design.leftCols(p) = xm;
  design.col(p).setOnes();
  Eigen::VectorXd yv(n);
  for (Eigen::Index i = 0; i < n; ++i) yv[i] = y[static_cast<std::size_t>(i)];

  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(p + 1, opt.l2);
  penalty[p] = 0.0;

  auto objective = [&](const Eigen::VectorXd& theta) {
    Eigen::VectorXd z = design * theta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) ll += yv[i] * z[i] - softplus(z[i]);
    return ll * inv_n - 0.5 * theta.cwiseProduct(penalty).dot(theta);
  };

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(p + 1);
  double current = objective(theta);
  converged = false;
  int iter = 0;
  for (; iter < opt.max_iterations; ++iter) {
    Eigen::VectorXd z = design * theta;
    Eigen::VectorXd prob(n), weight(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      prob[i] = sigmoid(z[i]);
      weight[i] = prob[i] * (1.0 - prob[i]);
    }
    Eigen::VectorXd grad = design.transpose() * (yv - prob) * inv_n - penalty.cwiseProduct(theta);
    Eigen::MatrixXd hess = design.transpose() * weight.asDiagonal() * design * inv_n;
    hess.diagonal() += penalty;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    Eigen::VectorXd step = ldlt.solve(grad);
    if (ldlt.info() != Eigen::Success || !step.allFinite()) {
      hess.diagonal().array() += 1e-10;
      step = hess.colPivHouseholderQr().solve(grad);
    }
    // Backtrack until the objective does not decrease.
    double scale = 1.0;
    Eigen::VectorXd candidate = theta + step;
    double value = objective(candidate);
    while (value < current - 1e-15 * std::abs(current) && scale > 1e-10) {
      scale *= 0.5;
      candidate = theta + scale * step;
      value = objective(candidate);
    }
    const double update = (scale * step).cwiseAbs().maxCoeff();
    theta = candidate;
    current = value;
    if (update < opt.tolerance) {
      converged = true;
      ++iter;
      break;
    }
  }

  LogisticParameters out;
  out.coefficients.assign(theta.data(), theta.data() + p);
  out.intercept = theta[p];
  out.iterations = iter;
  return out;
}

// ---------------------------------------------------------------------------
// CART forest

struct ForestBuilder {
  const FeatureMatrix& x;
  std::span<const int> y;
  int max_depth;
  std::size_t mtry;
  std::mt19937_64 rng;

  double positive_fraction(std::span<const std::size_t> rows) const {
    std::size_t pos = 0;
    for (auto r : rows) pos += static_cast<std::size_t>(y[r]);
    return static_cast<double>(pos) / static_cast<double>(rows.size());
  }

  int grow(DecisionTree& tree, std::vector<std::size_t>& rows, std::size_t begin, std::size_t end, int depth) {
    const std::span<const std::size_t> node_rows(rows.data() + begin, end - begin);
    const double frac = positive_fraction(node_rows);
    const int index = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(TreeNode{-1, 0.0, -1, -1, frac});
    if (depth >= max_depth || frac == 0.0 || frac == 1.0 || node_rows.size() < 2) return index;

    const std::size_t width = x.cols();
    std::vector<std::size_t> candidates(width);
    std::iota(candidates.begin(), candidates.end(), std::size_t{0});
    // Partial Fisher-Yates for the first mtry features.
    for (std::size_t i = 0; i < mtry && i < width; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, width - 1);
      std::swap(candidates[i], candidates[pick(rng)]);
    }

    const double total = static_cast<double>(node_rows.size());
    double total_pos = 0.0;
    for (auto r : node_rows) total_pos += y[r];
    const double parent_impurity = 1.0 - frac * frac - (1.0 - frac) * (1.0 - frac);
    double best_impurity = parent_impurity - 1e-12;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::pair<double, int>> values(node_rows.size());
    for (std::size_t c = 0; c < std::min(mtry, width); ++c) {
      const std::size_t f = candidates[c];
      for (std::size_t i = 0; i < node_rows.size(); ++i) values[i] = {x(node_rows[i], f), y[node_rows[i]]};
      std::sort(values.begin(), values.end());
      double left_pos = 0.0;
      for (std::size_t i = 0; i + 1 < values.size(); ++i) {
        left_pos += values[i].second;
        if (values[i].first == values[i + 1].first) continue;
        const double nl = static_cast<double>(i + 1);
        const double nr = total - nl;
        const double pl = left_pos / nl;
        const double pr = (total_pos - left_pos) / nr;
        const double impurity =
            (nl * (2.0 * pl * (1.0 - pl)) + nr * (2.0 * pr * (1.0 - pr))) / total;
        if (impurity < best_impurity) {
          best_impurity = impurity;
          best_feature = static_cast<int>(f);
          best_threshold = 0.5 * (values[i].first + values[i + 1].first);
        }
      }
    }
    if (best_feature < 0) return index;

    auto mid = std::partition(rows.begin() + static_cast<std::ptrdiff_t>(begin),
                              rows.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t r) {
                                return x(r, static_cast<std::size_t>(best_feature)) <= best_threshold;
                              });
    const auto split = static_cast<std::size_t>(mid - rows.begin());
    const int left = grow(tree, rows, begin, split, depth + 1);
    const int right = grow(tree, rows, split, end, depth + 1);
    tree.nodes[static_cast<std::size_t>(index)].feature = best_feature;
    tree.nodes[static_cast<std::size_t>(index)].threshold = best_threshold;
    tree.nodes[static_cast<std::size_t>(index)].left = left;
    tree.nodes[static_cast<std::size_t>(index)].right = right;
    return index;
  }
};

ForestParameters fit_forest(const FeatureMatrix& x, std::span<const int> y, const ForestOptions& opt,
                            std::uint64_t seed) {
  const std::size_t n = x.rows();
  std::size_t mtry = opt.features_per_split > 0
                         ? static_cast<std::size_t>(opt.features_per_split)
                         : static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(x.cols()))));
  mtry = std::clamp<std::size_t>(mtry, 1, x.cols());
  ForestParameters forest;
  for (int t = 0; t < opt.trees; ++t) {
    ForestBuilder builder{x, y, opt.max_depth, mtry, std::mt19937_64(hash_combine(seed, static_cast<std::uint64_t>(t)))};
    std::vector<std::size_t> rows(n);
    std::uniform_int_distribution<std::size_t> draw(0, n - 1);
    for (auto& r : rows) r = draw(builder.rng);
    DecisionTree tree;
    builder.grow(tree, rows, 0, n, 0);
    forest.trees.push_back(std::move(tree));
  }
  return forest;
}

double tree_score(const DecisionTree& tree, std::span<const double> row) {
  std::size_t i = 0;
  while (tree.nodes[i].feature >= 0) {
    const auto& node = tree.nodes[i];
    i = static_cast<std::size_t>(row[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left
                                                                                                : node.right);
  }
  return tree.nodes[i].value;
}

std::vector<int> rule_key(const ModelSpec& spec, const ReportingGroup& report) {
  std::vector<int> key;
  key.reserve(spec.required_attributes.size());
  for (auto a : spec.required_attributes) {
    if (!report.reported(a))
      throw Error(Errc::kPartialInput, "model '" + spec.id + "' needs attribute " + std::to_string(a));
    key.push_back(report[a]);
  }
  return key;
}

}  // namespace

bool can_train(const ModelSpec& spec, const Dataset& d) {
  if (spec.model_class == ModelClass::kFixedRule) return false;
  const auto rows = rows_matching(d, spec.training_scope);
  std::size_t pos = 0;
  for (auto r : rows) pos += static_cast<std::size_t>(d.labels()[r]);
  const std::size_t width = encoded_width(d.schema(), d.d(), spec.encoding);
  return pos >= 1 && pos < rows.size() && rows.size() >= width + 1;
}

TrainedModel train_model(const ModelSpec& spec, const Dataset& d, std::uint64_t seed) {
  spec.validate(d.schema());
  if (spec.model_class == ModelClass::kFixedRule)
    throw Error(Errc::kInvalidArgument, "fixed-rule model '" + spec.id + "' is not trained; use make_fixed_model");
  const Dataset scope = restrict_to(d, spec.training_scope);
  const std::size_t width = encoded_width(d.schema(), d.d(), spec.encoding);
  if (scope.positives() == 0 || scope.negatives() == 0 || scope.n() < width + 1)
    throw Error(Errc::kInsufficientData, "model '" + spec.id + "' has " + std::to_string(scope.positives()) +
                                             " positives, " + std::to_string(scope.negatives()) +
                                             " negatives for width " + std::to_string(width));
  const FeatureMatrix x = encode_features(scope, spec.encoding);

  TrainedModel model;
  model.spec = spec;
  model.feature_width = d.d();
  model.data_fingerprint = scope.fingerprint();
  model.seed = seed;
  if (spec.model_class == ModelClass::kLogistic) {
    bool converged = false;
    model.parameters = fit_logistic(x, scope.labels(), spec.hyperparameters.logistic, converged);
    model.converged = converged;
    if (!converged) spdlog::warn("model '{}' did not converge; keeping best iterate", spec.id);
  } else {
    model.parameters = fit_forest(x, scope.labels(), spec.hyperparameters.forest, seed);
  }
  return model;
}

TrainedModel make_fixed_model(ModelSpec spec, std::size_t feature_width, FixedRuleParameters rule) {
  spec.model_class = ModelClass::kFixedRule;
  for (const auto& [key, score] : rule.scores) {
    if (key.size() != spec.required_attributes.size())
      throw Error(Errc::kInvalidArgument, "rule key width does not match required attributes of '" + spec.id + "'");
    if (!(score >= 0.0 && score <= 1.0)) throw Error(Errc::kInvalidArgument, "rule scores must lie in [0,1]");
  }
  if (!(rule.default_score >= 0.0 && rule.default_score <= 1.0))
    throw Error(Errc::kInvalidArgument, "rule scores must lie in [0,1]");
  TrainedModel model;
  model.spec = std::move(spec);
  model.feature_width = feature_width;
  model.parameters = std::move(rule);
  return model;
}

double predict_one(const TrainedModel& m, const GroupSchema& schema, std::span<const double> features,
                   const ReportingGroup& report) {
  if (features.size() != m.feature_width)
    throw Error(Errc::kShapeMismatch, "model '" + m.spec.id + "' expects " + std::to_string(m.feature_width) +
                                          " features, got " + std::to_string(features.size()));
  for (auto a : m.spec.required_attributes)
    if (a >= report.size() || !report.reported(a))
      throw Error(Errc::kPartialInput, "model '" + m.spec.id + "' needs attribute " + std::to_string(a));

  if (const auto* rule = std::get_if<FixedRuleParameters>(&m.parameters)) {
    auto it = rule->scores.find(rule_key(m.spec, report));
    return it == rule->scores.end() ? rule->default_score : it->second;
  }
  std::vector<double> row(encoded_width(schema, features.size(), m.spec.encoding));
  encode_row(schema, features, report, m.spec.encoding, row);
  if (const auto* lr = std::get_if<LogisticParameters>(&m.parameters)) {
    if (lr->coefficients.size() != row.size()) throw Error(Errc::kShapeMismatch, "coefficient width mismatch");
    double z = lr->intercept;
    for (std::size_t j = 0; j < row.size(); ++j) z += lr->coefficients[j] * row[j];
    return sigmoid(z);
  }
  const auto& forest = std::get<ForestParameters>(m.parameters);
  if (forest.trees.empty()) return 0.5;
  double total = 0.0;
  for (const auto& tree : forest.trees) total += tree_score(tree, row);
  return total / static_cast<double>(forest.trees.size());
}

std::vector<double> predict_scores(const TrainedModel& m, const GroupSchema& schema, const FeatureMatrix& features,
                                   std::span<const ReportingGroup> reports) {
  if (reports.size() != features.rows()) throw Error(Errc::kShapeMismatch, "one report per row required");
  if (features.rows() > 0 && features.cols() != m.feature_width)
    throw Error(Errc::kShapeMismatch, "model '" + m.spec.id + "' expects " + std::to_string(m.feature_width) +
                                          " features, got " + std::to_string(features.cols()));
  std::vector<double> out(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) out[i] = predict_one(m, schema, features.row(i), reports[i]);
  return out;
}

std::vector<double> predict_scores(const TrainedModel& m, const Dataset& d) {
  return predict_scores(m, d.schema(), d.features(), d.groups());
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error(Errc::kShapeMismatch, "scores and labels differ in length");
  std::size_t pos = 0;
  for (int y : labels) pos += static_cast<std::size_t>(y);
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw Error(Errc::kUndefinedMetric, "AUC needs both classes");
  // Rank-sum with midranks for ties.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t)
      if (labels[order[t]] == 1) rank_sum += midrank;
    i = j;
  }
  const double p = static_cast<double>(pos);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(neg));
}

bool metric_defined(Metric metric, std::span<const int> labels) {
  if (labels.empty()) return false;
  if (metric == Metric::kError) return true;
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  return pos > 0 && static_cast<std::size_t>(pos) < labels.size();
}

double risk_from_scores(std::span<const double> scores, std::span<const int> labels, Metric metric) {
  if (scores.size() != labels.size()) throw Error(Errc::kShapeMismatch, "scores and labels differ in length");
  if (labels.empty()) throw Error(Errc::kUndefinedMetric, "risk on an empty sample");
  if (metric == Metric::kAuc) return 1.0 - auc(scores, labels);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) wrong += label_from_score(scores[i]) != labels[i] ? 1 : 0;
  return static_cast<double>(wrong) / static_cast<double>(labels.size());
}

double empirical_risk(const TrainedModel& m, const Dataset& d, Metric metric) {
  return risk_from_scores(predict_scores(m, d), d.labels(), metric);
}

double logistic_objective(const FeatureMatrix& x, std::span<const int> y, std::span<const double> coefficients,
                          double intercept, double l2) {
  double ll = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double z = intercept;
    for (std::size_t j = 0; j < x.cols(); ++j) z += coefficients[j] * x(i, j);
    ll += y[i] * z - softplus(z);
  }
  double reg = 0.0;
  for (double w : coefficients) reg += w * w;
  return ll / static_cast<double>(x.rows()) - 0.5 * l2 * reg;
}

std::vector<double> logistic_gradient(const FeatureMatrix& x, std::span<const int> y,
                                      std::span<const double> coefficients, double intercept, double l2) {
  std::vector<double> grad(x.cols() + 1, 0.0);
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double z = intercept;
    for (std::size_t j = 0; j < x.cols(); ++j) z += coefficients[j] * x(i, j);
    const double r = (y[i] - sigmoid(z)) * inv_n;
    for (std::size_t j = 0; j < x.cols(); ++j) grad[j] += r * x(i, j);
    grad[x.cols()] += r;
  }
  for (std::size_t j = 0; j < x.cols(); ++j) grad[j] -= l2 * coefficients[j];
  return grad;
}

}  // namespace psys
