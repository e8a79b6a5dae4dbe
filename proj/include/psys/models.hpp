#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "psys/dataset.hpp"

namespace psys {

enum class ModelKind { kGeneric, kOneHot, kIntersectional, kSubgroup, kFixed };
enum class ModelClass { kLogistic, kForest, kFixedRule };

// Risks are lower-is-better: error rate, or 1 - AUC.
enum class Metric { kError, kAuc };

std::string_view model_kind_name(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);
std::string_view model_class_name(ModelClass c);
ModelClass parse_model_class(std::string_view name);
std::string_view metric_name(Metric m);
Metric parse_metric(std::string_view name);

struct LogisticOptions {
  double l2 = 1e-4;
  double tolerance = 1e-8;
  int max_iterations = 500;
};

struct ForestOptions {
  int trees = 100;
  int max_depth = 8;
  // 0 picks floor(sqrt(width)).
  int features_per_split = 0;
};

struct Hyperparameters {
  LogisticOptions logistic;
  ForestOptions forest;
};

struct ModelSpec {
  std::string id;
  ModelKind kind = ModelKind::kGeneric;
  // Sorted attribute indices the model reads at prediction time.
  std::vector<std::size_t> required_attributes;
  // Rows the model is trained on; all-unreported means everyone.
  ReportingGroup training_scope;
  Encoding encoding = Encoding::kNone;
  ModelClass model_class = ModelClass::kLogistic;
  Hyperparameters hyperparameters;

  void validate(const GroupSchema& schema) const;
};

struct LogisticParameters {
  std::vector<double> coefficients;
  double intercept = 0.0;
  int iterations = 0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // positive fraction at a leaf
};

struct DecisionTree {
  std::vector<TreeNode> nodes;
};

struct ForestParameters {
  std::vector<DecisionTree> trees;
};

// Score lookup keyed on the levels of the required attributes (in order).
struct FixedRuleParameters {
  std::map<std::vector<int>, double> scores;
  double default_score = 0.0;
};

using ModelParameters = std::variant<LogisticParameters, ForestParameters, FixedRuleParameters>;

struct TrainedModel {
  ModelSpec spec;
  std::size_t feature_width = 0;  // raw feature count d
  ModelParameters parameters;
  std::uint64_t data_fingerprint = 0;
  std::uint64_t seed = 0;
  bool converged = true;
};

// Thrown with Errc::kInsufficientData when the scope lacks a class or rows.
TrainedModel train_model(const ModelSpec& spec, const Dataset& d, std::uint64_t seed);

// Wraps an externally specified classifier (e.g. a published rule) so it can
// join a pool.
TrainedModel make_fixed_model(ModelSpec spec, std::size_t feature_width, FixedRuleParameters rule);

// Whether train_model's preconditions hold for `spec` on `d`.
bool can_train(const ModelSpec& spec, const Dataset& d);

double predict_one(const TrainedModel& m, const GroupSchema& schema, std::span<const double> features,
                   const ReportingGroup& report);
std::vector<double> predict_scores(const TrainedModel& m, const GroupSchema& schema, const FeatureMatrix& features,
                                   std::span<const ReportingGroup> reports);
// Uses each row's own membership as its report.
std::vector<double> predict_scores(const TrainedModel& m, const Dataset& d);

inline int label_from_score(double score) { return score >= 0.5 ? 1 : 0; }

// Mann-Whitney estimate with ties counted one half.
double auc(std::span<const double> scores, std::span<const int> labels);
bool metric_defined(Metric metric, std::span<const int> labels);
double risk_from_scores(std::span<const double> scores, std::span<const int> labels, Metric metric);
double empirical_risk(const TrainedModel& m, const Dataset& d, Metric metric);

// Regularized mean log-likelihood objective and its gradient, exposed for
// optimality checks.
double logistic_objective(const FeatureMatrix& x, std::span<const int> y, std::span<const double> coefficients,
                          double intercept, double l2);
std::vector<double> logistic_gradient(const FeatureMatrix& x, std::span<const int> y,
                                      std::span<const double> coefficients, double intercept, double l2);

}  // namespace psys
