#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "psys/assembly.hpp"
#include "psys/artifact.hpp"

namespace psys {

// Predictions handed to one full group.
struct Serving {
  std::vector<double> scores;   // personalized
  std::vector<double> generic;  // the generic counterpart
  std::size_t requested = 0;    // attributes solicited from the group
  int node = -1;                // serving node, for systems
};

// Anything the evaluation suite can score group by group.
class Evaluable {
 public:
  virtual ~Evaluable() = default;
  virtual std::string name() const = 0;
  // `rows` holds the group's test rows; `row_ids` their positions in the full
  // test split.
  virtual Serving serve(const Dataset& rows, const ReportingGroup& g, std::span<const std::size_t> row_ids) const = 0;
  // Static models expose themselves for the imputation-risk metric.
  virtual const TrainedModel* static_model() const { return nullptr; }
  virtual const ParticipatorySystem* system() const { return nullptr; }
};

// A model that always receives the full membership (or an imputed one).
class StaticModelEvaluable : public Evaluable {
 public:
  StaticModelEvaluable(const TrainedModel& model, const TrainedModel& generic, std::string name = {});
  // Predicts with these memberships (one per test row) instead of the truth.
  StaticModelEvaluable with_imputed(std::vector<ReportingGroup> memberships, std::string name) const;

  std::string name() const override { return name_; }
  Serving serve(const Dataset& rows, const ReportingGroup& g, std::span<const std::size_t> row_ids) const override;
  const TrainedModel* static_model() const override { return imputed_ ? nullptr : model_; }

 private:
  const TrainedModel* model_;
  const TrainedModel* generic_;
  std::string name_;
  std::shared_ptr<const std::vector<ReportingGroup>> imputed_;
};

enum class ReportingPolicy {
  kPositiveGain,  // report while the displayed gain is positive
  kFullReport,    // report every attribute; served by dispatch
};

class SystemEvaluable : public Evaluable {
 public:
  explicit SystemEvaluable(const ParticipatorySystem& system, ReportingPolicy policy = ReportingPolicy::kPositiveGain);
  // Serving node chosen per full group by the caller.
  SystemEvaluable(const ParticipatorySystem& system, std::function<int(const ReportingGroup&)> choose);

  std::string name() const override { return system_->name; }
  Serving serve(const Dataset& rows, const ReportingGroup& g, std::span<const std::size_t> row_ids) const override;
  const ParticipatorySystem* system() const override { return system_; }

 private:
  const ParticipatorySystem* system_;
  std::function<int(const ReportingGroup&)> choose_;
};

struct GroupEvaluation {
  ReportingGroup group;
  std::string label;
  std::size_t n = 0;
  std::size_t positives = 0;
  bool defined = false;  // metric measurable on this group
  double risk = 0.0;
  double generic_risk = 0.0;
  double gain = 0.0;  // generic_risk - risk
  std::size_t requested = 0;
  int node = -1;
  bool violation = false;
  double violation_p = 1.0;
};

struct EvaluationReport {
  std::string name;
  Metric metric = Metric::kError;
  double overall_performance = 0.0;
  double generic_performance = 0.0;
  double overall_gain = 0.0;
  double group_gain_min = 0.0;
  double group_gain_max = 0.0;
  std::size_t rationality_violations = 0;
  std::optional<double> imputation_risk;
  std::optional<double> options_pruned;
  double data_use = 0.0;
  std::size_t n = 0;
  std::size_t excluded_groups = 0;
  std::vector<GroupEvaluation> groups;
};

struct EvaluationConfig {
  Metric metric = Metric::kError;
  double alpha = 0.10;
  std::size_t resamples = 100;
  std::uint64_t seed = 0;
};

EvaluationReport evaluate(const Evaluable& e, const Dataset& test, const EvaluationConfig& config);
EvaluationReport evaluate_system(const ParticipatorySystem& s, const SplitBundle& bundle,
                                 const EvaluationConfig& config);

// Individual metrics, each computed on `test`.
double overall_performance(const Evaluable& e, const Dataset& test, Metric metric);
double overall_gain(const Evaluable& e, const Dataset& test, Metric metric);
std::pair<double, double> group_gain_range(const Evaluable& e, const Dataset& test, Metric metric);
std::size_t rationality_violations(const Evaluable& e, const Dataset& test, const EvaluationConfig& config);
double imputation_risk(const TrainedModel& model, const Dataset& test, Metric metric);
double options_pruned(const ParticipatorySystem& s);
double data_use(const Evaluable& e, const Dataset& test);

enum class ImputeMethod { kMode, kKnn };

ImputeMethod parse_impute_method(std::string_view name);

// Full memberships for the rows of `d` inferred from `reference`; the true
// memberships of `d` are ignored.
std::vector<ReportingGroup> impute_groups(const Dataset& d, const Dataset& reference, ImputeMethod method,
                                          std::size_t k_neighbors = 5);

Json evaluation_to_json(const EvaluationReport& r);
// Header plus one row per report.
void write_summary_csv(std::ostream& out, std::span<const EvaluationReport> reports);
void write_groups_csv(std::ostream& out, std::span<const EvaluationReport> reports);

}  // namespace psys
