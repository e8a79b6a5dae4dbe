#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "psys/interface.hpp"
#include "psys/models.hpp"
#include "psys/pool.hpp"

namespace psys {

inline constexpr std::string_view kToolkitVersion = "0.3.0";

enum class SystemKind { kMinimal, kFlat, kSequential, kGreedy };

std::string_view system_kind_name(SystemKind kind);
SystemKind parse_system_kind(std::string_view name);

// kAuto picks McNemar for error and DeLong for AUC.
enum class TestKind { kAuto, kMcNemar, kDelong, kBootstrap };

std::string_view test_kind_name(TestKind kind);
TestKind parse_test_kind(std::string_view name);

struct TestConfig {
  TestKind kind = TestKind::kAuto;
  std::size_t resamples = 100;
  std::uint64_t seed = 0;
};

struct Provenance {
  std::uint64_t data_fingerprint = 0;
  std::uint64_t schema_fingerprint = 0;
  std::uint64_t seed = 0;
  std::string toolkit_version{kToolkitVersion};
  bool shared_assign_prune = false;

  bool operator==(const Provenance&) const = default;
};

class ParticipatorySystem {
 public:
  std::string name;
  SystemKind kind = SystemKind::kMinimal;
  GroupSchema schema;
  ReportingTree tree;
  // Every model referenced by a node, sorted by id.
  std::vector<TrainedModel> models;
  Metric metric = Metric::kError;
  double alpha = 0.10;
  Provenance provenance;
  // Best of its kind by prune-split risk (sequential candidates).
  bool selected = false;
  // Prune-split risk of the root model per full group (schema order); NaN
  // where the group has no measurable sample. Used for displayed risks.
  std::vector<double> group_baseline;
  double root_prune_risk = 0.0;

  const TrainedModel& model(std::string_view id) const;
  const TrainedModel& node_model(int node) const;
  const TrainedModel& root_model() const { return node_model(ReportingTree::kRoot); }

  // Serving node for a report: the node itself if it survives, otherwise the
  // surviving node reached from the root by following refinements of `r`
  // (largest certified gain first). Never fails; the root always serves.
  int dispatch(const ReportingGroup& r) const;
  // Node a truthful member of full group g reaches when reporting only while
  // the displayed gain is positive.
  int policy_node(const ReportingGroup& g) const;

  double predict(std::span<const double> features, const ReportingGroup& r) const;
  double predict_at(int node, std::span<const double> features) const;

  // Surviving non-root nodes a member of g could truthfully reach, root first.
  std::vector<int> available_nodes(const ReportingGroup& g) const;

  // Certified gains summed along the path to `node`.
  double certified_gain(int node) const;
};

// Breadth-first argmin of assign-split risk over viable models. Nodes whose
// restricted data is empty or has an undefined metric inherit their parent's
// model.
void assign_models(ReportingTree& t, const ModelPool& pool, const Dataset& assign_data, Metric metric);

// Tests H0: leaf risk >= parent risk on paired scores.
GainCertificate certify_gain(std::span<const double> leaf_scores, std::span<const double> parent_scores,
                             std::span<const int> labels, Metric metric, double alpha, const TestConfig& config,
                             std::uint64_t seed);

GainCertificate test_gain(const ReportingGroup& r, const TrainedModel& leaf, const TrainedModel& parent,
                          const Dataset& prune_data, Metric metric, double alpha, const TestConfig& config);

// Bottom-up pruning. A node is kept only when the predictions of its
// surviving subtree beat its parent's model on the node's prune sample; for a
// leaf this is the leaf model itself. Failing nodes go with their subtree.
void prune_leaves(ReportingTree& t, const ModelPool& pool, const Dataset& prune_data, Metric metric, double alpha,
                  const TestConfig& config);

struct LearnOptions {
  std::vector<SystemKind> kinds{SystemKind::kMinimal, SystemKind::kFlat, SystemKind::kSequential};
  Metric metric = Metric::kError;
  // Defaults to `metric`.
  std::optional<Metric> assign_metric;
  double alpha = 0.10;
  TreeConstraints constraints;
  TestConfig test;
  std::uint64_t seed = 0;
};

std::vector<ParticipatorySystem> learn_systems(const SplitBundle& bundle, const ModelPool& pool,
                                               const LearnOptions& options);

// Packages an assigned and pruned tree.
ParticipatorySystem package_system(std::string name, SystemKind kind, ReportingTree tree, const ModelPool& pool,
                                   const SplitBundle& bundle, const LearnOptions& options);

// Scores on `d` when every row is served at the node given by `node_of_row`.
std::vector<double> system_scores(const ParticipatorySystem& s, const Dataset& d, std::span<const int> node_of_row);

}  // namespace psys
