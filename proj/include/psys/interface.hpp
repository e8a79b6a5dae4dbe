#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "psys/dataset.hpp"
#include "psys/models.hpp"

namespace psys {

enum class CertificateDecision { kKept, kPruned, kAutoPrunedNoData };

std::string_view decision_name(CertificateDecision d);
CertificateDecision parse_decision(std::string_view name);

// Outcome of testing one reporting option against its parent's model.
struct GainCertificate {
  Metric metric = Metric::kError;
  double leaf_risk = 0.0;
  double parent_risk = 0.0;
  double gain = 0.0;  // parent_risk - leaf_risk
  std::string test;
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n_validation = 0;
  CertificateDecision decision = CertificateDecision::kPruned;

  bool operator==(const GainCertificate&) const = default;
};

enum class TreeKind { kMinimal, kFlat, kSequential };

std::string_view tree_kind_name(TreeKind kind);
TreeKind parse_tree_kind(std::string_view name);

struct ReportingNode {
  ReportingGroup report;
  int parent = -1;
  std::vector<int> children;
  std::optional<std::string> model_id;
  std::optional<GainCertificate> certificate;
  bool pruned = false;
};

class ReportingTree {
 public:
  static constexpr int kRoot = 0;

  ReportingTree() = default;
  ReportingTree(TreeKind kind, std::size_t k);

  TreeKind kind() const { return kind_; }
  std::size_t k() const { return nodes_.empty() ? 0 : nodes_[kRoot].report.size(); }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<ReportingNode>& nodes() const { return nodes_; }
  const ReportingNode& node(int i) const { return nodes_.at(static_cast<std::size_t>(i)); }
  ReportingNode& node(int i) { return nodes_.at(static_cast<std::size_t>(i)); }

  int add_child(int parent, ReportingGroup report);
  // Index of the node carrying exactly `r`, or -1.
  int find(const ReportingGroup& r) const;

  std::vector<int> surviving_children(int i) const;
  std::size_t num_surviving() const;
  // Root first, ending at i.
  std::vector<int> path_to(int i) const;
  std::vector<int> breadth_first() const;
  int depth(int i) const;

  bool operator==(const ReportingTree&) const;

  // Used by deserialization; structure is validated by the caller.
  static ReportingTree from_nodes(TreeKind kind, std::vector<ReportingNode> nodes);

 private:
  TreeKind kind_ = TreeKind::kSequential;
  std::vector<ReportingNode> nodes_;
};

// "report `before` ahead of `after`", optionally only for people who reported
// `when_attribute` = `when_level`.
struct OrderingConstraint {
  std::size_t before = 0;
  std::size_t after = 0;
  std::optional<std::size_t> when_attribute;
  int when_level = kNotReported;
};

struct TreeConstraints {
  // Unset means d + 1.
  std::optional<std::size_t> min_samples;
  bool require_both_classes = true;
  std::vector<OrderingConstraint> ordering;
  std::optional<std::size_t> max_trees;
};

std::vector<OrderingConstraint> resolve_ordering(const GroupSchema& schema, const std::vector<OrderingRule>& rules);

// Every way of withholding a subset of g's attributes (2^k reports).
std::vector<ReportingGroup> truthful_options(const ReportingGroup& g);

ReportingTree build_minimal(const GroupSchema& schema);
ReportingTree build_flat(const GroupSchema& schema);

// Sequential trees branching on one new attribute per level until every
// attribute is reported, with each branch free to choose its own order.
// The data-free overload ignores sample constraints and only applies
// ordering and the cap.
std::vector<ReportingTree> enumerate_sequential(const GroupSchema& schema, const Dataset& d,
                                                const TreeConstraints& c);
std::vector<ReportingTree> enumerate_sequential(const GroupSchema& schema, const TreeConstraints& c);

// Number of trees enumerate_sequential would return without the cap.
std::size_t count_sequential(const GroupSchema& schema, const Dataset& d, const TreeConstraints& c);
std::size_t count_sequential(const GroupSchema& schema, const TreeConstraints& c);

class ModelPool;

ReportingTree greedy_tree(const GroupSchema& schema, const SplitBundle& bundle, const ModelPool& pool, Metric metric);

// Empty when the tree is well formed; otherwise a description of the first
// problem found.
std::string validate_tree(const ReportingTree& t, const GroupSchema& schema);

}  // namespace psys
