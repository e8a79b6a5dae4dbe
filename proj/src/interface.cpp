#include "psys/interface.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <map>
#include <memory>
#include <set>

#include "psys/error.hpp"
#include "psys/pool.hpp"

namespace psys {

std::string_view decision_name(CertificateDecision d) {
  switch (d) {
    case CertificateDecision::kKept: return "kept";
    case CertificateDecision::kPruned: return "pruned";
    case CertificateDecision::kAutoPrunedNoData: return "auto_pruned_no_data";
  }
  return "pruned";
}

CertificateDecision parse_decision(std::string_view name) {
  if (name == "kept") return CertificateDecision::kKept;
  if (name == "pruned") return CertificateDecision::kPruned;
  if (name == "auto_pruned_no_data") return CertificateDecision::kAutoPrunedNoData;
  throw Error(Errc::kInvalidArgument, "unknown certificate decision '" + std::string(name) + "'");
}

std::string_view tree_kind_name(TreeKind kind) {
  switch (kind) {
    case TreeKind::kMinimal: return "minimal";
    case TreeKind::kFlat: return "flat";
    case TreeKind::kSequential: return "sequential";
  }
  return "sequential";
}

TreeKind parse_tree_kind(std::string_view name) {
  if (name == "minimal") return TreeKind::kMinimal;
  if (name == "flat") return TreeKind::kFlat;
  if (name == "sequential") return TreeKind::kSequential;
  throw Error(Errc::kInvalidArgument, "unknown tree kind '" + std::string(name) + "'");
}

ReportingTree::ReportingTree(TreeKind kind, std::size_t k) : kind_(kind) {
  ReportingNode root;
  root.report = ReportingGroup::none(k);
  nodes_.push_back(std::move(root));
}

int ReportingTree::add_child(int parent, ReportingGroup report) {
  if (parent < 0 || static_cast<std::size_t>(parent) >= nodes_.size())
    throw Error(Errc::kInvalidArgument, "parent index out of range");
  ReportingNode n;
  n.report = std::move(report);
  n.parent = parent;
  nodes_.push_back(std::move(n));
  const int idx = static_cast<int>(nodes_.size() - 1);
  nodes_[static_cast<std::size_t>(parent)].children.push_back(idx);
  return idx;
}

int ReportingTree::find(const ReportingGroup& r) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].report == r) return static_cast<int>(i);
  return -1;
}

std::vector<int> ReportingTree::surviving_children(int i) const {
  std::vector<int> out;
  for (int c : node(i).children)
    if (!node(c).pruned) out.push_back(c);
  return out;
}

std::size_t ReportingTree::num_surviving() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const auto& n) { return !n.pruned; }));
}

std::vector<int> ReportingTree::path_to(int i) const {
  std::vector<int> path;
  for (int cur = i; cur >= 0; cur = node(cur).parent) path.push_back(cur);
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<int> ReportingTree::breadth_first() const {
  std::vector<int> order;
  if (nodes_.empty()) return order;
  std::deque<int> queue{kRoot};
  while (!queue.empty()) {
    int i = queue.front();
    queue.pop_front();
    order.push_back(i);
    for (int c : node(i).children) queue.push_back(c);
  }
  return order;
}

int ReportingTree::depth(int i) const { return static_cast<int>(path_to(i).size()) - 1; }

bool ReportingTree::operator==(const ReportingTree& o) const {
  if (kind_ != o.kind_ || nodes_.size() != o.nodes_.size()) return false;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& a = nodes_[i];
    const auto& b = o.nodes_[i];
    if (a.report != b.report || a.parent != b.parent || a.children != b.children || a.model_id != b.model_id ||
        a.certificate != b.certificate || a.pruned != b.pruned)
      return false;
  }
  return true;
}

ReportingTree ReportingTree::from_nodes(TreeKind kind, std::vector<ReportingNode> nodes) {
  ReportingTree t;
  t.kind_ = kind;
  t.nodes_ = std::move(nodes);
  return t;
}

std::vector<OrderingConstraint> resolve_ordering(const GroupSchema& schema, const std::vector<OrderingRule>& rules) {
  std::vector<OrderingConstraint> out;
  auto attr = [&](const std::string& name) {
    auto a = schema.find_attribute(name);
    if (!a) throw Error(Errc::kInvalidConfig, "ordering rule names unknown attribute '" + name + "'");
    return *a;
  };
  for (const auto& rule : rules) {
    OrderingConstraint c;
    c.before = attr(rule.before);
    c.after = attr(rule.after);
    if (c.before == c.after) throw Error(Errc::kInvalidConfig, "ordering rule relates '" + rule.before + "' to itself");
    if (rule.when_attribute.has_value() != rule.when_level.has_value())
      throw Error(Errc::kInvalidConfig, "ordering guard needs both attribute and level");
    if (rule.when_attribute) {
      c.when_attribute = attr(*rule.when_attribute);
      auto level = schema.find_level(*c.when_attribute, *rule.when_level);
      if (!level) throw Error(Errc::kInvalidConfig, "ordering guard names unknown level '" + *rule.when_level + "'");
      c.when_level = *level;
    }
    out.push_back(c);
  }
  return out;
}

std::vector<ReportingGroup> truthful_options(const ReportingGroup& g) {
  if (!g.is_full()) throw Error(Errc::kPartialInput, "truthful options need a fully specified group");
  const std::size_t k = g.size();
  std::vector<ReportingGroup> out;
  out.reserve(std::size_t{1} << k);
  for (std::size_t mask = 0; mask < (std::size_t{1} << k); ++mask) {
    std::vector<int> e(k, kNotReported);
    for (std::size_t i = 0; i < k; ++i)
      if (mask & (std::size_t{1} << i)) e[i] = g[i];
    out.emplace_back(std::move(e));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.num_reported() < b.num_reported(); });
  return out;
}

ReportingTree build_minimal(const GroupSchema& schema) {
  ReportingTree t(TreeKind::kMinimal, schema.k());
  for (auto& g : schema.full_groups()) t.add_child(ReportingTree::kRoot, std::move(g));
  return t;
}

ReportingTree build_flat(const GroupSchema& schema) {
  ReportingTree t(TreeKind::kFlat, schema.k());
  for (auto& r : reported_groups(schema)) t.add_child(ReportingTree::kRoot, std::move(r));
  return t;
}

namespace {

constexpr std::size_t kSaturated = std::numeric_limits<std::size_t>::max();

std::size_t sat_mul(std::size_t a, std::size_t b) {
  if (a == 0 || b == 0) return 0;
  if (a > kSaturated / b) return kSaturated;
  return a * b;
}

std::size_t sat_add(std::size_t a, std::size_t b) { return a > kSaturated - b ? kSaturated : a + b; }

// Shape of a subtree: the attribute branched on and one child shape per level.
struct Shape {
  int attribute = -1;
  std::vector<std::shared_ptr<const Shape>> children;
};
using ShapePtr = std::shared_ptr<const Shape>;

class Enumerator {
 public:
  Enumerator(const GroupSchema& schema, const Dataset* data, const TreeConstraints& c)
      : schema_(schema), data_(data), c_(c) {
    if (data_) min_samples_ = c.min_samples.value_or(data_->d() + 1);
  }

  bool allowed_branch(const ReportingGroup& r, std::size_t a) const {
    for (const auto& o : c_.ordering) {
      if (o.after != a || r.reported(o.before)) continue;
      if (o.when_attribute && r.reported(*o.when_attribute) && r[*o.when_attribute] != o.when_level) continue;
      return false;
    }
    return true;
  }

  bool plausible(const ReportingGroup& r) {
    if (!data_) return true;
    auto it = plausible_.find(r);
    if (it != plausible_.end()) return it->second;
    std::size_t n = 0;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < data_->n(); ++i) {
      if (!r.covers(data_->groups()[i])) continue;
      ++n;
      pos += static_cast<std::size_t>(data_->labels()[i]);
    }
    bool ok = n >= min_samples_;
    if (c_.require_both_classes) ok = ok && pos >= 1 && pos < n;
    plausible_.emplace(r, ok);
    return ok;
  }

  // Children of r along attribute a, or empty when one of them is implausible.
  std::vector<ReportingGroup> branch(const ReportingGroup& r, std::size_t a) {
    std::vector<ReportingGroup> out;
    for (std::size_t l = 0; l < schema_.num_levels(a); ++l) {
      auto child = r.with(a, static_cast<int>(l));
      if (!plausible(child)) return {};
      out.push_back(std::move(child));
    }
    return out;
  }

  std::size_t count(const ReportingGroup& r) {
    if (r.is_full()) return 1;
    if (auto it = counts_.find(r); it != counts_.end()) return it->second;
    std::size_t total = 0;
    for (std::size_t a = 0; a < schema_.k(); ++a) {
      if (r.reported(a) || !allowed_branch(r, a)) continue;
      auto kids = branch(r, a);
      if (kids.empty()) continue;
      std::size_t prod = 1;
      for (const auto& kid : kids) prod = sat_mul(prod, count(kid));
      total = sat_add(total, prod);
    }
    counts_.emplace(r, total);
    return total;
  }

  const std::vector<ShapePtr>& shapes(const ReportingGroup& r) {
    if (auto it = shapes_.find(r); it != shapes_.end()) return it->second;
    std::vector<ShapePtr> out;
    const std::size_t cap = c_.max_trees.value_or(kSaturated);
    if (r.is_full()) {
      out.push_back(std::make_shared<Shape>());
    } else {
      for (std::size_t a = 0; a < schema_.k() && out.size() < cap; ++a) {
        if (r.reported(a) || !allowed_branch(r, a)) continue;
        auto kids = branch(r, a);
        if (kids.empty()) continue;
        std::vector<const std::vector<ShapePtr>*> lists;
        bool any_empty = false;
        for (const auto& kid : kids) {
          lists.push_back(&shapes(kid));
          any_empty = any_empty || lists.back()->empty();
        }
        if (any_empty) continue;
        // Odometer over the child lists; the first child is most significant.
        std::vector<std::size_t> idx(lists.size(), 0);
        while (out.size() < cap) {
          auto s = std::make_shared<Shape>();
          s->attribute = static_cast<int>(a);
          for (std::size_t j = 0; j < lists.size(); ++j) s->children.push_back((*lists[j])[idx[j]]);
          out.push_back(std::move(s));
          std::size_t j = lists.size();
          while (j-- > 0) {
            if (++idx[j] < lists[j]->size()) break;
            idx[j] = 0;
          }
          if (j == static_cast<std::size_t>(-1)) break;
        }
      }
    }
    return shapes_.emplace(r, std::move(out)).first->second;
  }

  void materialize(ReportingTree& t, int at, const ReportingGroup& r, const Shape& s) const {
    if (s.attribute < 0) return;
    const auto a = static_cast<std::size_t>(s.attribute);
    for (std::size_t l = 0; l < s.children.size(); ++l) {
      auto child = r.with(a, static_cast<int>(l));
      int idx = t.add_child(at, child);
      materialize(t, idx, child, *s.children[l]);
    }
  }

 private:
  const GroupSchema& schema_;
  const Dataset* data_;
  const TreeConstraints& c_;
  std::size_t min_samples_ = 0;
  std::map<ReportingGroup, bool> plausible_;
  std::map<ReportingGroup, std::size_t> counts_;
  std::map<ReportingGroup, std::vector<ShapePtr>> shapes_;
};

void check_enumerable(const GroupSchema& schema, const TreeConstraints& c) {
  if (schema.k() > 8 && c.ordering.empty() && !c.max_trees)
    throw Error(Errc::kTooManyAttributes,
                std::to_string(schema.k()) + " attributes need ordering constraints or a tree cap to enumerate");
  if (c.min_samples && *c.min_samples < 1) throw Error(Errc::kInvalidConfig, "min_samples must be at least 1");
}

std::vector<ReportingTree> enumerate_impl(const GroupSchema& schema, const Dataset* d, const TreeConstraints& c) {
  check_enumerable(schema, c);
  Enumerator e(schema, d, c);
  const auto root = ReportingGroup::none(schema.k());
  std::vector<ReportingTree> out;
  for (const auto& s : e.shapes(root)) {
    ReportingTree t(TreeKind::kSequential, schema.k());
    e.materialize(t, ReportingTree::kRoot, root, *s);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

std::vector<ReportingTree> enumerate_sequential(const GroupSchema& schema, const Dataset& d, const TreeConstraints& c) {
  if (!(d.schema() == schema)) throw Error(Errc::kInvalidArgument, "dataset schema differs from enumeration schema");
  return enumerate_impl(schema, &d, c);
}

std::vector<ReportingTree> enumerate_sequential(const GroupSchema& schema, const TreeConstraints& c) {
  return enumerate_impl(schema, nullptr, c);
}

std::size_t count_sequential(const GroupSchema& schema, const Dataset& d, const TreeConstraints& c) {
  if (c.min_samples && *c.min_samples < 1) throw Error(Errc::kInvalidConfig, "min_samples must be at least 1");
  Enumerator e(schema, &d, c);
  return e.count(ReportingGroup::none(schema.k()));
}

std::size_t count_sequential(const GroupSchema& schema, const TreeConstraints& c) {
  Enumerator e(schema, nullptr, c);
  return e.count(ReportingGroup::none(schema.k()));
}

namespace {

// Risk of `m` on `data`, or nullopt when it cannot be measured.
std::optional<double> measured_risk(const TrainedModel& m, const Dataset& data, Metric metric) {
  if (data.empty() || !metric_defined(metric, data.labels())) return std::nullopt;
  return empirical_risk(m, data, metric);
}

}  // namespace

ReportingTree greedy_tree(const GroupSchema& schema, const SplitBundle& bundle, const ModelPool& pool, Metric metric) {
  const Dataset& assign = bundle.assign;
  ReportingTree t(TreeKind::kSequential, schema.k());
  const auto root_choice = best_viable_model(pool, t.node(ReportingTree::kRoot).report, assign, metric);
  std::vector<const TrainedModel*> current{root_choice.model ? root_choice.model : &pool.models().front()};
  if (!root_choice.model) {
    for (const auto& m : pool.models())
      if (m.spec.required_attributes.empty() && m.spec.training_scope.is_none()) {
        current[0] = &m;
        break;
      }
  }

  std::deque<int> frontier{ReportingTree::kRoot};
  while (!frontier.empty()) {
    const int leaf = frontier.front();
    frontier.pop_front();
    const ReportingGroup r = t.node(leaf).report;
    const TrainedModel* leaf_model = current[static_cast<std::size_t>(leaf)];

    double best_gain = 0.0;
    std::optional<std::size_t> best_attr;
    std::vector<const TrainedModel*> best_models;
    for (std::size_t a = 0; a < schema.k(); ++a) {
      if (r.reported(a)) continue;
      double worst = std::numeric_limits<double>::infinity();
      std::vector<const TrainedModel*> models;
      for (std::size_t l = 0; l < schema.num_levels(a); ++l) {
        const auto child = r.with(a, static_cast<int>(l));
        const Dataset sub = restrict_to(assign, child);
        const auto choice = best_viable_model(pool, child, sub, metric);
        const auto base = measured_risk(*leaf_model, sub, metric);
        double gain = 0.0;
        if (choice.model && base) gain = *base - choice.risk;
        models.push_back(choice.model ? choice.model : leaf_model);
        worst = std::min(worst, gain);
      }
      if (worst > best_gain) {
        best_gain = worst;
        best_attr = a;
        best_models = std::move(models);
      }
    }
    if (!best_attr) continue;
    for (std::size_t l = 0; l < schema.num_levels(*best_attr); ++l) {
      const int idx = t.add_child(leaf, r.with(*best_attr, static_cast<int>(l)));
      current.push_back(best_models[l]);
      frontier.push_back(idx);
    }
  }
  for (std::size_t i = 0; i < t.size(); ++i) t.node(static_cast<int>(i)).model_id = current[i]->spec.id;
  return t;
}

std::string validate_tree(const ReportingTree& t, const GroupSchema& schema) {
  if (t.size() == 0) return "tree has no nodes";
  const auto& root = t.node(ReportingTree::kRoot);
  if (root.parent != -1) return "root has a parent";
  if (root.report != ReportingGroup::none(schema.k())) return "root is not the opt-out report";
  std::set<ReportingGroup> seen;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto& n = t.node(static_cast<int>(i));
    if (!schema.is_valid(n.report)) return "node " + std::to_string(i) + " has an invalid report";
    if (!seen.insert(n.report).second) return "report " + schema.describe(n.report) + " appears twice";
    for (int c : n.children) {
      if (c <= 0 || static_cast<std::size_t>(c) >= t.size() || t.node(c).parent != static_cast<int>(i))
        return "node " + std::to_string(i) + " has a broken child link";
    }
    if (i == 0) continue;
    if (n.parent < 0 || static_cast<std::size_t>(n.parent) >= t.size()) return "node " + std::to_string(i) + " is detached";
    const auto& p = t.node(n.parent);
    if (std::find(p.children.begin(), p.children.end(), static_cast<int>(i)) == p.children.end())
      return "node " + std::to_string(i) + " is missing from its parent's children";
    if (!p.report.covers(n.report) || p.report == n.report)
      return "node " + schema.describe(n.report) + " does not refine its parent";
    switch (t.kind()) {
      case TreeKind::kSequential:
        if (n.report.num_reported() != p.report.num_reported() + 1)
          return "edge into " + schema.describe(n.report) + " adds more than one attribute";
        break;
      case TreeKind::kMinimal:
        if (n.parent != ReportingTree::kRoot || !n.report.is_full())
          return "minimal node " + schema.describe(n.report) + " is not a full group under the root";
        break;
      case TreeKind::kFlat:
        if (n.parent != ReportingTree::kRoot) return "flat node " + schema.describe(n.report) + " is not under the root";
        break;
    }
  }
  // Reachability: every node appears in the breadth-first walk.
  if (t.breadth_first().size() != t.size()) return "some nodes are unreachable from the root";
  return {};
}

}  // namespace psys
