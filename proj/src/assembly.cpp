#include "psys/assembly.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <spdlog/spdlog.h>

#include "psys/error.hpp"
#include "psys/stats.hpp"

namespace psys {

std::string_view system_kind_name(SystemKind kind) {
  switch (kind) {
    case SystemKind::kMinimal: return "minimal";
    case SystemKind::kFlat: return "flat";
    case SystemKind::kSequential: return "sequential";
    case SystemKind::kGreedy: return "greedy";
  }
  return "minimal";
}

SystemKind parse_system_kind(std::string_view name) {
  if (name == "minimal") return SystemKind::kMinimal;
  if (name == "flat") return SystemKind::kFlat;
  if (name == "sequential") return SystemKind::kSequential;
  if (name == "greedy") return SystemKind::kGreedy;
  throw Error(Errc::kInvalidConfig, "unknown system kind '" + std::string(name) + "'");
}

std::string_view test_kind_name(TestKind kind) {
  switch (kind) {
    case TestKind::kAuto: return "auto";
    case TestKind::kMcNemar: return "mcnemar";
    case TestKind::kDelong: return "delong";
    case TestKind::kBootstrap: return "bootstrap";
  }
  return "auto";
}

TestKind parse_test_kind(std::string_view name) {
  if (name == "auto") return TestKind::kAuto;
  if (name == "mcnemar") return TestKind::kMcNemar;
  if (name == "delong") return TestKind::kDelong;
  if (name == "bootstrap") return TestKind::kBootstrap;
  throw Error(Errc::kInvalidConfig, "unknown test '" + std::string(name) + "'");
}

const TrainedModel& ParticipatorySystem::model(std::string_view id) const {
  auto it = std::lower_bound(models.begin(), models.end(), id,
                             [](const TrainedModel& m, std::string_view key) { return m.spec.id < key; });
  if (it == models.end() || it->spec.id != id)
    throw Error(Errc::kInvalidArtifact, "system references unknown model '" + std::string(id) + "'");
  return *it;
}

const TrainedModel& ParticipatorySystem::node_model(int node) const {
  const auto& n = tree.node(node);
  if (!n.model_id) throw Error(Errc::kInvalidArtifact, "node " + std::to_string(node) + " has no model");
  return model(*n.model_id);
}

namespace {

double node_gain(const ReportingTree& t, int i) {
  const auto& c = t.node(i).certificate;
  return c ? c->gain : 0.0;
}

// Among candidates, the one with the largest gain; ties go to fewer reported
// attributes, then lower index.
int best_by_gain(const ReportingTree& t, const std::vector<int>& candidates) {
  int best = -1;
  for (int c : candidates) {
    if (best < 0) {
      best = c;
      continue;
    }
    const double gc = node_gain(t, c);
    const double gb = node_gain(t, best);
    const auto rc = t.node(c).report.num_reported();
    const auto rb = t.node(best).report.num_reported();
    if (gc > gb || (gc == gb && (rc < rb || (rc == rb && c < best)))) best = c;
  }
  return best;
}

std::vector<int> covering_children(const ReportingTree& t, int i, const ReportingGroup& r) {
  std::vector<int> out;
  for (int c : t.surviving_children(i))
    if (t.node(c).report.covers(r)) out.push_back(c);
  return out;
}

}  // namespace

int ParticipatorySystem::dispatch(const ReportingGroup& r) const {
  schema.check(r);
  const int exact = tree.find(r);
  if (exact >= 0 && !tree.node(exact).pruned) {
    // A surviving node is reachable only if its whole path survives.
    bool alive = true;
    for (int p : tree.path_to(exact)) alive = alive && !tree.node(p).pruned;
    if (alive) return exact;
  }
  int cur = ReportingTree::kRoot;
  while (true) {
    auto kids = covering_children(tree, cur, r);
    if (kids.empty()) return cur;
    cur = best_by_gain(tree, kids);
  }
}

int ParticipatorySystem::policy_node(const ReportingGroup& g) const {
  schema.check(g);
  int cur = ReportingTree::kRoot;
  while (true) {
    auto kids = covering_children(tree, cur, g);
    std::erase_if(kids, [&](int c) { return !(node_gain(tree, c) > 0.0); });
    if (kids.empty()) return cur;
    cur = best_by_gain(tree, kids);
  }
}

double ParticipatorySystem::predict_at(int node, std::span<const double> features) const {
  return predict_one(node_model(node), schema, features, tree.node(node).report);
}

double ParticipatorySystem::predict(std::span<const double> features, const ReportingGroup& r) const {
  return predict_at(dispatch(r), features);
}

std::vector<int> ParticipatorySystem::available_nodes(const ReportingGroup& g) const {
  std::vector<int> out{ReportingTree::kRoot};
  for (int i : tree.breadth_first()) {
    if (i == ReportingTree::kRoot || tree.node(i).pruned) continue;
    if (!tree.node(i).report.covers(g)) continue;
    bool alive = true;
    for (int p : tree.path_to(i)) alive = alive && !tree.node(p).pruned;
    if (alive) out.push_back(i);
  }
  return out;
}

double ParticipatorySystem::certified_gain(int node) const {
  double total = 0.0;
  for (int p : tree.path_to(node))
    if (p != ReportingTree::kRoot) total += node_gain(tree, p);
  return total;
}

void assign_models(ReportingTree& t, const ModelPool& pool, const Dataset& assign_data, Metric metric) {
  const TrainedModel* generic = nullptr;
  for (const auto& m : pool.models()) {
    if (!is_viable(m, t.node(ReportingTree::kRoot).report)) continue;
    if (!generic || prefer_model(m, *generic)) generic = &m;
  }
  if (!generic) throw Error(Errc::kInvalidArgument, "pool has no model viable at the root");

  for (int i : t.breadth_first()) {
    auto& n = t.node(i);
    const Dataset sub = restrict_to(assign_data, n.report);
    const auto choice = best_viable_model(pool, n.report, sub, metric);
    if (choice.model) {
      n.model_id = choice.model->spec.id;
    } else if (n.parent >= 0) {
      n.model_id = t.node(n.parent).model_id;
    } else {
      n.model_id = generic->spec.id;
    }
  }
}

GainCertificate certify_gain(std::span<const double> leaf_scores, std::span<const double> parent_scores,
                             std::span<const int> labels, Metric metric, double alpha, const TestConfig& config,
                             std::uint64_t seed) {
  if (leaf_scores.size() != labels.size() || parent_scores.size() != labels.size())
    throw Error(Errc::kShapeMismatch, "certificate inputs differ in length");
  GainCertificate cert;
  cert.metric = metric;
  cert.n_validation = labels.size();
  TestKind kind = config.kind;
  if (kind == TestKind::kAuto) kind = metric == Metric::kError ? TestKind::kMcNemar : TestKind::kDelong;
  if (kind == TestKind::kMcNemar && metric != Metric::kError)
    throw Error(Errc::kInvalidConfig, "McNemar applies to the error metric only");
  cert.test = std::string(test_kind_name(kind));
  if (labels.empty() || !metric_defined(metric, labels)) {
    cert.decision = CertificateDecision::kAutoPrunedNoData;
    return cert;
  }
  cert.leaf_risk = risk_from_scores(leaf_scores, labels, metric);
  cert.parent_risk = risk_from_scores(parent_scores, labels, metric);
  cert.gain = cert.parent_risk - cert.leaf_risk;

  TestResult result;
  switch (kind) {
    case TestKind::kMcNemar: {
      std::size_t b = 0;
      std::size_t c = 0;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool leaf_ok = label_from_score(leaf_scores[i]) == labels[i];
        const bool parent_ok = label_from_score(parent_scores[i]) == labels[i];
        b += static_cast<std::size_t>(leaf_ok && !parent_ok);
        c += static_cast<std::size_t>(parent_ok && !leaf_ok);
      }
      result = mcnemar_test(b, c);
      break;
    }
    case TestKind::kDelong:
      result = delong_test(leaf_scores, parent_scores, labels);
      break;
    case TestKind::kBootstrap:
    case TestKind::kAuto: {
      std::vector<double> ls;
      std::vector<double> ps;
      std::vector<int> ys;
      auto risk = [&](std::span<const std::size_t> rows, double& leaf, double& parent) {
        ls.clear();
        ps.clear();
        ys.clear();
        for (auto r : rows) {
          ls.push_back(leaf_scores[r]);
          ps.push_back(parent_scores[r]);
          ys.push_back(labels[r]);
        }
        if (!metric_defined(metric, ys)) return false;
        leaf = risk_from_scores(ls, ys, metric);
        parent = risk_from_scores(ps, ys, metric);
        return true;
      };
      result = bootstrap_test(labels.size(), risk, config.resamples, seed);
      break;
    }
  }
  cert.statistic = result.statistic;
  cert.p_value = result.p_value;
  cert.decision = cert.p_value < alpha && cert.gain > 0.0 ? CertificateDecision::kKept : CertificateDecision::kPruned;
  return cert;
}

namespace {

std::uint64_t report_seed(std::uint64_t base, const ReportingGroup& r) {
  std::uint64_t h = base;
  for (int e : r.entries()) h = hash_combine(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(e)));
  return h;
}

std::vector<double> scores_with_report(const TrainedModel& m, const GroupSchema& schema, const Dataset& d,
                                       const ReportingGroup& r) {
  std::vector<ReportingGroup> reports(d.n(), r);
  return predict_scores(m, schema, d.features(), reports);
}

// Deepest surviving node below (or at) `top` consistent with full group g.
int subtree_dispatch(const ReportingTree& t, int top, const ReportingGroup& g) {
  int cur = top;
  while (true) {
    auto kids = covering_children(t, cur, g);
    if (kids.empty()) return cur;
    cur = best_by_gain(t, kids);
  }
}

void prune_subtree(ReportingTree& t, int i) {
  t.node(i).pruned = true;
  for (int c : t.node(i).children) prune_subtree(t, c);
}

}  // namespace

GainCertificate test_gain(const ReportingGroup& r, const TrainedModel& leaf, const TrainedModel& parent,
                          const Dataset& prune_data, Metric metric, double alpha, const TestConfig& config) {
  const Dataset sub = restrict_to(prune_data, r);
  const auto& schema = prune_data.schema();
  const auto ls = scores_with_report(leaf, schema, sub, r);
  const auto ps = scores_with_report(parent, schema, sub, r);
  return certify_gain(ls, ps, sub.labels(), metric, alpha, config, report_seed(config.seed, r));
}

void prune_leaves(ReportingTree& t, const ModelPool& pool, const Dataset& prune_data, Metric metric, double alpha,
                  const TestConfig& config) {
  const auto& schema = prune_data.schema();
  auto order = t.breadth_first();
  // Deepest first; a node is visited after all of its descendants.
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return t.depth(a) > t.depth(b); });
  for (int i : order) {
    if (i == ReportingTree::kRoot || t.node(i).pruned) continue;
    auto& n = t.node(i);
    const auto& parent_model = pool.get(*t.node(n.parent).model_id);
    const Dataset sub = restrict_to(prune_data, n.report);

    std::vector<double> leaf_scores(sub.n());
    for (std::size_t row = 0; row < sub.n(); ++row) {
      const int serving = subtree_dispatch(t, i, sub.groups()[row]);
      const auto& node = t.node(serving);
      leaf_scores[row] = predict_one(pool.get(*node.model_id), schema, sub.features().row(row), node.report);
    }
    const auto parent_scores = scores_with_report(parent_model, schema, sub, n.report);
    n.certificate = certify_gain(leaf_scores, parent_scores, sub.labels(), metric, alpha, config,
                                 report_seed(config.seed, n.report));
    if (n.certificate->decision != CertificateDecision::kKept) {
      spdlog::debug("pruning {} ({}, p={:.4g})", schema.describe(n.report), decision_name(n.certificate->decision),
                    n.certificate->p_value);
      prune_subtree(t, i);
    }
  }
}

std::vector<double> system_scores(const ParticipatorySystem& s, const Dataset& d, std::span<const int> node_of_row) {
  if (node_of_row.size() != d.n()) throw Error(Errc::kShapeMismatch, "one serving node per row is required");
  std::vector<double> out(d.n());
  for (std::size_t i = 0; i < d.n(); ++i) out[i] = s.predict_at(node_of_row[i], d.features().row(i));
  return out;
}

ParticipatorySystem package_system(std::string name, SystemKind kind, ReportingTree tree, const ModelPool& pool,
                                   const SplitBundle& bundle, const LearnOptions& options) {
  ParticipatorySystem s;
  s.name = std::move(name);
  s.kind = kind;
  s.schema = pool.schema();
  s.metric = options.metric;
  s.alpha = options.alpha;
  std::set<std::string> ids;
  for (const auto& n : tree.nodes())
    if (n.model_id) ids.insert(*n.model_id);
  for (const auto& id : ids) s.models.push_back(pool.get(id));
  s.tree = std::move(tree);

  std::uint64_t h = bundle.assign.fingerprint();
  h = hash_combine(h, bundle.prune.fingerprint());
  h = hash_combine(h, bundle.test.fingerprint());
  s.provenance.data_fingerprint = h;
  s.provenance.schema_fingerprint = s.schema.fingerprint();
  s.provenance.seed = options.seed;
  s.provenance.shared_assign_prune = bundle.shared_assign_prune;

  const auto& root = s.root_model();
  const Dataset& prune = bundle.prune;
  s.root_prune_risk = metric_defined(s.metric, prune.labels()) ? empirical_risk(root, prune, s.metric)
                                                                : std::numeric_limits<double>::quiet_NaN();
  for (const auto& g : s.schema.full_groups()) {
    const Dataset sub = restrict_to(prune, g);
    s.group_baseline.push_back(metric_defined(s.metric, sub.labels()) ? empirical_risk(root, sub, s.metric)
                                                                      : std::numeric_limits<double>::quiet_NaN());
  }
  return s;
}

namespace {

// Group-size-weighted prune risk under full truthful reports.
double selection_risk(const ParticipatorySystem& s, const Dataset& prune) {
  double total = 0.0;
  double weight = 0.0;
  for (const auto& g : s.schema.full_groups()) {
    const Dataset sub = restrict_to(prune, g);
    if (!metric_defined(s.metric, sub.labels())) continue;
    const int node = s.dispatch(g);
    std::vector<int> nodes(sub.n(), node);
    const auto scores = system_scores(s, sub, nodes);
    total += static_cast<double>(sub.n()) * risk_from_scores(scores, sub.labels(), s.metric);
    weight += static_cast<double>(sub.n());
  }
  return weight > 0.0 ? total / weight : std::numeric_limits<double>::infinity();
}

}  // namespace

std::vector<ParticipatorySystem> learn_systems(const SplitBundle& bundle, const ModelPool& pool,
                                               const LearnOptions& options) {
  if (!(bundle.assign.schema() == pool.schema())) throw Error(Errc::kInvalidArgument, "pool and data schemas differ");
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) throw Error(Errc::kInvalidConfig, "alpha must lie in (0, 1)");
  if (bundle.shared_assign_prune)
    spdlog::warn("assignment and pruning share one sample; gain estimates are optimistic");
  const GroupSchema& schema = pool.schema();
  const Metric assign_metric = options.assign_metric.value_or(options.metric);
  TestConfig test = options.test;
  test.seed = hash_combine(options.seed, options.test.seed);

  auto finish = [&](std::string name, SystemKind kind, ReportingTree t, bool reassign) {
    if (reassign) assign_models(t, pool, bundle.assign, assign_metric);
    prune_leaves(t, pool, bundle.prune, options.metric, options.alpha, test);
    return package_system(std::move(name), kind, std::move(t), pool, bundle, options);
  };

  std::vector<ParticipatorySystem> out;
  for (SystemKind kind : options.kinds) {
    switch (kind) {
      case SystemKind::kMinimal:
        out.push_back(finish("minimal", kind, build_minimal(schema), true));
        out.back().selected = true;
        break;
      case SystemKind::kFlat:
        out.push_back(finish("flat", kind, build_flat(schema), true));
        out.back().selected = true;
        break;
      case SystemKind::kSequential: {
        auto trees = enumerate_sequential(schema, bundle.assign, options.constraints);
        if (trees.empty()) {
          spdlog::warn("no sequential tree satisfies the constraints; falling back to the flat interface");
          out.push_back(finish("sequential/fallback-flat", kind, build_flat(schema), true));
          out.back().selected = true;
          break;
        }
        const std::size_t first = out.size();
        for (std::size_t i = 0; i < trees.size(); ++i)
          out.push_back(finish("sequential/" + std::to_string(i), kind, std::move(trees[i]), true));
        std::size_t best = first;
        double best_risk = std::numeric_limits<double>::infinity();
        for (std::size_t i = first; i < out.size(); ++i) {
          const double r = selection_risk(out[i], bundle.prune);
          if (r < best_risk) {
            best_risk = r;
            best = i;
          }
        }
        out[best].selected = true;
        break;
      }
      case SystemKind::kGreedy:
        out.push_back(finish("greedy", kind, greedy_tree(schema, bundle, pool, assign_metric), true));
        out.back().selected = true;
        break;
    }
  }
  return out;
}

}  // namespace psys
