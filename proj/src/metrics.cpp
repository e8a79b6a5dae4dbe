#include "psys/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>

#include <spdlog/spdlog.h>

#include "psys/error.hpp"
#include "psys/stats.hpp"

namespace psys {

StaticModelEvaluable::StaticModelEvaluable(const TrainedModel& model, const TrainedModel& generic, std::string name)
    : model_(&model), generic_(&generic), name_(name.empty() ? model.spec.id : std::move(name)) {
  if (!generic.spec.required_attributes.empty())
    throw Error(Errc::kInvalidArgument, "generic counterpart '" + generic.spec.id + "' requires group attributes");
}

StaticModelEvaluable StaticModelEvaluable::with_imputed(std::vector<ReportingGroup> memberships,
                                                        std::string name) const {
  StaticModelEvaluable out = *this;
  out.name_ = std::move(name);
  out.imputed_ = std::make_shared<const std::vector<ReportingGroup>>(std::move(memberships));
  return out;
}

Serving StaticModelEvaluable::serve(const Dataset& rows, const ReportingGroup& g,
                                    std::span<const std::size_t> row_ids) const {
  Serving s;
  std::vector<ReportingGroup> reports(rows.n(), g);
  if (imputed_) {
    for (std::size_t i = 0; i < rows.n(); ++i) reports[i] = imputed_->at(row_ids[i]);
  }
  const auto& schema = rows.schema();
  s.scores = predict_scores(*model_, schema, rows.features(), reports);
  const std::vector<ReportingGroup> none(rows.n(), ReportingGroup::none(schema.k()));
  s.generic = predict_scores(*generic_, schema, rows.features(), none);
  s.requested = imputed_ ? 0 : model_->spec.required_attributes.size();
  return s;
}

SystemEvaluable::SystemEvaluable(const ParticipatorySystem& system, ReportingPolicy policy) : system_(&system) {
  if (policy == ReportingPolicy::kPositiveGain)
    choose_ = [sys = &system](const ReportingGroup& g) { return sys->policy_node(g); };
  else
    choose_ = [sys = &system](const ReportingGroup& g) { return sys->dispatch(g); };
}

SystemEvaluable::SystemEvaluable(const ParticipatorySystem& system, std::function<int(const ReportingGroup&)> choose)
    : system_(&system), choose_(std::move(choose)) {}

Serving SystemEvaluable::serve(const Dataset& rows, const ReportingGroup& g, std::span<const std::size_t>) const {
  Serving s;
  s.node = choose_(g);
  const auto& node = system_->tree.node(s.node);
  if (!node.report.covers(g)) throw Error(Errc::kNonTruthfulReport, "serving node does not match the group");
  std::vector<int> nodes(rows.n(), s.node);
  s.scores = system_scores(*system_, rows, nodes);
  std::fill(nodes.begin(), nodes.end(), ReportingTree::kRoot);
  s.generic = system_scores(*system_, rows, nodes);
  s.requested = node.report.num_reported();
  return s;
}

namespace {

std::uint64_t group_seed(std::uint64_t seed, const ReportingGroup& g) {
  std::uint64_t h = hash_combine(seed, 0x5eedULL);
  for (int e : g.entries()) h = hash_combine(h, static_cast<std::uint64_t>(e));
  return h;
}

}  // namespace

EvaluationReport evaluate(const Evaluable& e, const Dataset& test, const EvaluationConfig& config) {
  const auto& schema = test.schema();
  EvaluationReport rep;
  rep.name = e.name();
  rep.metric = config.metric;
  rep.n = test.n();

  double weight = 0.0;
  double perf = 0.0;
  double generic = 0.0;
  double gain = 0.0;
  double requested = 0.0;
  bool any = false;
  for (const auto& g : schema.full_groups()) {
    GroupEvaluation ge;
    ge.group = g;
    ge.label = schema.describe(g);
    const auto rows = rows_matching(test, g);
    const Dataset sub = test.subset(rows);
    ge.n = sub.n();
    ge.positives = sub.positives();
    if (ge.n == 0) {
      rep.groups.push_back(std::move(ge));
      continue;
    }
    Serving s = e.serve(sub, g, rows);
    ge.requested = s.requested;
    ge.node = s.node;
    requested += static_cast<double>(ge.n) * static_cast<double>(s.requested) / static_cast<double>(schema.k());
    ge.defined = metric_defined(config.metric, sub.labels());
    if (!ge.defined) {
      ++rep.excluded_groups;
      spdlog::warn("{}: {} is undefined for group {}; excluded", rep.name, metric_name(config.metric), ge.label);
      rep.groups.push_back(std::move(ge));
      continue;
    }
    ge.risk = risk_from_scores(s.scores, sub.labels(), config.metric);
    ge.generic_risk = risk_from_scores(s.generic, sub.labels(), config.metric);
    ge.gain = ge.generic_risk - ge.risk;

    // H0: personalization does not hurt this group.
    std::vector<double> ls;
    std::vector<double> ps;
    std::vector<int> ys;
    auto risk = [&](std::span<const std::size_t> idx, double& leaf, double& parent) {
      ls.clear();
      ps.clear();
      ys.clear();
      for (auto i : idx) {
        ls.push_back(s.generic[i]);
        ps.push_back(s.scores[i]);
        ys.push_back(sub.labels()[i]);
      }
      if (!metric_defined(config.metric, ys)) return false;
      leaf = risk_from_scores(ls, ys, config.metric);
      parent = risk_from_scores(ps, ys, config.metric);
      return true;
    };
    const auto t = bootstrap_test(sub.n(), risk, config.resamples, group_seed(config.seed, g));
    ge.violation_p = t.p_value;
    ge.violation = t.p_value < config.alpha;
    rep.rationality_violations += static_cast<std::size_t>(ge.violation);

    const double w = static_cast<double>(ge.n);
    weight += w;
    perf += w * ge.risk;
    generic += w * ge.generic_risk;
    gain += w * ge.gain;
    if (!any) {
      rep.group_gain_min = rep.group_gain_max = ge.gain;
      any = true;
    } else {
      rep.group_gain_min = std::min(rep.group_gain_min, ge.gain);
      rep.group_gain_max = std::max(rep.group_gain_max, ge.gain);
    }
    rep.groups.push_back(std::move(ge));
  }
  if (weight > 0.0) {
    rep.overall_performance = perf / weight;
    rep.generic_performance = generic / weight;
    rep.overall_gain = gain / weight;
  }
  if (test.n() > 0) rep.data_use = requested / static_cast<double>(test.n());
  if (const auto* m = e.static_model()) rep.imputation_risk = imputation_risk(*m, test, config.metric);
  if (const auto* sys = e.system()) rep.options_pruned = options_pruned(*sys);
  return rep;
}

EvaluationReport evaluate_system(const ParticipatorySystem& s, const SplitBundle& bundle,
                                 const EvaluationConfig& config) {
  return evaluate(SystemEvaluable(s, ReportingPolicy::kPositiveGain), bundle.test, config);
}

double overall_performance(const Evaluable& e, const Dataset& test, Metric metric) {
  EvaluationConfig c;
  c.metric = metric;
  c.resamples = 0;
  return evaluate(e, test, c).overall_performance;
}

double overall_gain(const Evaluable& e, const Dataset& test, Metric metric) {
  EvaluationConfig c;
  c.metric = metric;
  c.resamples = 0;
  return evaluate(e, test, c).overall_gain;
}

std::pair<double, double> group_gain_range(const Evaluable& e, const Dataset& test, Metric metric) {
  EvaluationConfig c;
  c.metric = metric;
  c.resamples = 0;
  const auto r = evaluate(e, test, c);
  return {r.group_gain_min, r.group_gain_max};
}

std::size_t rationality_violations(const Evaluable& e, const Dataset& test, const EvaluationConfig& config) {
  return evaluate(e, test, config).rationality_violations;
}

double imputation_risk(const TrainedModel& model, const Dataset& test, Metric metric) {
  const auto& schema = test.schema();
  const auto groups = schema.full_groups();
  double worst = 0.0;
  bool any = false;
  for (const auto& g : groups) {
    const Dataset sub = restrict_to(test, g);
    if (sub.empty() || !metric_defined(metric, sub.labels())) continue;
    const std::vector<ReportingGroup> truth(sub.n(), g);
    const double base = risk_from_scores(predict_scores(model, schema, sub.features(), truth), sub.labels(), metric);
    for (const auto& other : groups) {
      if (other == g) continue;
      const std::vector<ReportingGroup> wrong(sub.n(), other);
      const double r = risk_from_scores(predict_scores(model, schema, sub.features(), wrong), sub.labels(), metric);
      const double term = base - r;
      worst = any ? std::min(worst, term) : term;
      any = true;
    }
  }
  return any ? worst : 0.0;
}

double options_pruned(const ParticipatorySystem& s) {
  const std::size_t before = s.tree.size() - 1;
  if (before == 0) return 0.0;
  const std::size_t after = s.tree.num_surviving() - 1;
  return static_cast<double>(before - after) / static_cast<double>(before);
}

double data_use(const Evaluable& e, const Dataset& test) {
  EvaluationConfig c;
  c.resamples = 0;
  return evaluate(e, test, c).data_use;
}

ImputeMethod parse_impute_method(std::string_view name) {
  if (name == "mode") return ImputeMethod::kMode;
  if (name == "knn") return ImputeMethod::kKnn;
  throw Error(Errc::kInvalidConfig, "unknown imputation method '" + std::string(name) + "'");
}

std::vector<ReportingGroup> impute_groups(const Dataset& d, const Dataset& reference, ImputeMethod method,
                                          std::size_t k_neighbors) {
  if (reference.empty()) throw Error(Errc::kInsufficientData, "imputation needs a nonempty reference sample");
  if (reference.d() != d.d()) throw Error(Errc::kShapeMismatch, "reference and target feature widths differ");
  const auto& schema = reference.schema();
  const std::size_t ng = schema.num_full_groups();
  const auto groups = schema.full_groups();
  std::vector<std::size_t> ref_group(reference.n());
  for (std::size_t i = 0; i < reference.n(); ++i) ref_group[i] = schema.full_group_index(reference.groups()[i]);

  if (method == ImputeMethod::kMode) {
    std::vector<std::size_t> counts(ng, 0);
    for (auto g : ref_group) ++counts[g];
    const auto best = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    return std::vector<ReportingGroup>(d.n(), groups[best]);
  }

  if (k_neighbors == 0) throw Error(Errc::kInvalidArgument, "k_neighbors must be positive");
  const std::size_t dim = reference.d();
  std::vector<double> mean(dim, 0.0);
  std::vector<double> sd(dim, 0.0);
  for (std::size_t i = 0; i < reference.n(); ++i)
    for (std::size_t j = 0; j < dim; ++j) mean[j] += reference.features()(i, j);
  for (auto& m : mean) m /= static_cast<double>(reference.n());
  for (std::size_t i = 0; i < reference.n(); ++i)
    for (std::size_t j = 0; j < dim; ++j) {
      const double z = reference.features()(i, j) - mean[j];
      sd[j] += z * z;
    }
  for (auto& s : sd) {
    s = std::sqrt(s / static_cast<double>(reference.n()));
    if (!(s > 0.0)) s = 1.0;
  }

  const std::size_t k = std::min(k_neighbors, reference.n());
  std::vector<ReportingGroup> out;
  out.reserve(d.n());
  std::vector<std::pair<double, std::size_t>> dist(reference.n());
  for (std::size_t i = 0; i < d.n(); ++i) {
    for (std::size_t r = 0; r < reference.n(); ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double z = (d.features()(i, j) - reference.features()(r, j)) / sd[j];
        s += z * z;
      }
      dist[r] = {s, r};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    std::vector<std::size_t> votes(ng, 0);
    for (std::size_t t = 0; t < k; ++t) ++votes[ref_group[dist[t].second]];
    const std::size_t top = *std::max_element(votes.begin(), votes.end());
    // Among tied groups, the one holding the nearest neighbor.
    std::size_t pick = ref_group[dist[0].second];
    for (std::size_t t = 0; t < k; ++t) {
      if (votes[ref_group[dist[t].second]] == top) {
        pick = ref_group[dist[t].second];
        break;
      }
    }
    out.push_back(groups[pick]);
  }
  return out;
}

Json evaluation_to_json(const EvaluationReport& r) {
  Json groups = Json::array();
  for (const auto& g : r.groups) {
    Json row{{"group", g.label},
             {"report", report_to_json(g.group)},
             {"n", g.n},
             {"positives", g.positives},
             {"defined", g.defined},
             {"requested", g.requested},
             {"node", g.node}};
    if (g.defined) {
      row["risk"] = g.risk;
      row["generic_risk"] = g.generic_risk;
      row["gain"] = g.gain;
      row["violation"] = g.violation;
      row["violation_p"] = g.violation_p;
    }
    groups.push_back(std::move(row));
  }
  return Json{{"name", r.name},
              {"metric", metric_name(r.metric)},
              {"n", r.n},
              {"overall_performance", r.overall_performance},
              {"generic_performance", r.generic_performance},
              {"overall_gain", r.overall_gain},
              {"group_gain_min", r.group_gain_min},
              {"group_gain_max", r.group_gain_max},
              {"rationality_violations", r.rationality_violations},
              {"imputation_risk", r.imputation_risk ? Json(*r.imputation_risk) : Json(nullptr)},
              {"options_pruned", r.options_pruned ? Json(*r.options_pruned) : Json(nullptr)},
              {"data_use", r.data_use},
              {"excluded_groups", r.excluded_groups},
              {"groups", std::move(groups)}};
}

namespace {

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string num(double v) { return Json(v).dump(); }

}  // namespace

void write_summary_csv(std::ostream& out, std::span<const EvaluationReport> reports) {
  out << "name,metric,n,overall_performance,overall_gain,group_gain_min,group_gain_max,rationality_violations,"
         "imputation_risk,options_pruned,data_use\n";
  for (const auto& r : reports) {
    out << csv_cell(r.name) << ',' << metric_name(r.metric) << ',' << r.n << ',' << num(r.overall_performance) << ','
        << num(r.overall_gain) << ',' << num(r.group_gain_min) << ',' << num(r.group_gain_max) << ','
        << r.rationality_violations << ',' << (r.imputation_risk ? num(*r.imputation_risk) : "") << ','
        << (r.options_pruned ? num(*r.options_pruned) : "") << ',' << num(r.data_use) << '\n';
  }
}

void write_groups_csv(std::ostream& out, std::span<const EvaluationReport> reports) {
  out << "name,group,n,positives,risk,generic_risk,gain,requested,violation,violation_p\n";
  for (const auto& r : reports) {
    for (const auto& g : r.groups) {
      out << csv_cell(r.name) << ',' << csv_cell(g.label) << ',' << g.n << ',' << g.positives << ',';
      if (g.defined)
        out << num(g.risk) << ',' << num(g.generic_risk) << ',' << num(g.gain) << ',' << g.requested << ','
            << (g.violation ? 1 : 0) << ',' << num(g.violation_p) << '\n';
      else
        out << ",,," << g.requested << ",,\n";
    }
  }
}

}  // namespace psys
