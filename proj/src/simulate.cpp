#include "psys/simulate.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <random>

#include "psys/artifact.hpp"
#include "psys/error.hpp"

namespace psys {

std::string_view risk_source_name(RiskSource s) { return s == RiskSource::kDisplayed ? "displayed" : "oracle"; }

RiskSource parse_risk_source(std::string_view name) {
  if (name == "displayed") return RiskSource::kDisplayed;
  if (name == "oracle") return RiskSource::kOracle;
  throw Error(Errc::kInvalidConfig, "unknown risk source '" + std::string(name) + "'");
}

NodeRisk::NodeRisk(const ParticipatorySystem& s, RiskSource source, const Dataset* test)
    : system_(&s), source_(source), test_(test) {
  if (source == RiskSource::kOracle && !test)
    throw Error(Errc::kInvalidArgument, "oracle risks need held-out data");
}

double NodeRisk::risk(int node, const ReportingGroup& g) const {
  const auto key = std::make_pair(node, g);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  const auto& s = *system_;
  double r = std::numeric_limits<double>::quiet_NaN();
  if (source_ == RiskSource::kOracle) {
    const Dataset sub = restrict_to(*test_, g);
    if (!sub.empty() && metric_defined(s.metric, sub.labels())) {
      std::vector<int> nodes(sub.n(), node);
      r = risk_from_scores(system_scores(s, sub, nodes), sub.labels(), s.metric);
    }
  }
  if (std::isnan(r)) {
    double base = s.group_baseline.at(s.schema.full_group_index(g));
    if (std::isnan(base)) base = s.root_prune_risk;
    if (std::isnan(base)) base = 0.0;
    r = base - s.certified_gain(node);
  }
  cache_.emplace(key, r);
  return r;
}

double agent_utility(const AgentProfile& agent, const ReportingGroup& r, const NodeRisk& risks) {
  if (!r.covers(agent.group) || r.size() != agent.group.size())
    throw Error(Errc::kNonTruthfulReport, "report contradicts the agent's membership");
  if (agent.costs.size() != r.size()) throw Error(Errc::kShapeMismatch, "one cost per attribute is required");
  double cost = 0.0;
  for (auto a : r.reported_attributes()) cost += agent.costs[a];
  const int node = risks.system().dispatch(r);
  return agent.benefit_scale * (1.0 - risks.risk(node, agent.group)) - cost;
}

int best_option(const AgentProfile& agent, std::span<const int> options, const NodeRisk& risks) {
  const auto& tree = risks.system().tree;
  int best = -1;
  double best_u = -std::numeric_limits<double>::infinity();
  for (int o : options) {
    const double u = agent_utility(agent, tree.node(o).report, risks);
    if (best < 0 || u > best_u ||
        (u == best_u && tree.node(o).report.num_reported() < tree.node(best).report.num_reported())) {
      best = o;
      best_u = u;
    }
  }
  if (best < 0) throw Error(Errc::kInvalidArgument, "no reporting options");
  return best;
}

double max_utility(const AgentProfile& agent, std::span<const int> options, const NodeRisk& risks) {
  const int o = best_option(agent, options, risks);
  return agent_utility(agent, risks.system().tree.node(o).report, risks);
}

ReportingGroup best_report(const AgentProfile& agent, const NodeRisk& risks) {
  const auto options = risks.system().available_nodes(agent.group);
  return risks.system().tree.node(best_option(agent, options, risks)).report;
}

std::vector<AgentProfile> make_population(const Dataset& d, const PopulationOptions& options) {
  if (options.base_cost < 0.0 || options.jitter < 0.0 || options.jitter > 1.0 || !(options.benefit_scale > 0.0))
    throw Error(Errc::kInvalidConfig, "costs must be nonnegative, jitter in [0, 1], benefit positive");
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> u(1.0 - options.jitter, 1.0 + options.jitter);
  std::vector<AgentProfile> out;
  out.reserve(d.n());
  for (std::size_t i = 0; i < d.n(); ++i) {
    AgentProfile a;
    a.group = d.groups()[i];
    a.benefit_scale = options.benefit_scale;
    for (std::size_t j = 0; j < d.schema().k(); ++j)
      a.costs.push_back(options.base_cost * (options.jitter > 0.0 ? u(rng) : 1.0));
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<ProfilePoint> participation_profile(const ParticipatorySystem& s, const Dataset& d,
                                                std::span<const AgentProfile> agents,
                                                std::span<const double> cost_grid, const NodeRisk& risks) {
  if (agents.size() != d.n()) throw Error(Errc::kShapeMismatch, "one agent per row is required");
  if (agents.empty()) throw Error(Errc::kInsufficientData, "population is empty");
  const auto& schema = s.schema;
  std::vector<std::vector<int>> options(agents.size());
  for (std::size_t i = 0; i < agents.size(); ++i) options[i] = s.available_nodes(agents[i].group);

  std::vector<ProfilePoint> out;
  for (double c : cost_grid) {
    if (!(c >= 0.0)) throw Error(Errc::kInvalidConfig, "cost levels must be nonnegative");
    std::vector<int> node_of_row(d.n());
    for (std::size_t i = 0; i < agents.size(); ++i) {
      AgentProfile a = agents[i];
      for (auto& cost : a.costs) cost = cost == 0.0 ? 0.0 : c * cost;
      node_of_row[i] = best_option(a, options[i], risks);
    }

    double weight = 0.0;
    double perf = 0.0;
    std::size_t opted = 0;
    for (const auto& g : schema.full_groups()) {
      ProfilePoint p;
      p.group = schema.describe(g);
      p.cost = c;
      const auto rows = rows_matching(d, g);
      p.n = rows.size();
      if (p.n > 0) {
        const Dataset sub = d.subset(rows);
        std::vector<int> nodes;
        std::size_t in = 0;
        for (auto r : rows) {
          nodes.push_back(node_of_row[r]);
          in += static_cast<std::size_t>(node_of_row[r] != ReportingTree::kRoot);
        }
        opted += in;
        p.opt_in_rate = static_cast<double>(in) / static_cast<double>(p.n);
        p.defined = metric_defined(s.metric, sub.labels());
        if (p.defined) {
          p.risk = risk_from_scores(system_scores(s, sub, nodes), sub.labels(), s.metric);
          const double w = static_cast<double>(p.n);
          weight += w;
          perf += w * p.risk;
        }
      }
      out.push_back(std::move(p));
    }
    ProfilePoint all;
    all.group = "all";
    all.cost = c;
    all.n = d.n();
    all.opt_in_rate = static_cast<double>(opted) / static_cast<double>(d.n());
    all.defined = weight > 0.0;
    all.risk = all.defined ? perf / weight : 0.0;
    out.push_back(std::move(all));
  }
  return out;
}

void write_profile_csv(std::ostream& out, std::span<const ProfilePoint> points) {
  out << "group,cost,n,opt_in_rate,risk\n";
  for (const auto& p : points) {
    std::string group = p.group;
    if (group.find(',') != std::string::npos) group = "\"" + group + "\"";
    const std::string cost = std::isinf(p.cost) ? "inf" : Json(p.cost).dump();
    out << group << ',' << cost << ',' << p.n << ',' << Json(p.opt_in_rate).dump() << ','
        << (p.defined ? Json(p.risk).dump() : "") << '\n';
  }
}

}  // namespace psys
