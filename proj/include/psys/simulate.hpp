#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "psys/assembly.hpp"

namespace psys {

// kDisplayed uses what the system tells people (prune-split estimates);
// kOracle uses group-conditional risk measured on held-out data.
enum class RiskSource { kDisplayed, kOracle };

std::string_view risk_source_name(RiskSource s);
RiskSource parse_risk_source(std::string_view name);

struct AgentProfile {
  ReportingGroup group;       // true full membership
  std::vector<double> costs;  // per attribute, >= 0
  double benefit_scale = 1.0;
};

// Group-conditional risk of each node's model as seen by an agent.
class NodeRisk {
 public:
  NodeRisk(const ParticipatorySystem& s, RiskSource source, const Dataset* test = nullptr);

  double risk(int node, const ReportingGroup& g) const;
  const ParticipatorySystem& system() const { return *system_; }

 private:
  const ParticipatorySystem* system_;
  RiskSource source_;
  const Dataset* test_;
  mutable std::map<std::pair<int, ReportingGroup>, double> cache_;
};

// benefit_scale * (1 - risk at the serving node) - summed costs of the
// attributes reported in r. Throws NonTruthfulReport when r contradicts the
// agent's membership.
double agent_utility(const AgentProfile& agent, const ReportingGroup& r, const NodeRisk& risks);

// Utility-maximizing node among `options` (node indices); ties go to fewer
// reported attributes, then to the earlier option.
int best_option(const AgentProfile& agent, std::span<const int> options, const NodeRisk& risks);
double max_utility(const AgentProfile& agent, std::span<const int> options, const NodeRisk& risks);

// Best report among everything the system offers the agent.
ReportingGroup best_report(const AgentProfile& agent, const NodeRisk& risks);

struct PopulationOptions {
  // Cost of each attribute is base_cost * U(1 - jitter, 1 + jitter).
  double base_cost = 1.0;
  double jitter = 0.0;
  double benefit_scale = 1.0;
  std::uint64_t seed = 0;
};

// One agent per row of `d`, holding that row's membership.
std::vector<AgentProfile> make_population(const Dataset& d, const PopulationOptions& options);

struct ProfilePoint {
  std::string group;  // describe() label, or "all"
  double cost = 0.0;
  std::size_t n = 0;
  double opt_in_rate = 0.0;
  bool defined = false;
  double risk = 0.0;
};

// For each cost multiplier, every agent picks its best report and the row is
// served at the resulting node. Risks are realized on `d`; the "all" row is
// the group-size-weighted risk over groups where the metric is defined.
std::vector<ProfilePoint> participation_profile(const ParticipatorySystem& s, const Dataset& d,
                                                std::span<const AgentProfile> agents,
                                                std::span<const double> cost_grid, const NodeRisk& risks);

void write_profile_csv(std::ostream& out, std::span<const ProfilePoint> points);

}  // namespace psys
