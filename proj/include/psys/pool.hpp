#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "psys/models.hpp"

namespace psys {

class ModelPool {
 public:
  ModelPool() = default;
  // Requires at least one generic model and unique ids.
  ModelPool(GroupSchema schema, std::vector<TrainedModel> models);

  const GroupSchema& schema() const { return schema_; }
  const std::vector<TrainedModel>& models() const { return models_; }
  std::size_t size() const { return models_.size(); }

  const TrainedModel* find(std::string_view id) const;
  const TrainedModel& get(std::string_view id) const;

  // Specs that were skipped during construction, with the reason.
  std::vector<std::string> skipped;

 private:
  GroupSchema schema_;
  std::vector<TrainedModel> models_;
};

struct PoolOptions {
  std::vector<ModelClass> classes{ModelClass::kLogistic};
  bool include_onehot = true;
  bool include_intersectional = true;
  bool include_subgroups = true;
  // Subgroup models for partially reported groups, not just full groups.
  bool include_partial_subgroups = true;
  Hyperparameters hyperparameters;
  // Joined to the pool when `classes` contains kFixedRule.
  std::vector<TrainedModel> fixed_models;
  std::uint64_t seed = 0;
};

// Every reporting group with at least one reported attribute, in a fixed
// order (fewer reported attributes first, then lexicographic).
std::vector<ReportingGroup> reported_groups(const GroupSchema& schema);

std::string subgroup_label(const GroupSchema& schema, const ReportingGroup& r);

ModelPool build_pool(const SplitBundle& bundle, const PoolOptions& options);

// A model can serve `r` when it only reads attributes reported in `r` and it
// was trained on a scope that `r` falls inside.
bool is_viable(const TrainedModel& m, const ReportingGroup& r);
std::vector<const TrainedModel*> viable_models(const ModelPool& pool, const ReportingGroup& r);

// Strict ordering used to break risk ties: fewer required attributes, generic
// kind first, then id.
bool prefer_model(const TrainedModel& a, const TrainedModel& b);

struct ModelChoice {
  const TrainedModel* model = nullptr;
  double risk = 0.0;
};

// Lowest-risk viable model for `r` on `data` (already restricted to r).
// Returns a null model when `data` is empty or the metric is undefined.
ModelChoice best_viable_model(const ModelPool& pool, const ReportingGroup& r, const Dataset& data, Metric metric);

}  // namespace psys
