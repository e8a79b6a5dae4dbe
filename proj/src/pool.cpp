#include "psys/pool.hpp"

#include <algorithm>
#include <set>

#include <spdlog/spdlog.h>

#include "psys/error.hpp"

namespace psys {

ModelPool::ModelPool(GroupSchema schema, std::vector<TrainedModel> models)
    : schema_(std::move(schema)), models_(std::move(models)) {
  std::set<std::string> ids;
  bool has_generic = false;
  for (const auto& m : models_) {
    if (!ids.insert(m.spec.id).second) throw Error(Errc::kInvalidArgument, "duplicate model id '" + m.spec.id + "'");
    m.spec.validate(schema_);
    has_generic = has_generic || (m.spec.required_attributes.empty() && m.spec.training_scope.is_none());
  }
  if (!has_generic) throw Error(Errc::kInvalidArgument, "model pool needs a generic model");
}

const TrainedModel* ModelPool::find(std::string_view id) const {
  for (const auto& m : models_)
    if (m.spec.id == id) return &m;
  return nullptr;
}

const TrainedModel& ModelPool::get(std::string_view id) const {
  const auto* m = find(id);
  if (!m) throw Error(Errc::kInvalidArgument, "no model '" + std::string(id) + "' in pool");
  return *m;
}

std::vector<ReportingGroup> reported_groups(const GroupSchema& schema) {
  std::vector<ReportingGroup> out;
  std::vector<int> current(schema.k(), kNotReported);
  // Odometer over (levels + not-reported) per attribute.
  while (true) {
    ReportingGroup r(current);
    if (!r.is_none()) out.push_back(r);
    std::size_t i = schema.k();
    while (i-- > 0) {
      if (++current[i] < static_cast<int>(schema.num_levels(i))) break;
      current[i] = kNotReported;
    }
    if (i == static_cast<std::size_t>(-1)) break;
  }
  std::stable_sort(out.begin(), out.end(), [](const ReportingGroup& a, const ReportingGroup& b) {
    return a.num_reported() < b.num_reported();
  });
  return out;
}

std::string subgroup_label(const GroupSchema& schema, const ReportingGroup& r) {
  std::string out;
  for (auto a : r.reported_attributes()) {
    if (!out.empty()) out += ',';
    out += schema.attribute(a).name + "=" + schema.attribute(a).levels[static_cast<std::size_t>(r[a])];
  }
  return out;
}

ModelPool build_pool(const SplitBundle& bundle, const PoolOptions& options) {
  const Dataset& assign = bundle.assign;
  const GroupSchema& schema = assign.schema();
  std::vector<std::size_t> all_attributes(schema.k());
  for (std::size_t i = 0; i < schema.k(); ++i) all_attributes[i] = i;

  std::vector<TrainedModel> models;
  std::vector<std::string> skipped;
  bool generic_trained = false;

  auto try_train = [&](const ModelSpec& spec) {
    if (!can_train(spec, assign)) {
      skipped.push_back(spec.id + ": insufficient data");
      spdlog::info("skipping model '{}': insufficient data in its training scope", spec.id);
      return false;
    }
    const std::uint64_t seed = fnv1a({reinterpret_cast<const unsigned char*>(spec.id.data()), spec.id.size()},
                                     options.seed ^ 0x9e3779b97f4a7c15ULL);
    models.push_back(train_model(spec, assign, seed));
    return true;
  };

  for (ModelClass cls : options.classes) {
    if (cls == ModelClass::kFixedRule) {
      for (const auto& m : options.fixed_models) {
        models.push_back(m);
        generic_trained = generic_trained || m.spec.required_attributes.empty();
      }
      continue;
    }
    const std::string prefix(model_class_name(cls));
    auto base = [&](std::string id, ModelKind kind) {
      ModelSpec spec;
      spec.id = prefix + "/" + std::move(id);
      spec.kind = kind;
      spec.training_scope = ReportingGroup::none(schema.k());
      spec.model_class = cls;
      spec.hyperparameters = options.hyperparameters;
      return spec;
    };

    ModelSpec generic = base("generic", ModelKind::kGeneric);
    if (try_train(generic)) {
      generic_trained = true;
    } else {
      throw Error(Errc::kInsufficientData, "generic model '" + generic.id + "' cannot be trained on the assign split");
    }
    if (options.include_onehot) {
      ModelSpec spec = base("onehot", ModelKind::kOneHot);
      spec.required_attributes = all_attributes;
      spec.encoding = Encoding::kOneHot;
      try_train(spec);
    }
    if (options.include_intersectional) {
      ModelSpec spec = base("intersectional", ModelKind::kIntersectional);
      spec.required_attributes = all_attributes;
      spec.encoding = Encoding::kIntersectional;
      try_train(spec);
    }
    if (options.include_subgroups) {
      for (const auto& r : reported_groups(schema)) {
        if (!r.is_full() && !options.include_partial_subgroups) continue;
        ModelSpec spec = base("subgroup/" + subgroup_label(schema, r), ModelKind::kSubgroup);
        spec.training_scope = r;
        spec.required_attributes = r.reported_attributes();
        try_train(spec);
      }
    }
  }
  if (!generic_trained) throw Error(Errc::kInsufficientData, "pool has no generic model");
  ModelPool pool(schema, std::move(models));
  pool.skipped = std::move(skipped);
  return pool;
}

bool is_viable(const TrainedModel& m, const ReportingGroup& r) {
  for (auto a : m.spec.required_attributes)
    if (a >= r.size() || !r.reported(a)) return false;
  return m.spec.training_scope.covers(r);
}

std::vector<const TrainedModel*> viable_models(const ModelPool& pool, const ReportingGroup& r) {
  pool.schema().check(r);
  std::vector<const TrainedModel*> out;
  for (const auto& m : pool.models())
    if (is_viable(m, r)) out.push_back(&m);
  return out;
}

bool prefer_model(const TrainedModel& a, const TrainedModel& b) {
  const auto ra = a.spec.required_attributes.size();
  const auto rb = b.spec.required_attributes.size();
  if (ra != rb) return ra < rb;
  const bool ga = a.spec.kind == ModelKind::kGeneric;
  const bool gb = b.spec.kind == ModelKind::kGeneric;
  if (ga != gb) return ga;
  return a.spec.id < b.spec.id;
}

ModelChoice best_viable_model(const ModelPool& pool, const ReportingGroup& r, const Dataset& data, Metric metric) {
  ModelChoice best;
  if (!metric_defined(metric, data.labels())) return best;
  for (const auto* m : viable_models(pool, r)) {
    const double risk = empirical_risk(*m, data, metric);
    if (!best.model || risk < best.risk || (risk == best.risk && prefer_model(*m, *best.model))) {
      best.model = m;
      best.risk = risk;
    }
  }
  return best;
}

}  // namespace psys
