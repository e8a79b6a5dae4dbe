#include "psys/artifact.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "psys/error.hpp"

namespace psys {

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(Errc::kInvalidArtifact, what); }

const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) bad(std::string("missing field '") + key + "'");
  return j.at(key);
}

template <typename T>
T get(const Json& j, const char* key) {
  try {
    return field(j, key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    bad(std::string("field '") + key + "' has the wrong type: " + e.what());
  }
}

Json nullable(double v) { return std::isnan(v) ? Json(nullptr) : Json(v); }

double from_nullable(const Json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!j.is_number()) bad("expected a number or null");
  return j.get<double>();
}

Json hyperparameters_to_json(const Hyperparameters& h) {
  return Json{{"logistic", {{"l2", h.logistic.l2}, {"tolerance", h.logistic.tolerance},
                            {"max_iterations", h.logistic.max_iterations}}},
              {"forest", {{"trees", h.forest.trees}, {"max_depth", h.forest.max_depth},
                          {"features_per_split", h.forest.features_per_split}}}};
}

Hyperparameters hyperparameters_from_json(const Json& j) {
  Hyperparameters h;
  const auto& lg = field(j, "logistic");
  h.logistic.l2 = get<double>(lg, "l2");
  h.logistic.tolerance = get<double>(lg, "tolerance");
  h.logistic.max_iterations = get<int>(lg, "max_iterations");
  const auto& fo = field(j, "forest");
  h.forest.trees = get<int>(fo, "trees");
  h.forest.max_depth = get<int>(fo, "max_depth");
  h.forest.features_per_split = get<int>(fo, "features_per_split");
  return h;
}

Json parameters_to_json(const ModelParameters& p) {
  return std::visit(
      [](const auto& v) -> Json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, LogisticParameters>) {
          return Json{{"type", "logistic"},
                      {"coefficients", v.coefficients},
                      {"intercept", v.intercept},
                      {"iterations", v.iterations}};
        } else if constexpr (std::is_same_v<T, ForestParameters>) {
          Json trees = Json::array();
          for (const auto& t : v.trees) {
            Json nodes = Json::array();
            for (const auto& n : t.nodes) nodes.push_back(Json::array({n.feature, n.threshold, n.left, n.right, n.value}));
            trees.push_back(std::move(nodes));
          }
          return Json{{"type", "forest"}, {"trees", std::move(trees)}};
        } else {
          Json scores = Json::array();
          for (const auto& [key, score] : v.scores) scores.push_back(Json{{"key", key}, {"score", score}});
          return Json{{"type", "fixed_rule"}, {"scores", std::move(scores)}, {"default_score", v.default_score}};
        }
      },
      p);
}

ModelParameters parameters_from_json(const Json& j) {
  const auto type = get<std::string>(j, "type");
  if (type == "logistic") {
    LogisticParameters p;
    p.coefficients = get<std::vector<double>>(j, "coefficients");
    p.intercept = get<double>(j, "intercept");
    p.iterations = get<int>(j, "iterations");
    return p;
  }
  if (type == "forest") {
    ForestParameters p;
    for (const auto& t : field(j, "trees")) {
      DecisionTree tree;
      for (const auto& n : t) {
        if (!n.is_array() || n.size() != 5) bad("forest node must have five entries");
        TreeNode node;
        node.feature = n[0].get<int>();
        node.threshold = n[1].get<double>();
        node.left = n[2].get<int>();
        node.right = n[3].get<int>();
        node.value = n[4].get<double>();
        tree.nodes.push_back(node);
      }
      const auto size = static_cast<int>(tree.nodes.size());
      for (const auto& node : tree.nodes)
        if (node.feature >= 0 && (node.left <= 0 || node.left >= size || node.right <= 0 || node.right >= size))
          bad("forest node points outside its tree");
      p.trees.push_back(std::move(tree));
    }
    return p;
  }
  if (type == "fixed_rule") {
    FixedRuleParameters p;
    for (const auto& s : field(j, "scores")) p.scores[get<std::vector<int>>(s, "key")] = get<double>(s, "score");
    p.default_score = get<double>(j, "default_score");
    return p;
  }
  bad("unknown parameter type '" + type + "'");
}

}  // namespace

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(std::string_view s) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
  if (ec != std::errc() || ptr != s.data() + s.size()) bad("malformed fingerprint '" + std::string(s) + "'");
  return v;
}

Json report_to_json(const ReportingGroup& r) {
  Json out = Json::array();
  for (std::size_t a = 0; a < r.size(); ++a)
    out.push_back(Json{{"attribute", a}, {"level", r.reported(a) ? Json(r[a]) : Json(nullptr)}});
  return out;
}

ReportingGroup report_from_json(const Json& j, std::size_t k) {
  if (!j.is_array() || j.size() != k) bad("report must list every attribute");
  std::vector<int> e(k, kNotReported);
  for (const auto& item : j) {
    const auto a = get<std::size_t>(item, "attribute");
    if (a >= k) bad("report attribute out of range");
    const auto& level = field(item, "level");
    if (!level.is_null()) e[a] = level.get<int>();
  }
  return ReportingGroup(std::move(e));
}

Json schema_to_json(const GroupSchema& schema) {
  Json attrs = Json::array();
  for (const auto& a : schema.attributes()) attrs.push_back(Json{{"name", a.name}, {"levels", a.levels}});
  return Json{{"attributes", std::move(attrs)}};
}

GroupSchema schema_from_json(const Json& j) {
  std::vector<GroupAttribute> attrs;
  for (const auto& a : field(j, "attributes"))
    attrs.push_back({get<std::string>(a, "name"), get<std::vector<std::string>>(a, "levels")});
  try {
    return GroupSchema(std::move(attrs));
  } catch (const Error& e) {
    bad(std::string("invalid schema: ") + e.what());
  }
}

Json certificate_to_json(const GainCertificate& c) {
  return Json{{"metric", metric_name(c.metric)},
              {"leaf_risk", c.leaf_risk},
              {"parent_risk", c.parent_risk},
              {"gain", c.gain},
              {"test", c.test},
              {"statistic", c.statistic},
              {"p_value", c.p_value},
              {"n_validation", c.n_validation},
              {"decision", decision_name(c.decision)}};
}

GainCertificate certificate_from_json(const Json& j) {
  GainCertificate c;
  try {
    c.metric = parse_metric(get<std::string>(j, "metric"));
    c.decision = parse_decision(get<std::string>(j, "decision"));
  } catch (const Error& e) {
    bad(e.what());
  }
  c.leaf_risk = get<double>(j, "leaf_risk");
  c.parent_risk = get<double>(j, "parent_risk");
  c.gain = get<double>(j, "gain");
  c.test = get<std::string>(j, "test");
  c.statistic = get<double>(j, "statistic");
  c.p_value = get<double>(j, "p_value");
  c.n_validation = get<std::size_t>(j, "n_validation");
  if (c.gain != c.parent_risk - c.leaf_risk) bad("certificate gain does not equal parent risk minus leaf risk");
  if (!(c.p_value >= 0.0 && c.p_value <= 1.0)) bad("certificate p-value outside [0, 1]");
  return c;
}

Json gain_to_json(const GainCertificate& c) {
  return Json{{"metric", metric_name(c.metric)},
              {"gain", c.gain},
              {"p_value", c.p_value},
              {"n_validation", c.n_validation},
              {"display", format_gain(c.gain)}};
}

Json model_to_json(const TrainedModel& m) {
  const auto& s = m.spec;
  std::vector<int> scope;
  for (int e : s.training_scope.entries()) scope.push_back(e);
  return Json{{"id", s.id},
              {"kind", model_kind_name(s.kind)},
              {"required_attributes", s.required_attributes},
              {"training_scope", report_to_json(s.training_scope)},
              {"encoding", encoding_name(s.encoding)},
              {"model_class", model_class_name(s.model_class)},
              {"hyperparameters", hyperparameters_to_json(s.hyperparameters)},
              {"feature_width", m.feature_width},
              {"data_fingerprint", hex64(m.data_fingerprint)},
              {"seed", hex64(m.seed)},
              {"converged", m.converged},
              {"parameters", parameters_to_json(m.parameters)}};
}

TrainedModel model_from_json(const Json& j) {
  TrainedModel m;
  auto& s = m.spec;
  try {
    s.id = get<std::string>(j, "id");
    s.kind = parse_model_kind(get<std::string>(j, "kind"));
    s.encoding = parse_encoding(get<std::string>(j, "encoding"));
    s.model_class = parse_model_class(get<std::string>(j, "model_class"));
  } catch (const Error& e) {
    bad(e.what());
  }
  s.required_attributes = get<std::vector<std::size_t>>(j, "required_attributes");
  const auto& scope = field(j, "training_scope");
  s.training_scope = report_from_json(scope, scope.size());
  s.hyperparameters = hyperparameters_from_json(field(j, "hyperparameters"));
  m.feature_width = get<std::size_t>(j, "feature_width");
  m.data_fingerprint = parse_hex64(get<std::string>(j, "data_fingerprint"));
  m.seed = parse_hex64(get<std::string>(j, "seed"));
  m.converged = get<bool>(j, "converged");
  m.parameters = parameters_from_json(field(j, "parameters"));
  return m;
}

std::vector<TrainedModel> models_from_json(const Json& j) {
  const Json& list = j.is_object() ? field(j, "models") : j;
  if (!list.is_array()) bad("expected a list of models");
  std::vector<TrainedModel> out;
  for (const auto& m : list) out.push_back(model_from_json(m));
  return out;
}

Json system_to_json(const ParticipatorySystem& s) {
  Json nodes = Json::array();
  for (std::size_t i = 0; i < s.tree.size(); ++i) {
    const auto& n = s.tree.node(static_cast<int>(i));
    nodes.push_back(Json{{"index", i},
                         {"report", report_to_json(n.report)},
                         {"label", s.schema.describe(n.report)},
                         {"parent", n.parent},
                         {"children", n.children},
                         {"model_id", n.model_id ? Json(*n.model_id) : Json(nullptr)},
                         {"certificate", n.certificate ? certificate_to_json(*n.certificate) : Json(nullptr)},
                         {"pruned", n.pruned}});
  }
  Json baseline = Json::array();
  for (double v : s.group_baseline) baseline.push_back(nullable(v));
  Json models = Json::array();
  for (const auto& m : s.models) models.push_back(model_to_json(m));
  return Json{{"format_version", kArtifactFormatVersion},
              {"name", s.name},
              {"system_kind", system_kind_name(s.kind)},
              {"tree_kind", tree_kind_name(s.tree.kind())},
              {"metric", metric_name(s.metric)},
              {"alpha", s.alpha},
              {"selected", s.selected},
              {"schema", schema_to_json(s.schema)},
              {"provenance",
               {{"data_fingerprint", hex64(s.provenance.data_fingerprint)},
                {"schema_fingerprint", hex64(s.provenance.schema_fingerprint)},
                {"seed", s.provenance.seed},
                {"toolkit_version", s.provenance.toolkit_version},
                {"shared_assign_prune", s.provenance.shared_assign_prune}}},
              {"root_prune_risk", nullable(s.root_prune_risk)},
              {"group_baseline", std::move(baseline)},
              {"nodes", std::move(nodes)},
              {"models", std::move(models)}};
}

ParticipatorySystem system_from_json(const Json& j) {
  if (!j.is_object()) bad("artifact must be an object");
  const int version = get<int>(j, "format_version");
  if (version != kArtifactFormatVersion)
    bad("unsupported format_version " + std::to_string(version) + " (expected " +
        std::to_string(kArtifactFormatVersion) + ")");
  ParticipatorySystem s;
  TreeKind tree_kind{};
  try {
    s.kind = parse_system_kind(get<std::string>(j, "system_kind"));
    tree_kind = parse_tree_kind(get<std::string>(j, "tree_kind"));
    s.metric = parse_metric(get<std::string>(j, "metric"));
  } catch (const Error& e) {
    bad(e.what());
  }
  s.name = get<std::string>(j, "name");
  s.alpha = get<double>(j, "alpha");
  s.selected = get<bool>(j, "selected");
  s.schema = schema_from_json(field(j, "schema"));
  const auto& p = field(j, "provenance");
  s.provenance.data_fingerprint = parse_hex64(get<std::string>(p, "data_fingerprint"));
  s.provenance.schema_fingerprint = parse_hex64(get<std::string>(p, "schema_fingerprint"));
  s.provenance.seed = get<std::uint64_t>(p, "seed");
  s.provenance.toolkit_version = get<std::string>(p, "toolkit_version");
  s.provenance.shared_assign_prune = get<bool>(p, "shared_assign_prune");
  if (s.provenance.schema_fingerprint != s.schema.fingerprint()) bad("schema fingerprint does not match the schema");
  s.root_prune_risk = from_nullable(field(j, "root_prune_risk"));
  for (const auto& v : field(j, "group_baseline")) s.group_baseline.push_back(from_nullable(v));
  if (s.group_baseline.size() != s.schema.num_full_groups()) bad("group baseline needs one entry per full group");

  const std::size_t k = s.schema.k();
  std::vector<ReportingNode> nodes;
  const auto& jn = field(j, "nodes");
  if (!jn.is_array() || jn.empty()) bad("artifact has no nodes");
  for (std::size_t i = 0; i < jn.size(); ++i) {
    const auto& n = jn[i];
    if (get<std::size_t>(n, "index") != i) bad("nodes must be listed in index order");
    ReportingNode node;
    node.report = report_from_json(field(n, "report"), k);
    node.parent = get<int>(n, "parent");
    node.children = get<std::vector<int>>(n, "children");
    if (!field(n, "model_id").is_null()) node.model_id = get<std::string>(n, "model_id");
    if (!field(n, "certificate").is_null()) node.certificate = certificate_from_json(field(n, "certificate"));
    node.pruned = get<bool>(n, "pruned");
    nodes.push_back(std::move(node));
  }
  for (const auto& node : nodes)
    for (int c : node.children)
      if (c <= 0 || static_cast<std::size_t>(c) >= nodes.size()) bad("child index out of range");
  s.tree = ReportingTree::from_nodes(tree_kind, std::move(nodes));
  if (auto problem = validate_tree(s.tree, s.schema); !problem.empty()) bad("malformed tree: " + problem);

  s.models = models_from_json(field(j, "models"));
  if (!std::is_sorted(s.models.begin(), s.models.end(),
                      [](const auto& a, const auto& b) { return a.spec.id < b.spec.id; }))
    bad("models must be sorted by id");
  for (const auto& m : s.models) {
    try {
      m.spec.validate(s.schema);
    } catch (const Error& e) {
      bad(e.what());
    }
  }

  // Participatory invariants.
  for (std::size_t i = 0; i < s.tree.size(); ++i) {
    const auto& n = s.tree.node(static_cast<int>(i));
    if (!n.model_id) bad("node " + s.schema.describe(n.report) + " has no model");
    const auto& m = s.model(*n.model_id);
    if (!is_viable(m, n.report)) bad("model '" + m.spec.id + "' cannot serve " + s.schema.describe(n.report));
    if (i == 0 || n.pruned) continue;
    if (s.tree.node(n.parent).pruned) bad("surviving node under a pruned parent");
    if (!n.certificate || n.certificate->decision != CertificateDecision::kKept || !(n.certificate->p_value < s.alpha))
      bad("surviving node " + s.schema.describe(n.report) + " lacks a passing certificate");
  }
  if (s.tree.node(ReportingTree::kRoot).pruned) bad("root is marked pruned");
  if (!s.root_model().spec.required_attributes.empty()) bad("root model requires group attributes");
  return s;
}

std::string serialize_system(const ParticipatorySystem& s) { return system_to_json(s).dump(2) + "\n"; }

ParticipatorySystem parse_system(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    bad(std::string("not a JSON document: ") + e.what());
  }
  return system_from_json(j);
}

void save_system(const ParticipatorySystem& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::kInvalidConfig, "cannot write '" + path + "'");
  out << serialize_system(s);
  if (!out) throw Error(Errc::kInvalidConfig, "failed writing '" + path + "'");
}

ParticipatorySystem load_system(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) bad("cannot read '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_system(buf.str());
}

Json public_system_json(const ParticipatorySystem& s) {
  Json nodes = Json::array();
  for (std::size_t i = 0; i < s.tree.size(); ++i) {
    const auto& n = s.tree.node(static_cast<int>(i));
    Json node{{"index", i},
              {"report", report_to_json(n.report)},
              {"label", s.schema.describe(n.report)},
              {"parent", n.parent},
              {"children", n.children},
              {"pruned", n.pruned},
              {"model_id", n.model_id ? Json(*n.model_id) : Json(nullptr)},
              {"gain", n.certificate ? gain_to_json(*n.certificate) : Json(nullptr)},
              {"decision", n.certificate ? Json(decision_name(n.certificate->decision)) : Json(nullptr)}};
    if (n.model_id) node["required_attributes"] = s.model(*n.model_id).spec.required_attributes;
    nodes.push_back(std::move(node));
  }
  return Json{{"format_version", kArtifactFormatVersion},
              {"name", s.name},
              {"system_kind", system_kind_name(s.kind)},
              {"tree_kind", tree_kind_name(s.tree.kind())},
              {"metric", metric_name(s.metric)},
              {"alpha", s.alpha},
              {"schema", schema_to_json(s.schema)},
              {"feature_width", s.root_model().feature_width},
              {"nodes", std::move(nodes)}};
}

std::string format_gain(double gain) {
  const double pct = std::round(gain * 1000.0) / 10.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.1f%%", pct == 0.0 ? 0.0 : pct);
  return buf;
}

}  // namespace psys
