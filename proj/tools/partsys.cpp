// partsys: train, evaluate, enumerate, simulate and serve participatory systems.
//
// Exit codes: 0 ok, 1 unexpected failure, 2 configuration, 3 data or artifact,
// 4 training, 5 bind failure.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "psys/artifact.hpp"
#include "psys/assembly.hpp"
#include "psys/dataset.hpp"
#include "psys/error.hpp"
#include "psys/interface.hpp"
#include "psys/metrics.hpp"
#include "psys/pool.hpp"
#include "psys/service.hpp"
#include "psys/simulate.hpp"
#include "psys/synthetic.hpp"

namespace fs = std::filesystem;
using namespace psys;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitTraining = 4;

int exit_code(Errc code) {
  switch (code) {
    case Errc::kInvalidConfig:
    case Errc::kInvalidArgument:
    case Errc::kTooManyAttributes:
      return kExitConfig;
    case Errc::kInsufficientData:
    case Errc::kUndefinedMetric:
      return kExitTraining;
    default:
      return kExitData;
  }
}

struct Common {
  std::string data;
  std::string schema;
  std::string metric = "error";
  double alpha = 0.10;
  std::uint64_t seed = 0;
  double test_frac = 0.2;
  double prune_frac = 0.2;
  bool shared_assign_prune = false;
};

struct TrainArgs {
  std::vector<std::string> kinds{"minimal", "flat", "sequential"};
  std::vector<std::string> classes{"logistic"};
  std::string fixed_models;
  std::string out = "systems";
  std::string test = "auto";
  std::size_t resamples = 100;
  std::size_t max_trees = 0;
  std::size_t min_samples = 0;
  bool no_partial_subgroups = false;
};

struct EvaluateArgs {
  std::vector<std::string> models;
  std::string out = "evaluation";
  bool split = false;
  std::size_t resamples = 100;
};

struct EnumerateArgs {
  std::size_t max_trees = 0;
  std::size_t min_samples = 0;
  bool count_only = false;
  bool allow_single_class = false;
};

struct SimulateArgs {
  std::string model;
  std::vector<std::string> costs{"0", "0.01", "0.02", "0.05", "0.1", "0.2", "inf"};
  double jitter = 0.0;
  double benefit = 1.0;
  std::string risk = "displayed";
  std::string out;
};

struct ServeArgs {
  std::string model;
  std::string host = "127.0.0.1";
  int port = 8080;
  int idle_minutes = 15;
};

struct SynthArgs {
  std::string task = "figure1";
  std::string out = ".";
  std::size_t k = 2;
  std::size_t n = 1000;
  std::size_t d = 3;
  std::size_t scale = 10;
};

std::string file_stem(const std::string& system_name) {
  std::string s = system_name;
  for (auto& c : s)
    if (c == '/') c = '-';
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::kInvalidConfig, "cannot write '" + path.string() + "'");
  out << text;
}

SchemaConfig load_config(const Common& c) {
  if (c.schema.empty()) throw Error(Errc::kInvalidConfig, "--schema is required");
  return load_schema_config(c.schema);
}

Dataset load_data(const Common& c, const SchemaConfig& config) {
  if (c.data.empty()) throw Error(Errc::kInvalidConfig, "--data is required");
  return load_dataset(c.data, config);
}

SplitBundle split(const Common& c, const Dataset& d) {
  SplitOptions o;
  o.test_fraction = c.test_frac;
  o.prune_fraction = c.prune_frac;
  o.seed = c.seed;
  o.shared_assign_prune = c.shared_assign_prune;
  return split_dataset(d, o);
}

TreeConstraints constraints_for(const SchemaConfig& config, std::size_t min_samples, std::size_t max_trees) {
  TreeConstraints t;
  t.ordering = resolve_ordering(config.schema, config.ordering);
  if (min_samples > 0) {
    t.min_samples = min_samples;
  } else if (config.min_samples) {
    t.min_samples = config.min_samples;
  }
  if (max_trees > 0) t.max_trees = max_trees;
  return t;
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(Errc::kInvalidConfig, "--alpha must lie in (0, 1)");
}

int cmd_train(const Common& c, const TrainArgs& a) {
  check_alpha(c.alpha);
  const SchemaConfig config = load_config(c);
  PoolOptions pool_options;
  pool_options.classes.clear();
  for (const auto& name : a.classes) pool_options.classes.push_back(parse_model_class(name));
  pool_options.include_partial_subgroups = !a.no_partial_subgroups;
  pool_options.seed = c.seed;
  if (!a.fixed_models.empty()) {
    std::ifstream in(a.fixed_models);
    if (!in) throw Error(Errc::kInvalidConfig, "cannot open fixed models '" + a.fixed_models + "'");
    Json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::kInvalidArtifact, std::string("fixed models: ") + e.what());
    }
    pool_options.fixed_models = models_from_json(j);
    if (std::find(pool_options.classes.begin(), pool_options.classes.end(), ModelClass::kFixedRule) ==
        pool_options.classes.end())
      pool_options.classes.push_back(ModelClass::kFixedRule);
  }
  LearnOptions learn;
  learn.kinds.clear();
  for (const auto& k : a.kinds) learn.kinds.push_back(parse_system_kind(k));
  learn.metric = parse_metric(c.metric);
  learn.alpha = c.alpha;
  learn.constraints = constraints_for(config, a.min_samples, a.max_trees);
  learn.test.kind = parse_test_kind(a.test);
  learn.test.resamples = a.resamples;
  learn.seed = c.seed;

  const Dataset data = load_data(c, config);
  const SplitBundle bundle = split(c, data);
  spdlog::info("split {} rows: assign {}, prune {}, test {}", data.n(), bundle.assign.n(), bundle.prune.n(),
               bundle.test.n());
  const ModelPool pool = build_pool(bundle, pool_options);
  spdlog::info("pool holds {} models ({} skipped)", pool.size(), pool.skipped.size());
  const auto systems = learn_systems(bundle, pool, learn);

  EvaluationConfig eval;
  eval.metric = learn.metric;
  eval.alpha = c.alpha;
  eval.seed = c.seed;

  Json log{{"format_version", kArtifactFormatVersion},
           {"toolkit_version", std::string(kToolkitVersion)},
           {"seed", c.seed},
           {"metric", c.metric},
           {"alpha", c.alpha},
           {"rows", {{"assign", bundle.assign.n()}, {"prune", bundle.prune.n()}, {"test", bundle.test.n()}}},
           {"shared_assign_prune", c.shared_assign_prune},
           {"skipped_models", pool.skipped}};
  Json pool_ids = Json::array();
  for (const auto& m : pool.models()) pool_ids.push_back(m.spec.id);
  log["pool"] = pool_ids;
  Json entries = Json::array();

  std::cout << "system\tselected\toptions\toptions_pruned\ttest_" << c.metric << "\tdata_use\tartifact\n";
  for (const auto& s : systems) {
    const fs::path path = fs::path(a.out) / (file_stem(s.name) + ".json");
    write_text(path, serialize_system(s));
    const EvaluationReport r = evaluate_system(s, bundle, eval);
    const double pruned = options_pruned(s);
    std::cout << s.name << '\t' << (s.selected ? "yes" : "no") << '\t' << s.tree.num_surviving() - 1 << '\t'
              << Json(pruned).dump() << '\t' << Json(r.overall_performance).dump() << '\t'
              << Json(r.data_use).dump() << '\t' << path.string() << '\n';
    entries.push_back(Json{{"name", s.name},
                           {"selected", s.selected},
                           {"artifact", path.filename().string()},
                           {"surviving_options", s.tree.num_surviving() - 1},
                           {"options_pruned", pruned},
                           {"test_performance", r.overall_performance},
                           {"generic_performance", r.generic_performance},
                           {"data_use", r.data_use}});
  }
  log["systems"] = entries;
  write_text(fs::path(a.out) / "build_log.json", log.dump(2) + "\n");
  return 0;
}

int cmd_evaluate(const Common& c, const EvaluateArgs& a) {
  check_alpha(c.alpha);
  if (a.models.empty()) throw Error(Errc::kInvalidConfig, "--model is required");
  const SchemaConfig config = load_config(c);
  const Dataset data = load_data(c, config);
  std::vector<ParticipatorySystem> systems;
  for (const auto& path : a.models) {
    systems.push_back(load_system(path));
    if (systems.back().schema.fingerprint() != config.schema.fingerprint())
      throw Error(Errc::kInvalidArtifact, "artifact '" + path + "' was built for a different group schema");
  }
  const Dataset test = a.split ? split(c, data).test : data;
  std::vector<EvaluationReport> reports;
  Json out = Json::array();
  for (const auto& s : systems) {
    EvaluationConfig eval;
    eval.metric = s.metric;
    eval.alpha = c.alpha;
    eval.resamples = a.resamples;
    eval.seed = c.seed;
    SystemEvaluable e(s);
    reports.push_back(evaluate(e, test, eval));
    reports.back().options_pruned = options_pruned(s);
    out.push_back(evaluation_to_json(reports.back()));
    std::cout << s.name << ": " << metric_name(s.metric) << ' ' << Json(reports.back().overall_performance).dump()
              << ", gain " << Json(reports.back().overall_gain).dump() << ", violations "
              << reports.back().rationality_violations << '\n';
  }
  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "evaluation.json", out.dump(2) + "\n");
  std::ofstream summary(fs::path(a.out) / "summary.csv");
  write_summary_csv(summary, reports);
  std::ofstream groups(fs::path(a.out) / "groups.csv");
  write_groups_csv(groups, reports);
  return 0;
}

std::string describe_tree(const GroupSchema& schema, const ReportingTree& t) {
  Json nodes = Json::array();
  for (int i : t.breadth_first())
    nodes.push_back(Json{{"node", i}, {"parent", t.node(i).parent}, {"report", schema.describe(t.node(i).report)}});
  return nodes.dump();
}

int cmd_enumerate(const Common& c, const EnumerateArgs& a) {
  const SchemaConfig config = load_config(c);
  TreeConstraints t = constraints_for(config, a.min_samples, a.max_trees);
  t.require_both_classes = !a.allow_single_class;
  std::optional<Dataset> data;
  if (!c.data.empty()) data = load_dataset(c.data, config);
  if (a.count_only) {
    std::cout << (data ? count_sequential(config.schema, *data, t) : count_sequential(config.schema, t)) << '\n';
    return 0;
  }
  const auto trees = data ? enumerate_sequential(config.schema, *data, t) : enumerate_sequential(config.schema, t);
  for (const auto& tree : trees) std::cout << describe_tree(config.schema, tree) << '\n';
  spdlog::info("{} trees", trees.size());
  return 0;
}

double parse_cost(const std::string& s) {
  if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(Errc::kInvalidConfig, "bad cost level '" + s + "'");
}

int cmd_simulate(const Common& c, const SimulateArgs& a) {
  if (a.model.empty()) throw Error(Errc::kInvalidConfig, "--model is required");
  const SchemaConfig config = load_config(c);
  std::vector<double> grid;
  for (const auto& s : a.costs) grid.push_back(parse_cost(s));
  const RiskSource source = parse_risk_source(a.risk);
  const ParticipatorySystem s = load_system(a.model);
  if (s.schema.fingerprint() != config.schema.fingerprint())
    throw Error(Errc::kInvalidArtifact, "artifact was built for a different group schema");
  const Dataset data = load_data(c, config);
  PopulationOptions po;
  po.jitter = a.jitter;
  po.benefit_scale = a.benefit;
  po.seed = c.seed;
  const auto agents = make_population(data, po);
  const NodeRisk risks(s, source, &data);
  const auto profile = participation_profile(s, data, agents, grid, risks);
  if (a.out.empty()) {
    write_profile_csv(std::cout, profile);
  } else {
    std::ostringstream buf;
    write_profile_csv(buf, profile);
    write_text(a.out, buf.str());
  }
  return 0;
}

int cmd_serve(const ServeArgs& a) {
  if (a.model.empty()) throw Error(Errc::kInvalidConfig, "--model is required");
  if (a.port < 0 || a.port > 65535) throw Error(Errc::kInvalidConfig, "--port out of range");
  ServiceOptions o;
  o.idle_expiry = std::chrono::minutes(a.idle_minutes);
  return run_service(load_system(a.model), a.host, a.port, o);
}

void write_fixture(const fs::path& dir, const Dataset& d, const SchemaConfig& config) {
  fs::create_directories(dir);
  std::ostringstream csv;
  write_dataset_csv(csv, d, config);
  write_text(dir / "data.csv", csv.str());
  write_text(dir / "schema.json", schema_config_to_json(config));
}

int cmd_synth(const Common& c, const SynthArgs& a) {
  const fs::path dir(a.out);
  if (a.task == "figure1") {
    const FigureOne f = figure_one();
    write_fixture(dir, f.data, f.config);
    Json models{{"models", Json::array({model_to_json(f.h), model_to_json(f.h0)})}};
    write_text(dir / "models.json", models.dump(2) + "\n");
  } else if (a.task == "random") {
    TaskOptions o;
    o.k = a.k;
    o.n = a.n;
    o.d = a.d;
    o.seed = c.seed;
    const Dataset d = random_task(o);
    write_fixture(dir, d, config_for(d));
  } else if (a.task == "worsen") {
    const Dataset d = worsenalization_task(c.seed, a.scale);
    write_fixture(dir, d, config_for(d));
  } else {
    throw Error(Errc::kInvalidConfig, "unknown task '" + a.task + "' (figure1, random, worsen)");
  }
  std::cout << (dir / "data.csv").string() << '\n';
  return 0;
}

void add_common(CLI::App* cmd, Common& c, bool splits) {
  cmd->add_option("--data", c.data, "CSV data file");
  cmd->add_option("--schema", c.schema, "Schema config (JSON)");
  cmd->add_option("--seed", c.seed, "Root seed");
  if (!splits) return;
  cmd->add_option("--metric", c.metric, "error or auc")->check(CLI::IsMember({"error", "auc"}));
  cmd->add_option("--alpha", c.alpha, "Significance level for pruning and violations");
  cmd->add_option("--test-frac", c.test_frac, "Held-out test fraction");
  cmd->add_option("--prune-frac", c.prune_frac, "Prune fraction");
  cmd->add_flag("--shared-assign-prune", c.shared_assign_prune, "Assign and prune on the same rows");
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("partsys");
  spdlog::set_default_logger(logger);

  CLI::App app{"Learn, evaluate and serve participatory prediction systems"};
  app.require_subcommand(1);
  // Let -v/-q appear after the subcommand too.
  app.fallthrough();
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Only log errors");

  Common common;
  TrainArgs train;
  EvaluateArgs evaluate_args;
  EnumerateArgs enumerate_args;
  SimulateArgs simulate_args;
  ServeArgs serve;
  SynthArgs synth;

  auto* t = app.add_subcommand("train", "Build a pool, learn systems and write artifacts");
  add_common(t, common, true);
  t->add_option("--kind", train.kinds, "minimal, flat, sequential, greedy (repeatable)");
  t->add_option("--model-class", train.classes, "logistic, forest, fixed_rule (repeatable)");
  t->add_option("--fixed-models", train.fixed_models, "JSON file of fixed models to add to the pool");
  t->add_option("--out", train.out, "Output directory");
  t->add_option("--test", train.test, "auto, mcnemar, delong, bootstrap");
  t->add_option("--resamples", train.resamples, "Bootstrap resamples");
  t->add_option("--max-trees", train.max_trees, "Cap on enumerated sequential trees");
  t->add_option("--min-samples", train.min_samples, "Minimum rows per tree node (default d+1)");
  t->add_flag("--no-partial-subgroups", train.no_partial_subgroups, "Only train subgroup models on full groups");

  auto* e = app.add_subcommand("evaluate", "Score artifacts on a dataset");
  add_common(e, common, true);
  e->add_option("--model", evaluate_args.models, "Artifact file (repeatable)");
  e->add_option("--out", evaluate_args.out, "Output directory");
  e->add_flag("--split", evaluate_args.split, "Evaluate on the test split instead of all rows");
  e->add_option("--resamples", evaluate_args.resamples, "Bootstrap resamples for violations");

  auto* n = app.add_subcommand("enumerate", "Count or list sequential reporting trees");
  add_common(n, common, false);
  n->add_option("--max-trees", enumerate_args.max_trees, "Cap on trees listed");
  n->add_option("--min-samples", enumerate_args.min_samples, "Minimum rows per node");
  n->add_flag("--count-only", enumerate_args.count_only, "Print the count only");
  n->add_flag("--allow-single-class", enumerate_args.allow_single_class, "Keep nodes with one label class");

  auto* s = app.add_subcommand("simulate", "Participation profile over disclosure costs");
  add_common(s, common, false);
  s->add_option("--model", simulate_args.model, "Artifact file");
  s->add_option("--cost", simulate_args.costs, "Cost multipliers, 'inf' allowed (repeatable)");
  s->add_option("--jitter", simulate_args.jitter, "Relative spread of per-agent costs");
  s->add_option("--benefit", simulate_args.benefit, "Benefit scale");
  s->add_option("--risk", simulate_args.risk, "displayed or oracle");
  s->add_option("--out", simulate_args.out, "CSV path (default stdout)");

  auto* v = app.add_subcommand("serve", "Serve interactive reporting sessions over HTTP");
  v->add_option("--model", serve.model, "Artifact file");
  v->add_option("--host", serve.host, "Bind address");
  v->add_option("--port", serve.port, "Port");
  v->add_option("--idle-minutes", serve.idle_minutes, "Session idle expiry");

  auto* y = app.add_subcommand("synth", "Write a synthetic dataset and schema");
  y->add_option("--task", synth.task, "figure1, random, worsen");
  y->add_option("--out", synth.out, "Output directory");
  y->add_option("--seed", common.seed, "Seed");
  y->add_option("--k", synth.k, "Group attributes (random)");
  y->add_option("--n", synth.n, "Rows (random)");
  y->add_option("--d", synth.d, "Features (random)");
  y->add_option("--scale", synth.scale, "Size multiplier (worsen)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : kExitConfig;
  }
  spdlog::set_level(quiet ? spdlog::level::err : verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*t) return cmd_train(common, train);
    if (*e) return cmd_evaluate(common, evaluate_args);
    if (*n) return cmd_enumerate(common, enumerate_args);
    if (*s) return cmd_simulate(common, simulate_args);
    if (*v) return cmd_serve(serve);
    if (*y) return cmd_synth(common, synth);
  } catch (const Error& err) {
    spdlog::error("{}", err.what());
    return exit_code(err.code());
  } catch (const fs::filesystem_error& err) {
    spdlog::error("{}", err.what());
    return kExitConfig;
  } catch (const std::exception& err) {
    spdlog::error("unexpected failure: {}", err.what());
    return 1;
  }
  return 0;
}
