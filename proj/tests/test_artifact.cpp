#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "psys/artifact.hpp"
#include "psys/error.hpp"
#include "support.hpp"

using namespace psys;

namespace {

Errc parse_error(const Json& j) {
  try {
    system_from_json(j);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("artifact accepted");
  return Errc::kInvalidArgument;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

int first_kept(const ParticipatorySystem& s) {
  for (int i = 1; i < static_cast<int>(s.tree.size()); ++i)
    if (!s.tree.node(i).pruned) return i;
  return -1;
}

}  // namespace

TEST_SUITE("artifact") {
  TEST_CASE("systems round-trip byte for byte") {
    const auto run = testing::run_task(testing::suite_task(2));
    for (const auto& s : run.systems) {
      const std::string text = serialize_system(s);
      const auto back = parse_system(text);
      CHECK(serialize_system(back) == text);
      CHECK(back.tree == s.tree);
      CHECK(back.provenance == s.provenance);
    }
  }

  TEST_CASE("loaded systems predict the same bits") {
    TaskOptions t = testing::suite_task(4);
    const Dataset d = random_task(t);
    const auto bundle = split_dataset(d, SplitOptions{});
    PoolOptions po;
    po.classes = {ModelClass::kLogistic, ModelClass::kForest};
    po.hyperparameters.forest.trees = 8;
    const auto pool = build_pool(bundle, po);
    const auto systems = learn_systems(bundle, pool, LearnOptions{});
    std::mt19937_64 rng(99);
    std::normal_distribution<double> normal;
    const auto& schema = d.schema();
    for (const auto& s : systems) {
      const auto back = parse_system(serialize_system(s));
      for (int i = 0; i < 1000; ++i) {
        std::vector<double> x(d.d());
        for (auto& v : x) v = 3.0 * normal(rng);
        std::vector<int> e(schema.k());
        for (std::size_t a = 0; a < schema.k(); ++a)
          e[a] = static_cast<int>(rng() % (schema.num_levels(a) + 1)) - 1;
        const ReportingGroup r(e);
        CHECK(same_bits(s.predict(x, r), back.predict(x, r)));
      }
    }
  }

  TEST_CASE("files round-trip") {
    const auto run = testing::figure_one_run({SystemKind::kMinimal});
    const auto path = std::filesystem::temp_directory_path() / "psys_artifact_test.json";
    save_system(run.systems[0], path.string());
    const auto back = load_system(path.string());
    CHECK(serialize_system(back) == serialize_system(run.systems[0]));
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_system(path.string()), Error);
  }

  TEST_CASE("tampered artifacts are rejected") {
    const auto run = testing::figure_one_run({SystemKind::kMinimal});
    const auto& s = run.systems[0];
    const Json good = system_to_json(s);
    const int kept = first_kept(s);
    REQUIRE(kept > 0);

    Json j = good;
    j["format_version"] = 99;
    CHECK(parse_error(j) == Errc::kInvalidArtifact);

    j = good;
    j["provenance"]["schema_fingerprint"] = hex64(s.provenance.schema_fingerprint ^ 1);
    CHECK(parse_error(j) == Errc::kInvalidArtifact);

    j = good;
    j["nodes"][kept]["certificate"]["gain"] = 0.5;
    CHECK(parse_error(j) == Errc::kInvalidArtifact);

    j = good;
    j["nodes"][kept]["certificate"]["p_value"] = 0.5;
    CHECK(parse_error(j) == Errc::kInvalidArtifact);

    j = good;
    j["nodes"][kept]["model_id"] = "missing";
    CHECK(parse_error(j) == Errc::kInvalidArtifact);

    j = good;
    j["nodes"][0]["pruned"] = true;
    CHECK(parse_error(j) == Errc::kInvalidArtifact);

    j = good;
    j["models"] = Json::array();
    CHECK(parse_error(j) == Errc::kInvalidArtifact);

    CHECK_THROWS_AS(parse_system("{not json"), Error);
    CHECK_THROWS_AS(parse_system("[]"), Error);
  }

  TEST_CASE("models round-trip for every class") {
    const auto f = figure_one();
    const auto back = model_from_json(model_to_json(f.h));
    CHECK(model_to_json(back) == model_to_json(f.h));
    const auto list = models_from_json(Json{{"models", {model_to_json(f.h), model_to_json(f.h0)}}});
    CHECK(list.size() == 2);

    const Dataset d = random_task({});
    ModelSpec spec;
    spec.id = "forest";
    spec.training_scope = ReportingGroup::none(d.schema().k());
    spec.model_class = ModelClass::kForest;
    spec.hyperparameters.forest.trees = 5;
    const auto forest = train_model(spec, d, 4);
    const auto forest_back = model_from_json(model_to_json(forest));
    CHECK(predict_scores(forest_back, d) == predict_scores(forest, d));
    CHECK(forest_back.seed == forest.seed);
    CHECK(forest_back.data_fingerprint == forest.data_fingerprint);
  }

  TEST_CASE("the public document carries gains but no parameters") {
    const auto run = testing::figure_one_run({SystemKind::kMinimal});
    const Json doc = public_system_json(run.systems[0]);
    CHECK_FALSE(doc.contains("models"));
    CHECK(doc.dump().find("scores") == std::string::npos);
    CHECK(doc["feature_width"] == 1);
    std::size_t kept = 0;
    for (const auto& n : doc["nodes"]) {
      if (n["index"] == 0) continue;
      CHECK(n["gain"].contains("p_value"));
      CHECK(n["gain"].contains("n_validation"));
      kept += static_cast<std::size_t>(!n["pruned"].get<bool>());
    }
    CHECK(kept == 2);
  }

  TEST_CASE("gain display rounds to a tenth of a point") {
    CHECK(format_gain(0.215) == "+21.5%");
    CHECK(format_gain(0.21549) == "+21.5%");
    CHECK(format_gain(-0.0304) == "-3.0%");
    CHECK(format_gain(0.0) == "+0.0%");
    CHECK(format_gain(-0.0001) == "+0.0%");
    GainCertificate c;
    c.gain = 0.5;
    c.parent_risk = 0.5;
    c.p_value = 0.01;
    c.n_validation = 40;
    const Json g = gain_to_json(c);
    CHECK(g["display"] == "+50.0%");
    CHECK(g["n_validation"] == 40);
  }

  TEST_CASE("hex fingerprints") {
    for (std::uint64_t v : {0ULL, 1ULL, 0xdeadbeefULL, ~0ULL}) CHECK(parse_hex64(hex64(v)) == v);
    CHECK(hex64(255).size() == 16);
    CHECK_THROWS_AS(parse_hex64("xyz"), Error);
  }
}
