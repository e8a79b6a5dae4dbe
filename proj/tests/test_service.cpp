#include <doctest.h>

#include <chrono>
#include <thread>

#include <httplib.h>

#include "psys/service.hpp"
#include "support.hpp"

using namespace psys;

namespace {

struct FakeClock {
  std::chrono::steady_clock::time_point now{};
};

ParticipatorySystem figure_one_minimal() {
  return testing::figure_one_run({SystemKind::kMinimal}).systems[0];
}

std::string open_session(SessionService& svc, double x = 0.3) {
  const auto r = svc.create_session(Json{{"features", {x}}});
  REQUIRE(r.status == 201);
  return r.body["session_id"].get<std::string>();
}

}  // namespace

TEST_SUITE("service") {
  TEST_CASE("root offers the two kept groups") {
    SessionService svc(figure_one_minimal());
    const auto r = svc.create_session(Json{{"features", {0.3}}});
    REQUIRE(r.status == 201);
    CHECK(r.body["session_id"].get<std::string>().size() == 32);
    CHECK(r.body["can_finalize"] == true);
    CHECK(r.body["prediction"]["model_id"] == "h0");
    const auto& opts = r.body["options"];
    REQUIRE(opts.size() == 2);
    for (const auto& o : opts) {
      CHECK(o["additions"].size() == 2);
      CHECK(o["gain"]["gain"] == 1.0);
    }
    CHECK(svc.session_count() == 1);
  }

  TEST_CASE("opting out at the root serves the generic model") {
    SessionService svc(figure_one_minimal());
    const auto id = open_session(svc);
    const auto r = svc.finalize(id);
    REQUIRE(r.status == 200);
    CHECK(r.body["prediction"]["label"] == 0);
    CHECK(r.body["provenance"]["model_id"] == "h0");
    CHECK(r.body["provenance"]["history"].empty());
    CHECK(r.body["provenance"]["certificates"].size() == 1);
    CHECK(r.body["provenance"]["certificates"][0]["gain"].is_null());
    CHECK(svc.finalize(id).status == 409);
    const auto after = svc.options(id);
    CHECK(after.body["finalized"] == true);
    CHECK(after.body["options"].empty());
    CHECK(after.body["can_finalize"] == false);
    CHECK(svc.report(id, Json{{"attribute", "sex"}, {"level", "female"}}).status == 409);
  }

  TEST_CASE("reporting follows the tree and matches library dispatch") {
    const auto sys = figure_one_minimal();
    SessionService svc(sys);
    const auto id = open_session(svc, 0.7);
    const auto r = svc.report(id, Json{{"report", {{"sex", "female"}, {"age", "young"}}}});
    REQUIRE(r.status == 200);
    CHECK(r.body["prediction"]["model_id"] == "h");
    CHECK(r.body["options"].empty());
    const int node = sys.dispatch(ReportingGroup({0, 1}));
    const std::vector<double> x{0.7};
    CHECK(r.body["prediction"]["score"] == sys.predict_at(node, x));
    CHECK(r.body["prediction"]["node"] == node);

    const auto fin = svc.finalize(id);
    REQUIRE(fin.status == 200);
    const auto& prov = fin.body["provenance"];
    CHECK(prov["report"] == "[female, young]");
    CHECK(prov["certificates"].size() == 2);
    CHECK(prov["certificates"][1]["gain"]["p_value"].get<double>() < sys.alpha);
    REQUIRE(prov["history"].size() == 1);
    CHECK(prov["history"][0]["additions"].size() == 2);
    CHECK(prov["history"][0]["timestamp"].get<std::string>().back() == 'Z');
    CHECK(prov["system"] == sys.name);
  }

  TEST_CASE("invalid reports are refused") {
    SessionService svc(figure_one_minimal());
    const auto id = open_session(svc);
    // (female, old) was pruned.
    CHECK(svc.report(id, Json{{"report", {{"sex", "female"}, {"age", "old"}}}}).status == 422);
    // The minimal tree has no single-attribute nodes.
    CHECK(svc.report(id, Json{{"attribute", "sex"}, {"level", "female"}}).status == 422);
    CHECK(svc.report(id, Json{{"attribute", "height"}, {"level", "tall"}}).status == 422);
    CHECK(svc.report(id, Json{{"attribute", 0}, {"level", "neither"}}).status == 422);
    CHECK(svc.report(id, Json{{"attribute", 7}, {"level", 0}}).status == 422);
    CHECK(svc.report(id, Json{{"attribute", -1}, {"level", 0}}).status == 422);
    CHECK(svc.report(id, Json{{"level", 0}}).status == 400);
    CHECK(svc.report(id, Json{{"report", Json::object()}}).status == 422);
    // Indices are accepted for both attribute and level.
    REQUIRE(svc.report(id, Json{{"report", {{"sex", 1}, {"age", 0}}}}).status == 200);
    CHECK(svc.report(id, Json{{"attribute", "sex"}, {"level", "male"}}).status == 422);
  }

  TEST_CASE("malformed sessions") {
    SessionService svc(figure_one_minimal());
    CHECK(svc.create_session(Json{{"features", {0.1, 0.2}}}).status == 400);
    CHECK(svc.create_session(Json{{"features", {"a"}}}).status == 400);
    CHECK(svc.create_session(Json{{"x", 1}}).status == 400);
    CHECK(svc.create_session(Json::array()).status == 400);
    CHECK(svc.options("ffff").status == 404);
    CHECK(svc.report("ffff", Json::object()).status == 404);
    CHECK(svc.finalize("ffff").status == 404);
    CHECK(svc.session_count() == 0);
  }

  TEST_CASE("idle sessions expire") {
    auto clock = std::make_shared<FakeClock>();
    ServiceOptions o;
    o.idle_expiry = std::chrono::minutes(15);
    o.clock = [clock] { return clock->now; };
    SessionService svc(figure_one_minimal(), o);
    const auto a = open_session(svc);
    clock->now += std::chrono::minutes(10);
    const auto b = open_session(svc);
    CHECK(svc.options(a).status == 200);  // touching resets the idle timer
    clock->now += std::chrono::minutes(14);
    CHECK(svc.expire_idle() == 0);
    clock->now += std::chrono::minutes(2);
    CHECK(svc.expire_idle() == 2);
    CHECK(svc.options(b).status == 404);
  }

  TEST_CASE("a root-only system offers nothing") {
    const auto f = figure_one();
    const SplitBundle bundle{f.data, f.data, f.data, 0, true};
    const ModelPool pool(f.data.schema(), {f.h, f.h0});
    LearnOptions lo;
    lo.kinds = {SystemKind::kMinimal};
    lo.alpha = 1e-9;
    SessionService svc(learn_systems(bundle, pool, lo).front());
    const auto r = svc.create_session(Json{{"features", {0.5}}});
    CHECK(r.body["options"].empty());
    CHECK(r.body["can_finalize"] == true);
  }

  TEST_CASE("public documents") {
    SessionService svc(figure_one_minimal());
    const auto sys = svc.system_document();
    CHECK(sys.status == 200);
    CHECK_FALSE(sys.body.contains("models"));
    const auto h = svc.health();
    CHECK(h.body["status"] == "ok");
    CHECK(h.body["sessions"] == 0);
  }

  TEST_CASE("http round trip") {
    SessionService svc(figure_one_minimal());
    httplib::Server server;
    svc.mount(server);
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    httplib::Client client("127.0.0.1", port);
    auto health = client.Get("/health");
    REQUIRE(health);
    CHECK(health->status == 200);
    CHECK(health->get_header_value("Access-Control-Allow-Origin") == "*");

    auto created = client.Post("/sessions", R"({"features":[0.2]})", "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    const auto id = Json::parse(created->body)["session_id"].get<std::string>();

    auto opts = client.Get(("/sessions/" + id + "/options").c_str());
    REQUIRE(opts);
    CHECK(Json::parse(opts->body)["options"].size() == 2);

    auto bad = client.Post(("/sessions/" + id + "/report").c_str(), "{not json", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);

    auto rep = client.Post(("/sessions/" + id + "/report").c_str(), R"({"report":{"sex":"male","age":"old"}})",
                           "application/json");
    REQUIRE(rep);
    CHECK(rep->status == 200);
    auto fin = client.Post(("/sessions/" + id + "/finalize").c_str(), "", "application/json");
    REQUIRE(fin);
    CHECK(fin->status == 200);
    CHECK(Json::parse(fin->body)["provenance"]["model_id"] == "h");

    auto missing = client.Get("/sessions/abc/options");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    auto nowhere = client.Get("/nowhere");
    REQUIRE(nowhere);
    CHECK(nowhere->status == 404);
    CHECK(Json::parse(nowhere->body).contains("error"));
    auto doc = client.Get("/system");
    REQUIRE(doc);
    CHECK(doc->status == 200);

    server.stop();
    t.join();
  }
}
