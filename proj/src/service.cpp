#include "psys/service.hpp"

#include <cstdio>
#include <ctime>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "psys/error.hpp"

namespace psys {

namespace {

ServiceResponse error_response(int status, const std::string& message) {
  return {status, Json{{"error", message}}};
}

bool is_index(const Json& v, std::size_t bound) {
  return v.is_number_integer() && v.get<long long>() >= 0 && static_cast<std::size_t>(v.get<long long>()) < bound;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

SessionService::SessionService(ParticipatorySystem system, ServiceOptions options)
    : system_(std::move(system)), options_(std::move(options)), rng_(std::random_device{}()) {
  feature_width_ = system_.root_model().feature_width;
}

std::string SessionService::new_id() {
  std::lock_guard lock(rng_mutex_);
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(rng_()),
                static_cast<unsigned long long>(rng_()));
  return buf;
}

std::shared_ptr<SessionService::Session> SessionService::find(const std::string& id) {
  expire_idle();
  std::shared_lock lock(sessions_mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::size_t SessionService::expire_idle() {
  const auto now = options_.clock();
  std::unique_lock lock(sessions_mutex_);
  std::size_t removed = 0;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    std::unique_lock session_lock(it->second->mutex, std::try_to_lock);
    if (session_lock.owns_lock() && now - it->second->last_used > options_.idle_expiry) {
      session_lock.unlock();
      it = sessions_.erase(it);
      ++removed;
    } else {
      ++it;
    }
  }
  return removed;
}

std::size_t SessionService::session_count() const {
  std::shared_lock lock(sessions_mutex_);
  return sessions_.size();
}

Json SessionService::preview(const Session& s) const {
  const double score = system_.predict_at(s.node, s.features);
  const auto& node = system_.tree.node(s.node);
  return Json{{"score", score},
              {"label", label_from_score(score)},
              {"node", s.node},
              {"report", system_.schema.describe(node.report)},
              {"model_id", *node.model_id}};
}

Json SessionService::option_list(const Session& s) const {
  Json out = Json::array();
  if (s.finalized) return out;
  const auto& schema = system_.schema;
  const auto& current = system_.tree.node(s.node).report;
  for (int c : system_.tree.surviving_children(s.node)) {
    const auto& child = system_.tree.node(c);
    Json additions = Json::array();
    for (auto a : child.report.reported_attributes()) {
      if (current.reported(a)) continue;
      additions.push_back(Json{{"attribute", schema.attribute(a).name},
                               {"level", schema.attribute(a).levels[static_cast<std::size_t>(child.report[a])]}});
    }
    Json option{{"node", c},
                {"report", schema.describe(child.report)},
                {"additions", additions},
                {"gain", gain_to_json(*child.certificate)}};
    if (additions.size() == 1) {
      option["attribute"] = additions[0]["attribute"];
      option["level"] = additions[0]["level"];
    }
    out.push_back(std::move(option));
  }
  return out;
}

ServiceResponse SessionService::create_session(const Json& body) {
  if (!body.is_object() || !body.contains("features") || !body["features"].is_array())
    return error_response(400, "body must be {\"features\": [numbers]}");
  std::vector<double> features;
  for (const auto& v : body["features"]) {
    if (!v.is_number()) return error_response(400, "features must be numbers");
    features.push_back(v.get<double>());
  }
  if (features.size() != feature_width_)
    return error_response(400, "expected " + std::to_string(feature_width_) + " features, got " +
                                   std::to_string(features.size()));
  expire_idle();
  auto s = std::make_shared<Session>();
  s->id = new_id();
  s->features = std::move(features);
  s->node = ReportingTree::kRoot;
  s->last_used = options_.clock();
  Json out{{"session_id", s->id}, {"prediction", preview(*s)}, {"options", option_list(*s)}, {"can_finalize", true}};
  {
    std::unique_lock lock(sessions_mutex_);
    sessions_.emplace(s->id, s);
  }
  return {201, std::move(out)};
}

ServiceResponse SessionService::options(const std::string& id) {
  auto s = find(id);
  if (!s) return error_response(404, "unknown session");
  std::lock_guard lock(s->mutex);
  s->last_used = options_.clock();
  return {200, Json{{"session_id", s->id},
                    {"finalized", s->finalized},
                    {"prediction", preview(*s)},
                    {"options", option_list(*s)},
                    {"can_finalize", !s->finalized}}};
}

ServiceResponse SessionService::report(const std::string& id, const Json& body) {
  auto s = find(id);
  if (!s) return error_response(404, "unknown session");
  std::lock_guard lock(s->mutex);
  s->last_used = options_.clock();
  if (s->finalized) return error_response(409, "session already finalized");

  const auto& schema = system_.schema;
  // Accept {attribute, level} or {report: {attribute: level, ...}}.
  std::vector<std::pair<std::string, Json>> pairs;
  if (body.is_object() && body.contains("report") && body["report"].is_object()) {
    for (const auto& [k, v] : body["report"].items()) pairs.emplace_back(k, v);
  } else if (body.is_object() && body.contains("attribute") && body.contains("level")) {
    const auto& a = body["attribute"];
    std::string name;
    if (a.is_string()) {
      name = a.get<std::string>();
    } else if (is_index(a, schema.k())) {
      name = schema.attribute(a.get<std::size_t>()).name;
    } else {
      return error_response(422, "unknown attribute");
    }
    pairs.emplace_back(name, body["level"]);
  } else {
    return error_response(400, "body must be {\"attribute\", \"level\"} or {\"report\": {...}}");
  }
  if (pairs.empty()) return error_response(422, "nothing reported");

  ReportingGroup target = system_.tree.node(s->node).report;
  std::vector<std::pair<std::size_t, int>> additions;
  for (const auto& [name, level] : pairs) {
    const auto a = schema.find_attribute(name);
    if (!a) return error_response(422, "unknown attribute '" + name + "'");
    std::optional<int> l;
    if (level.is_string()) {
      l = schema.find_level(*a, level.get<std::string>());
    } else if (is_index(level, schema.num_levels(*a))) {
      l = static_cast<int>(level.get<std::size_t>());
    }
    if (!l) return error_response(422, "unknown level for '" + name + "'");
    if (target.reported(*a)) return error_response(422, "attribute '" + name + "' already reported");
    target = target.with(*a, *l);
    additions.emplace_back(*a, *l);
  }
  int next = -1;
  for (int c : system_.tree.surviving_children(s->node))
    if (system_.tree.node(c).report == target) next = c;
  if (next < 0) return error_response(422, "option " + schema.describe(target) + " is not offered");

  s->node = next;
  s->history.push_back({std::move(additions), next, utc_now()});
  return {200, Json{{"session_id", s->id},
                    {"prediction", preview(*s)},
                    {"options", option_list(*s)},
                    {"can_finalize", true}}};
}

ServiceResponse SessionService::finalize(const std::string& id) {
  auto s = find(id);
  if (!s) return error_response(404, "unknown session");
  std::lock_guard lock(s->mutex);
  s->last_used = options_.clock();
  if (s->finalized) return error_response(409, "session already finalized");
  s->finalized = true;

  const auto& schema = system_.schema;
  Json chain = Json::array();
  for (int p : system_.tree.path_to(s->node)) {
    const auto& n = system_.tree.node(p);
    Json step{{"node", p}, {"report", schema.describe(n.report)}, {"model_id", *n.model_id}};
    step["gain"] = n.certificate ? gain_to_json(*n.certificate) : Json(nullptr);
    chain.push_back(std::move(step));
  }
  Json history = Json::array();
  for (const auto& h : s->history) {
    Json adds = Json::array();
    for (const auto& [a, l] : h.additions)
      adds.push_back(Json{{"attribute", schema.attribute(a).name},
                          {"level", schema.attribute(a).levels[static_cast<std::size_t>(l)]}});
    history.push_back(Json{{"additions", adds}, {"node", h.node}, {"timestamp", h.timestamp}});
  }
  Json out{{"session_id", s->id},
           {"prediction", preview(*s)},
           {"provenance",
            {{"node", s->node},
             {"report", schema.describe(system_.tree.node(s->node).report)},
             {"model_id", *system_.tree.node(s->node).model_id},
             {"certificates", chain},
             {"history", history},
             {"system", system_.name}}}};
  // Features are not kept once the prediction is delivered.
  s->features.assign(s->features.size(), 0.0);
  return {200, std::move(out)};
}

ServiceResponse SessionService::system_document() const { return {200, public_system_json(system_)}; }

ServiceResponse SessionService::health() const {
  return {200, Json{{"status", "ok"}, {"system", system_.name}, {"sessions", session_count()}}};
}

void SessionService::mount(httplib::Server& server) {
  auto reply = [](httplib::Response& res, const ServiceResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  auto parse = [](const httplib::Request& req, Json& out) {
    if (req.body.empty()) {
      out = Json::object();
      return true;
    }
    try {
      out = Json::parse(req.body);
      return true;
    } catch (const nlohmann::json::exception&) {
      return false;
    }
  };
  server.Post("/sessions", [this, reply, parse](const httplib::Request& req, httplib::Response& res) {
    Json body;
    if (!parse(req, body)) return reply(res, error_response(400, "malformed JSON"));
    reply(res, create_session(body));
  });
  server.Get(R"(/sessions/([0-9a-f]+)/options)", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, options(req.matches[1]));
  });
  server.Post(R"(/sessions/([0-9a-f]+)/report)",
              [this, reply, parse](const httplib::Request& req, httplib::Response& res) {
                Json body;
                if (!parse(req, body)) return reply(res, error_response(400, "malformed JSON"));
                reply(res, report(req.matches[1], body));
              });
  server.Post(R"(/sessions/([0-9a-f]+)/finalize)", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, finalize(req.matches[1]));
  });
  server.Get("/system", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, system_document());
  });
  server.Get("/health", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, health()); });
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) res.set_content(Json{{"error", "not found"}}.dump(), "application/json");
  });
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    spdlog::error("request failed: {}", what);
    res.status = 500;
    res.set_content(Json{{"error", what}}.dump(), "application/json");
  });
  // Browser clients are served from another origin.
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
}

int run_service(ParticipatorySystem system, const std::string& host, int port, ServiceOptions options) {
  SessionService service(std::move(system), std::move(options));
  httplib::Server server;
  service.mount(server);
  // No SO_REUSEPORT: a second instance on a busy port must fail, not share it.
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof yes);
  });
  if (!server.bind_to_port(host, port)) {
    spdlog::error("cannot bind {}:{}", host, port);
    return 5;
  }
  spdlog::info("serving '{}' on {}:{}", service.system().name, host, port);
  return server.listen_after_bind() ? 0 : 5;
}

}  // namespace psys
