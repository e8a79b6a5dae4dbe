#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <shared_mutex>
#include <string>
#include <vector>

#include "psys/artifact.hpp"
#include "psys/assembly.hpp"

namespace httplib {
class Server;
}

namespace psys {

struct ServiceOptions {
  std::chrono::seconds idle_expiry{15 * 60};
  // Injectable for tests.
  std::function<std::chrono::steady_clock::time_point()> clock = [] { return std::chrono::steady_clock::now(); };
};

struct ServiceResponse {
  int status = 200;
  Json body;
};

// Interactive reporting sessions over one immutable system. Each session
// walks the surviving tree from the root; opting out (finalizing) is always
// allowed.
class SessionService {
 public:
  explicit SessionService(ParticipatorySystem system, ServiceOptions options = {});

  ServiceResponse create_session(const Json& body);
  ServiceResponse options(const std::string& id);
  ServiceResponse report(const std::string& id, const Json& body);
  ServiceResponse finalize(const std::string& id);
  ServiceResponse system_document() const;
  ServiceResponse health() const;

  // Drops sessions idle past the expiry; returns how many were removed.
  std::size_t expire_idle();
  std::size_t session_count() const;

  const ParticipatorySystem& system() const { return system_; }

  // Registers the HTTP routes.
  void mount(httplib::Server& server);

 private:
  struct HistoryEntry {
    std::vector<std::pair<std::size_t, int>> additions;
    int node = 0;
    std::string timestamp;
  };
  struct Session {
    std::mutex mutex;
    std::string id;
    std::vector<double> features;
    int node = 0;
    bool finalized = false;
    std::vector<HistoryEntry> history;
    std::chrono::steady_clock::time_point last_used;
  };

  std::shared_ptr<Session> find(const std::string& id);
  Json option_list(const Session& s) const;
  Json preview(const Session& s) const;
  std::string new_id();

  ParticipatorySystem system_;
  ServiceOptions options_;
  std::size_t feature_width_ = 0;
  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mutex rng_mutex_;
  std::mt19937_64 rng_;
};

// Blocks serving `system` on host:port. Returns 0 after a clean stop, 5 when
// the address cannot be bound.
int run_service(ParticipatorySystem system, const std::string& host, int port, ServiceOptions options = {});

}  // namespace psys
