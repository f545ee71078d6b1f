#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ipn/networks.hpp"
#include "ipn/png_io.hpp"
#include "ipn/session.hpp"

namespace httplib {
class Server;
}

namespace ipn::service {

/// Failure with the HTTP status it maps to.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

enum class SessionState { kIdle, kRunning, kError };
const char* state_name(SessionState s);

struct ServiceConfig {
  std::filesystem::path data_dir = "data";
  /// Rounds run on a worker thread; clients poll the status endpoint.
  bool async_rounds = false;
  SessionConfig session;
};

/// Transport-independent session registry backed by snapshot directories
/// under <data_dir>/sessions/<id>/.
class SessionService {
 public:
  SessionService(nets::IpnModel model, std::string checkpoint_id, ServiceConfig config);
  ~SessionService();
  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  std::string create_session(const std::vector<png::Bytes>& frame_pngs, int num_objects);
  /// Directory of PNG frames, or a directory holding such a frames/ folder.
  std::string create_session_from_dataset(const std::filesystem::path& path, int num_objects);

  nlohmann::json status(const std::string& id) const;
  /// Runs a round from ScribbleSet JSON; in async mode returns immediately.
  nlohmann::json submit_scribbles(const std::string& id, const std::string& scribble_json);

  png::Bytes mask_png(const std::string& id, int round, int frame) const;
  /// 16-bit probability of one object.
  png::Bytes prob_png(const std::string& id, int round, int frame, int object_id) const;
  png::Bytes frame_png(const std::string& id, int frame) const;

  std::vector<std::string> session_ids() const;
  /// Blocks until no round is running for the session.
  void wait_idle(const std::string& id) const;
  const ServiceConfig& config() const { return config_; }

 private:
  struct Entry;
  std::shared_ptr<Entry> find(const std::string& id) const;
  std::string register_session(std::unique_ptr<Session> session);
  void execute_round(const std::shared_ptr<Entry>& entry, const scribble::ScribbleSet& set);
  void load_existing();

  nets::IpnModel model_;
  std::string checkpoint_id_;
  ServiceConfig config_;
  mutable std::mutex registry_mu_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::mutex workers_mu_;
  std::vector<std::thread> workers_;
};

/// POST /sessions, GET /sessions/{id}, POST /sessions/{id}/scribbles,
/// GET /sessions/{id}/rounds/{r}/frames/{t}/mask.png[?object=k],
/// GET /sessions/{id}/frames/{t}.png, GET /healthz.
void install_routes(httplib::Server& server, SessionService& service);

}  // namespace ipn::service
