#include "ipn/service.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <ctime>
#include <random>

#include <httplib.h>

#include "ipn/data.hpp"
#include "ipn/errors.hpp"
#include "ipn/scribble.hpp"

namespace ipn::service {

namespace fs = std::filesystem;

const char* state_name(SessionState s) {
  switch (s) {
    case SessionState::kIdle:
      return "idle";
    case SessionState::kRunning:
      return "running_round";
    case SessionState::kError:
      return "error";
  }
  return "error";
}

struct SessionService::Entry {
  std::string id;
  fs::path dir;
  std::string created_at;
  mutable std::mutex mu;
  mutable std::condition_variable idle_cv;
  SessionState state = SessionState::kIdle;
  std::string error;
  // Metadata of completed rounds, readable while a round runs.
  int round = 0;
  int num_frames = 0;
  int num_objects = 0;
  std::vector<std::pair<int, int>> history;
  // Only touched by the thread that owns the running round.
  std::unique_ptr<Session> session;
};

namespace {

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string new_id() {
  static std::mutex mu;
  static std::mt19937_64 rng(std::random_device{}());
  std::lock_guard<std::mutex> lock(mu);
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(rng()));
  return buf;
}

std::string round_file(int r, int t, int object_id) {
  char buf[64];
  if (object_id > 0) {
    std::snprintf(buf, sizeof(buf), "masks/round_%03d/frame_%05d_obj_%02d.png", r, t, object_id);
  } else {
    std::snprintf(buf, sizeof(buf), "masks/round_%03d/frame_%05d.png", r, t);
  }
  return buf;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  const auto text = j.dump(2);
  png::write_file(path, std::span<const std::uint8_t>(
                            reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace

SessionService::SessionService(nets::IpnModel model, std::string checkpoint_id, ServiceConfig config)
    : model_(std::move(model)), checkpoint_id_(std::move(checkpoint_id)), config_(std::move(config)) {
  model_->eval();
  fs::create_directories(config_.data_dir / "sessions");
  load_existing();
}

SessionService::~SessionService() {
  std::lock_guard<std::mutex> lock(workers_mu_);
  for (auto& w : workers_) {
    if (w.joinable()) w.join();
  }
}

void SessionService::load_existing() {
  for (const auto& item : fs::directory_iterator(config_.data_dir / "sessions")) {
    if (!item.is_directory() || !fs::exists(item.path() / "session.json")) continue;
    auto entry = std::make_shared<Entry>();
    entry->id = item.path().filename().string();
    entry->dir = item.path();
    try {
      const auto record = nlohmann::json::parse(png::read_file(item.path() / "record.json"));
      entry->created_at = record.value("created_at", "");
    } catch (const std::exception&) {
      entry->created_at = "";
    }
    entry->session = std::make_unique<Session>(Session::load(item.path(), config_.session));
    entry->round = entry->session->round();
    entry->num_frames = entry->session->length();
    entry->num_objects = entry->session->num_objects();
    for (const auto& h : entry->session->history()) entry->history.emplace_back(h.round, h.frame);
    sessions_[entry->id] = entry;
  }
}

std::string SessionService::register_session(std::unique_ptr<Session> session) {
  auto entry = std::make_shared<Entry>();
  {
    std::lock_guard<std::mutex> lock(registry_mu_);
    do {
      entry->id = new_id();
    } while (sessions_.count(entry->id) || fs::exists(config_.data_dir / "sessions" / entry->id));
  }
  entry->dir = config_.data_dir / "sessions" / entry->id;
  entry->created_at = now_iso();
  entry->num_frames = session->length();
  entry->num_objects = session->num_objects();
  fs::create_directories(entry->dir);
  session->save_frames(entry->dir);
  write_json(entry->dir / "record.json",
             {{"session_id", entry->id}, {"created_at", entry->created_at}, {"checkpoint_id", checkpoint_id_}});
  entry->session = std::move(session);
  std::lock_guard<std::mutex> lock(registry_mu_);
  sessions_[entry->id] = entry;
  return entry->id;
}

std::string SessionService::create_session(const std::vector<png::Bytes>& frame_pngs, int num_objects) {
  if (frame_pngs.empty()) throw ServiceError(400, "no frames uploaded");
  if (num_objects < 1 || num_objects > 255) throw ServiceError(400, "num_objects must be in 1..255");
  std::vector<Frame> frames;
  for (std::size_t i = 0; i < frame_pngs.size(); ++i) {
    try {
      frames.push_back(png::decode_frame(frame_pngs[i], static_cast<int>(i)));
    } catch (const IoError& e) {
      throw ServiceError(400, "frame " + std::to_string(i) + " is not a readable PNG: " + e.what());
    } catch (const DimensionError& e) {
      throw ServiceError(422, "frame " + std::to_string(i) + ": " + e.what());
    }
  }
  for (const auto& f : frames) {
    if (f.height() != frames.front().height() || f.width() != frames.front().width()) {
      throw ServiceError(422, "frames have inconsistent sizes");
    }
  }
  return register_session(std::make_unique<Session>(std::move(frames), num_objects, config_.session));
}

std::string SessionService::create_session_from_dataset(const fs::path& path, int num_objects) {
  if (!fs::is_directory(path)) throw ServiceError(404, "dataset path not found: " + path.string());
  const fs::path dir = fs::is_directory(path / "frames") ? path / "frames" : path;
  std::vector<png::Bytes> pngs;
  std::vector<fs::path> files;
  for (const auto& item : fs::directory_iterator(dir)) {
    if (item.is_regular_file() && item.path().extension() == ".png") files.push_back(item.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) pngs.push_back(png::read_file(f));
  if (pngs.empty()) throw ServiceError(400, "dataset path holds no PNG frames");
  return create_session(pngs, num_objects);
}

std::shared_ptr<SessionService::Entry> SessionService::find(const std::string& id) const {
  std::lock_guard<std::mutex> lock(registry_mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ServiceError(404, "unknown session " + id);
  return it->second;
}

std::vector<std::string> SessionService::session_ids() const {
  std::lock_guard<std::mutex> lock(registry_mu_);
  std::vector<std::string> out;
  for (const auto& [id, e] : sessions_) out.push_back(id);
  return out;
}

nlohmann::json SessionService::status(const std::string& id) const {
  const auto e = find(id);
  std::lock_guard<std::mutex> lock(e->mu);
  nlohmann::json history = nlohmann::json::array();
  for (const auto& [r, t] : e->history) history.push_back({{"round", r}, {"frame", t}});
  nlohmann::json out{{"session_id", e->id},
                     {"state", state_name(e->state)},
                     {"round", e->round},
                     {"T", e->num_frames},
                     {"M", e->num_objects},
                     {"annotation_history", history},
                     {"created_at", e->created_at},
                     {"checkpoint_id", checkpoint_id_}};
  if (e->state == SessionState::kError) out["error"] = e->error;
  return out;
}

void SessionService::execute_round(const std::shared_ptr<Entry>& e, const scribble::ScribbleSet& set) {
  try {
    const auto& rec = e->session->run_round(model_, set);
    e->session->save_latest_round(e->dir);
    std::lock_guard<std::mutex> lock(e->mu);
    e->round = rec.round;
    e->history.emplace_back(rec.round, rec.frame);
    e->state = SessionState::kIdle;
    e->error.clear();
  } catch (const std::exception& ex) {
    std::lock_guard<std::mutex> lock(e->mu);
    e->state = SessionState::kError;
    e->error = ex.what();
  }
  e->idle_cv.notify_all();
}

nlohmann::json SessionService::submit_scribbles(const std::string& id, const std::string& scribble_json) {
  const auto e = find(id);
  scribble::ScribbleSet set;
  try {
    set = scribble::from_json(scribble_json);
  } catch (const ArgumentError& ex) {
    throw ServiceError(400, std::string("invalid scribble JSON: ") + ex.what());
  }
  {
    std::lock_guard<std::mutex> lock(e->mu);
    if (e->state == SessionState::kRunning) throw ServiceError(409, "a round is already running");
    if (set.frame_index < 0 || set.frame_index >= e->num_frames) {
      throw ServiceError(422, "frame index " + std::to_string(set.frame_index) + " out of range");
    }
    if (set.empty()) throw ServiceError(422, "no scribbles submitted");
    for (int m : set.object_ids()) {
      if (m < 1 || m > e->num_objects) {
        throw ServiceError(422, "object id " + std::to_string(m) + " outside 1.." + std::to_string(e->num_objects));
      }
    }
    e->state = SessionState::kRunning;
  }
  if (config_.async_rounds) {
    std::lock_guard<std::mutex> lock(workers_mu_);
    workers_.emplace_back([this, e, set] { execute_round(e, set); });
    return {{"round", e->round + 1}, {"state", state_name(SessionState::kRunning)}};
  }
  execute_round(e, set);
  std::lock_guard<std::mutex> lock(e->mu);
  if (e->state == SessionState::kError) throw ServiceError(500, "round failed: " + e->error);
  const auto& rec = e->session->history().back();
  return {{"round", rec.round},
          {"changed_frames", rec.changed_frames},
          {"per_frame_available", std::vector<bool>(static_cast<std::size_t>(e->num_frames), true)}};
}

void SessionService::wait_idle(const std::string& id) const {
  const auto e = find(id);
  std::unique_lock<std::mutex> lock(e->mu);
  e->idle_cv.wait(lock, [&] { return e->state != SessionState::kRunning; });
}

png::Bytes SessionService::mask_png(const std::string& id, int round, int frame) const {
  return prob_png(id, round, frame, 0);
}

png::Bytes SessionService::prob_png(const std::string& id, int round, int frame, int object_id) const {
  const auto e = find(id);
  {
    std::lock_guard<std::mutex> lock(e->mu);
    if (round < 0 || round > e->round) throw ServiceError(404, "round " + std::to_string(round) + " not available");
    if (frame < 0 || frame >= e->num_frames) throw ServiceError(404, "frame " + std::to_string(frame) + " out of range");
    if (object_id < 0 || object_id > e->num_objects) {
      throw ServiceError(404, "object " + std::to_string(object_id) + " out of range");
    }
  }
  return png::read_file(e->dir / round_file(round, frame, object_id));
}

png::Bytes SessionService::frame_png(const std::string& id, int frame) const {
  const auto e = find(id);
  if (frame < 0 || frame >= e->num_frames) throw ServiceError(404, "frame " + std::to_string(frame) + " out of range");
  char name[32];
  std::snprintf(name, sizeof(name), "%05d.png", frame);
  return png::read_file(e->dir / "frames" / name);
}

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_png(httplib::Response& res, const png::Bytes& bytes) {
  res.status = 200;
  res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
}

int parse_int(const std::string& s) {
  std::size_t pos = 0;
  const int v = std::stoi(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("trailing characters");
  return v;
}

template <typename F>
httplib::Server::Handler guarded(F&& fn) {
  return [fn = std::forward<F>(fn)](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const ServiceError& e) {
      send_json(res, e.status(), {{"error", e.what()}});
    } catch (const std::invalid_argument& e) {
      send_json(res, 400, {{"error", e.what()}});
    } catch (const std::out_of_range& e) {
      send_json(res, 400, {{"error", e.what()}});
    } catch (const std::exception& e) {
      send_json(res, 500, {{"error", e.what()}});
    }
  };
}

}  // namespace

void install_routes(httplib::Server& server, SessionService& service) {
  server.Get("/healthz", guarded([](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}});
  }));

  server.Post("/sessions", guarded([&service](const httplib::Request& req, httplib::Response& res) {
    std::string id;
    if (req.is_multipart_form_data()) {
      if (!req.has_file("num_objects")) throw ServiceError(400, "num_objects is required");
      const int m = parse_int(req.get_file_value("num_objects").content);
      std::vector<png::Bytes> frames;
      for (const auto& f : req.get_file_values("frames")) frames.emplace_back(f.content.begin(), f.content.end());
      id = service.create_session(frames, m);
    } else {
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::exception& e) {
        throw ServiceError(400, std::string("invalid JSON: ") + e.what());
      }
      if (!body.is_object() || !body.contains("num_objects") || !body["num_objects"].is_number_integer()) {
        throw ServiceError(400, "num_objects is required");
      }
      if (!body.contains("dataset_path") || !body["dataset_path"].is_string()) {
        throw ServiceError(400, "dataset_path or a multipart frame upload is required");
      }
      id = service.create_session_from_dataset(body["dataset_path"].get<std::string>(),
                                               body["num_objects"].get<int>());
    }
    send_json(res, 201, service.status(id));
  }));

  server.Get(R"(/sessions/([0-9a-zA-Z_-]+))",
             guarded([&service](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, service.status(req.matches[1]));
             }));

  server.Post(R"(/sessions/([0-9a-zA-Z_-]+)/scribbles)",
              guarded([&service](const httplib::Request& req, httplib::Response& res) {
                const auto out = service.submit_scribbles(req.matches[1], req.body);
                send_json(res, service.config().async_rounds ? 202 : 200, out);
              }));

  server.Get(R"(/sessions/([0-9a-zA-Z_-]+)/rounds/(\d+)/frames/(\d+)/mask\.png)",
             guarded([&service](const httplib::Request& req, httplib::Response& res) {
               const std::string id = req.matches[1];
               const int r = parse_int(req.matches[2]);
               const int t = parse_int(req.matches[3]);
               if (req.has_param("object")) {
                 const int m = parse_int(req.get_param_value("object"));
                 if (m < 1) throw ServiceError(404, "object ids start at 1");
                 send_png(res, service.prob_png(id, r, t, m));
               } else {
                 send_png(res, service.mask_png(id, r, t));
               }
             }));

  server.Get(R"(/sessions/([0-9a-zA-Z_-]+)/frames/(\d+)\.png)",
             guarded([&service](const httplib::Request& req, httplib::Response& res) {
               send_png(res, service.frame_png(req.matches[1], parse_int(req.matches[2])));
             }));
}

}  // namespace ipn::service
