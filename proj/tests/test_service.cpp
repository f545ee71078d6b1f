#include <gtest/gtest.h>

#include <httplib.h>

#include <filesystem>
#include <thread>

#include "ipn/data.hpp"
#include "ipn/png_io.hpp"
#include "ipn/service.hpp"

using namespace ipn;
using namespace ipn::service;
using nlohmann::json;

namespace {

class Server {
 public:
  explicit Server(SessionService& service) {
    install_routes(server_, service);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~Server() {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

std::vector<png::Bytes> toy_pngs(int frames, int size, std::uint64_t seed) {
  train::ToyVideoSpec spec;
  spec.num_frames = frames;
  spec.h = spec.w = size;
  const auto v = train::generate_toy_video(spec, seed);
  std::vector<png::Bytes> out;
  for (const auto& f : v.frames) out.push_back(png::encode_frame(f));
  return out;
}

httplib::MultipartFormDataItems upload(const std::vector<png::Bytes>& pngs, const std::string& m) {
  httplib::MultipartFormDataItems items{{"num_objects", m, "", ""}};
  for (std::size_t i = 0; i < pngs.size(); ++i) {
    items.push_back({"frames", std::string(pngs[i].begin(), pngs[i].end()),
                     "f" + std::to_string(i) + ".png", "image/png"});
  }
  return items;
}

png::Bytes bytes(const std::string& s) { return png::Bytes(s.begin(), s.end()); }

const char* kScribbles =
    R"({"frame": 1, "scribbles": [{"object_id": 1, "sign": "pos",
       "points": [[0.3, 0.5], [0.32, 0.5], [0.34, 0.5]]}]})";

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST(Service, RoundTripAndRestart) {
  const auto dir = fresh_dir("ipn_service_rt");
  ServiceConfig cfg;
  cfg.data_dir = dir;
  std::string id;
  std::string mask, prob;
  {
    SessionService service(nets::init_params(nets::ModelConfig::reduced(64), 1), "ckpt-a", cfg);
    Server server(service);
    auto cli = server.client();
    ASSERT_EQ(cli.Get("/healthz")->status, 200);

    auto created = cli.Post("/sessions", upload(toy_pngs(4, 64, 3), "2"));
    ASSERT_EQ(created->status, 201) << created->body;
    id = json::parse(created->body).at("session_id");

    auto st = json::parse(cli.Get("/sessions/" + id)->body);
    EXPECT_EQ(st["state"], "idle");
    EXPECT_EQ(st["round"], 0);
    EXPECT_EQ(st["T"], 4);
    EXPECT_EQ(st["M"], 2);
    EXPECT_EQ(st["checkpoint_id"], "ckpt-a");

    auto zero = cli.Get("/sessions/" + id + "/rounds/0/frames/2/mask.png");
    ASSERT_EQ(zero->status, 200);
    EXPECT_EQ(zero->get_header_value("Content-Type"), "image/png");
    const auto bg = png::decode_labels(bytes(zero->body), 2);
    for (auto v : bg.labels.values()) EXPECT_EQ(v, 0);

    auto sub = cli.Post("/sessions/" + id + "/scribbles", kScribbles, "application/json");
    ASSERT_EQ(sub->status, 200) << sub->body;
    const auto body = json::parse(sub->body);
    EXPECT_EQ(body["round"], 1);
    EXPECT_EQ(body["changed_frames"], json({0, 1, 2, 3}));
    EXPECT_EQ(body["per_frame_available"].size(), 4u);

    st = json::parse(cli.Get("/sessions/" + id)->body);
    EXPECT_EQ(st["round"], 1);
    EXPECT_EQ(st["annotation_history"], json::parse(R"([{"round": 1, "frame": 1}])"));

    auto m = cli.Get("/sessions/" + id + "/rounds/1/frames/3/mask.png");
    ASSERT_EQ(m->status, 200);
    mask = m->body;
    EXPECT_EQ(png::decode_labels(bytes(mask), 2).height(), 64);
    auto p = cli.Get("/sessions/" + id + "/rounds/1/frames/3/mask.png?object=1");
    ASSERT_EQ(p->status, 200);
    prob = p->body;
    EXPECT_EQ(png::decode_prob(bytes(prob)).width(), 64);
    auto frame = cli.Get("/sessions/" + id + "/frames/0.png");
    ASSERT_EQ(frame->status, 200);
  }
  SessionService restarted(nets::init_params(nets::ModelConfig::reduced(64), 1), "ckpt-a", cfg);
  Server server(restarted);
  auto cli = server.client();
  auto st = json::parse(cli.Get("/sessions/" + id)->body);
  EXPECT_EQ(st["round"], 1);
  EXPECT_EQ(cli.Get("/sessions/" + id + "/rounds/1/frames/3/mask.png")->body, mask);
  EXPECT_EQ(cli.Get("/sessions/" + id + "/rounds/1/frames/3/mask.png?object=1")->body, prob);
  std::filesystem::remove_all(dir);
}

TEST(Service, ErrorStatuses) {
  const auto dir = fresh_dir("ipn_service_err");
  ServiceConfig cfg;
  cfg.data_dir = dir;
  SessionService service(nets::init_params(nets::ModelConfig::reduced(64), 1), "c", cfg);
  Server server(service);
  auto cli = server.client();

  EXPECT_EQ(cli.Get("/sessions/nope")->status, 404);
  EXPECT_EQ(cli.Post("/sessions", "{}", "application/json")->status, 400);
  EXPECT_EQ(cli.Post("/sessions", R"({"num_objects": 1, "dataset_path": "/no/such/dir"})",
                     "application/json")->status, 404);
  EXPECT_EQ(cli.Post("/sessions", upload({png::Bytes{1, 2, 3}}, "1"))->status, 400);
  auto mixed = toy_pngs(2, 64, 1);
  mixed.push_back(toy_pngs(1, 32, 2)[0]);
  EXPECT_EQ(cli.Post("/sessions", upload(mixed, "1"))->status, 422);

  const auto id = service.create_session(toy_pngs(3, 64, 4), 1);
  const std::string base = "/sessions/" + id;
  EXPECT_EQ(cli.Post(base + "/scribbles", "{not json", "application/json")->status, 400);
  EXPECT_EQ(cli.Post(base + "/scribbles", R"({"frame": 0, "scribbles": []})", "application/json")->status,
            422);
  EXPECT_EQ(cli.Post(base + "/scribbles",
                     R"({"frame": 9, "scribbles": [{"object_id": 1, "sign": "pos", "points": [[0.5, 0.5], [0.52, 0.5]]}]})",
                     "application/json")->status, 422);
  EXPECT_EQ(cli.Post(base + "/scribbles",
                     R"({"frame": 0, "scribbles": [{"object_id": 2, "sign": "pos", "points": [[0.5, 0.5], [0.52, 0.5]]}]})",
                     "application/json")->status, 422);
  EXPECT_EQ(cli.Get(base + "/rounds/1/frames/0/mask.png")->status, 404);
  EXPECT_EQ(cli.Get(base + "/rounds/0/frames/3/mask.png")->status, 404);
  EXPECT_EQ(cli.Get(base + "/rounds/0/frames/0/mask.png?object=0")->status, 404);
  EXPECT_EQ(cli.Get(base + "/rounds/0/frames/0/mask.png?object=2")->status, 404);
  EXPECT_EQ(cli.Get(base + "/frames/7.png")->status, 404);
  std::filesystem::remove_all(dir);
}

TEST(Service, AsyncRoundsRejectConcurrentSubmissions) {
  const auto dir = fresh_dir("ipn_service_async");
  ServiceConfig cfg;
  cfg.data_dir = dir;
  cfg.async_rounds = true;
  SessionService service(nets::init_params(nets::ModelConfig::reduced(128), 1), "c", cfg);
  Server server(service);
  auto cli = server.client();
  const auto id = service.create_session(toy_pngs(16, 128, 5), 1);
  const std::string base = "/sessions/" + id;
  auto first = cli.Post(base + "/scribbles", kScribbles, "application/json");
  ASSERT_EQ(first->status, 202) << first->body;
  EXPECT_EQ(cli.Post(base + "/scribbles", kScribbles, "application/json")->status, 409);
  service.wait_idle(id);
  auto st = json::parse(cli.Get(base)->body);
  EXPECT_EQ(st["state"], "idle");
  EXPECT_EQ(st["round"], 1);
  EXPECT_EQ(cli.Get(base + "/rounds/1/frames/15/mask.png")->status, 200);
  std::filesystem::remove_all(dir);
}

TEST(Service, DatasetPathSession) {
  const auto dir = fresh_dir("ipn_service_ds");
  train::ToyVideoSpec spec;
  spec.num_frames = 3;
  spec.h = spec.w = 48;
  train::save_video(train::generate_toy_video(spec, 2), dir / "video");
  ServiceConfig cfg;
  cfg.data_dir = dir / "data";
  SessionService service(nets::init_params(nets::ModelConfig::reduced(64), 1), "c", cfg);
  Server server(service);
  auto cli = server.client();
  const json req{{"num_objects", 1}, {"dataset_path", (dir / "video").string()}};
  auto res = cli.Post("/sessions", req.dump(), "application/json");
  ASSERT_EQ(res->status, 201) << res->body;
  const std::string id = json::parse(res->body).at("session_id");
  EXPECT_EQ(json::parse(cli.Get("/sessions/" + id)->body)["T"], 3);
  std::filesystem::remove_all(dir);
}
