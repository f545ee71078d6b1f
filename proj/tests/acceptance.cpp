// Acceptance suite: one PASS/FAIL line per criterion.
#include <arpa/inet.h>
#include <httplib.h>
#include <netinet/in.h>
#include <signal.h>
#include <sys/socket.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include "gradcheck.hpp"
#include "ipn/checkpoint.hpp"
#include "ipn/evaluation.hpp"
#include "ipn/png_io.hpp"
#include "ipn/roi.hpp"
#include "ipn/scribble.hpp"
#include "ipn/session.hpp"
#include "ipn/training.hpp"
#include "oracles.hpp"

extern char** environ;

namespace fs = std::filesystem;
using namespace ipn;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

Outcome within_time(Outcome o, double elapsed, double limit) {
  o.detail += ", " + fmt(elapsed, 3) + " s (limit " + fmt(limit) + " s)";
  if (elapsed >= limit) o.pass = false;
  return o;
}

Outcome aggregation_constraint() {
  const auto t0 = Clock::now();
  auto model = nets::init_params(nets::ModelConfig::reduced(128), 101);
  torch::NoGradGuard guard;
  torch::manual_seed(101);
  const int c = model->config().bottom_channels();
  double worst_sum = 0.0;
  double worst_identity = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto a = torch::randn({1, c, 4, 4});
    const auto r = torch::randn({1, c, 4, 4});
    const auto w = model->aggregation->weights(a, r);
    worst_sum = std::max(worst_sum, (w.alpha + w.beta - 1.0).abs().max().item<double>());
    const auto out = model->aggregation->forward(a, a);
    worst_identity = std::max(worst_identity, (out - a).abs().max().item<double>());
  }
  Outcome o{worst_sum <= 1e-6 && worst_identity <= 1e-6,
            "max |alpha+beta-1| " + fmt(worst_sum) + ", max |agg(A,A)-A| " + fmt(worst_identity)};
  return within_time(o, seconds_since(t0), 10.0);
}

Outcome gradient_checks() {
  const auto t0 = Clock::now();
  const auto config = nets::ModelConfig::reduced(128);
  auto model = nets::init_params(config, 102);
  model->to(torch::kDouble);
  torch::manual_seed(102);
  const int c = config.bottom_channels();

  auto& agg = model->aggregation;
  const auto a = torch::randn({1, c, 2, 2}, torch::kDouble).requires_grad_();
  const auto r = torch::randn({1, c, 2, 2}, torch::kDouble).requires_grad_();
  const auto pa = torch::randn({1, c, 2, 2}, torch::kDouble);
  std::vector<std::pair<std::string, torch::Tensor>> agg_wrt{{"A_prev", a}, {"R_new", r}};
  for (const auto& p : agg->named_parameters()) agg_wrt.emplace_back("aggregation." + p.key(), p.value());
  auto results = gradcheck::check([&] { return (agg->forward(a, r) * pa).sum(); }, agg_wrt, 1e-4, 1 << 30, 1);

  auto& block = model->interaction_decoder->refine(2);
  const int skip_ch = config.interaction.stage_channels[0];
  const auto skip = torch::randn({1, skip_ch, 8, 8}, torch::kDouble).requires_grad_();
  const auto coarse = torch::randn({1, config.decoder_width, 4, 4}, torch::kDouble).requires_grad_();
  const auto pb = torch::randn({1, config.decoder_width, 8, 8}, torch::kDouble);
  std::vector<std::pair<std::string, torch::Tensor>> ref_wrt{{"skip", skip}, {"coarse", coarse}};
  for (const auto& p : block->named_parameters()) ref_wrt.emplace_back("refine." + p.key(), p.value());
  const auto more =
      gradcheck::check([&] { return (block->forward(skip, coarse) * pb).sum(); }, ref_wrt, 1e-4, 1500, 2);
  results.insert(results.end(), more.begin(), more.end());

  double worst = 0.0;
  std::string worst_name;
  int probes = 0, kinks = 0;
  for (const auto& e : results) {
    probes += e.probes;
    kinks += e.kinks;
    if (e.rel_error >= worst) {
      worst = e.rel_error;
      worst_name = e.name;
    }
  }
  Outcome o{worst <= 1e-3 && kinks * 100 <= probes,
            std::to_string(results.size()) + " tensors, worst rel err " + fmt(worst) + " (" + worst_name +
                "), " + std::to_string(kinks) + "/" + std::to_string(probes) + " probes on ReLU kinks"};
  return within_time(o, seconds_since(t0), 60.0);
}

Outcome thinning_oracle() {
  const auto t0 = Clock::now();
  int agree = 0;
  for (int bits = 0; bits < (1 << 16); ++bits) {
    BinaryMap g(4, 4);
    for (int i = 0; i < 16; ++i) g[static_cast<std::size_t>(i)] = (bits >> i) & 1;
    if (scribble::skeletonize(g) == oracle::guo_hall(g)) ++agree;
  }
  Outcome o{agree == (1 << 16), std::to_string(agree) + "/65536 grids agree"};
  return within_time(o, seconds_since(t0), 60.0);
}

BinaryMap random_blobs(int h, int w, std::mt19937_64& rng) {
  BinaryMap out(h, w);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = 1 + static_cast<int>(u(rng) * 3);
  for (int k = 0; k < n; ++k) {
    const double cy = u(rng) * h, cx = u(rng) * w;
    const double ry = 4 + u(rng) * h / 4, rx = 4 + u(rng) * w / 4;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const double dy = (r + 0.5 - cy) / ry, dx = (c + 0.5 - cx) / rx;
        if (dx * dx + dy * dy <= 1.0) out(r, c) = 1;
      }
    }
  }
  return out;
}

Outcome scribble_containment() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(104);
  const int h = 64, w = 64;
  long pos_px = 0, neg_px = 0, outside = 0;
  for (int i = 0; i < 500; ++i) {
    LabelMask gt{random_blobs(h, w, rng), 1};
    LabelMask pred{random_blobs(h, w, rng), 1};
    const int round_index = 2 + i % 3;
    const auto set = scribble::synthesize_round_scribbles(&pred, gt, {1}, round_index, 0, rng);
    const auto maps = scribble::rasterize(set, h, w, scribble::kDefaultBrushRadius);
    const auto err = scribble::error_regions(pred, gt, 1);
    const auto fn = scribble::dilate(err.false_negative, scribble::kDefaultBrushRadius);
    const auto fp = scribble::dilate(err.false_positive, scribble::kDefaultBrushRadius);
    const auto it = maps.find(1);
    if (it == maps.end()) continue;
    for (std::size_t k = 0; k < fn.size(); ++k) {
      if (it->second.pos[k]) {
        ++pos_px;
        outside += fn[k] ? 0 : 1;
      }
      if (it->second.neg[k]) {
        ++neg_px;
        outside += fp[k] ? 0 : 1;
      }
    }
  }
  Outcome o{outside == 0 && pos_px > 0 && neg_px > 0,
            std::to_string(pos_px) + " positive and " + std::to_string(neg_px) + " negative pixels, " +
                std::to_string(outside) + " outside the dilated error regions"};
  return within_time(o, seconds_since(t0), 60.0);
}

Outcome roi_round_trip() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(105);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int h = 96, w = 96;
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    // Smooth mask: logistic of a sum of wide Gaussian bumps.
    std::vector<std::array<double, 4>> bumps(4);
    for (auto& b : bumps) b = {u(rng) * w, u(rng) * h, 12.0 + 20.0 * u(rng), u(rng) * 8.0 - 4.0};
    Grid<float> mask(h, w);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        double s = 0.0;
        for (const auto& b : bumps) {
          const double dx = c + 0.5 - b[0], dy = r + 0.5 - b[1];
          s += b[3] * std::exp(-(dx * dx + dy * dy) / (2.0 * b[2] * b[2]));
        }
        mask(r, c) = static_cast<float>(1.0 / (1.0 + std::exp(-s)));
      }
    }
    const double bw = 12.0 + u(rng) * 40.0, bh = 12.0 + u(rng) * 40.0;
    const double x0 = 2.0 + u(rng) * (w - bw - 4.0), y0 = 2.0 + u(rng) * (h - bh - 4.0);
    const int side = 32 * static_cast<int>(std::ceil(2.0 * std::max(bw, bh) / 32.0));
    const roi::Roi region{{x0, y0, x0 + bw, y0 + bh}, side, side};
    const auto warped = roi::warp_to_roi(mask, region, 0.0f);
    const auto pasted = roi::paste_from_roi(warped, region, ProbMask{Grid<float>(h, w, 0.0f), 1});
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const double cx = c + 0.5, cy = r + 0.5;
        if (cx < x0 + 1.0 || cx > x0 + bw - 1.0 || cy < y0 + 1.0 || cy > y0 + bh - 1.0) continue;
        worst = std::max(worst, std::abs(static_cast<double>(pasted.values(r, c)) - mask(r, c)));
      }
    }
  }
  Outcome o{worst <= 0.05, "max abs error " + fmt(worst)};
  return within_time(o, seconds_since(t0), 30.0);
}

Outcome restricted_propagation() {
  const auto t0 = Clock::now();
  long plans = 0, mismatches = 0, crossings = 0;
  for (int n = 1; n <= 8; ++n) {
    for (int bits = 0; bits < (1 << n); ++bits) {
      std::set<int> history;
      for (int f = 0; f < n; ++f) {
        if (bits & (1 << f)) history.insert(f);
      }
      for (int t = 0; t < n; ++t) {
        ++plans;
        const auto plan = plan_propagation(t, history, n);
        std::set<int> got(plan.forward_range.begin(), plan.forward_range.end());
        got.insert(plan.backward_range.begin(), plan.backward_range.end());
        if (got != oracle::reachable(t, history, n)) ++mismatches;
        for (int f : got) {
          for (int b : history) {
            if (b == t) continue;
            if ((f > t && b > t && b <= f) || (f < t && b < t && b >= f)) ++crossings;
          }
        }
      }
    }
  }
  Outcome o{mismatches == 0 && crossings == 0, std::to_string(plans) + " plans, " + std::to_string(mismatches) +
                                                   " mismatches, " + std::to_string(crossings) + " barrier crossings"};
  return within_time(o, seconds_since(t0), 30.0);
}

Outcome blend_weights() {
  int bad = 0;
  for (int d = 1; d <= 10; ++d) {
    if (blend_weight(1, d) != 1.0) ++bad;
    if (blend_weight(d, d) != 1.0 / d) ++bad;
    for (int k = 1; k <= d; ++k) {
      if (blend_weight(k, d, true) != 1.0) ++bad;
    }
  }
  return {bad == 0, std::to_string(bad) + " exact-value violations over D = 1..10"};
}

Outcome soft_aggregation() {
  std::mt19937_64 rng(108);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int m = 1 + static_cast<int>(u(rng) * 5);
    std::vector<ProbMask> masks;
    for (int k = 0; k < m; ++k) masks.push_back({Grid<float>(1, 1, static_cast<float>(u(rng))), k + 1});
    const auto d = soft_aggregate(masks);
    double s = 0.0;
    for (int k = 0; k <= m; ++k) s += d.at(k, 0, 0);
    worst = std::max(worst, std::abs(s - 1.0));
  }
  const std::vector<ProbMask> pair{{Grid<float>(1, 1, 0.8f), 1}, {Grid<float>(1, 1, 0.2f), 2}};
  const auto d = soft_aggregate(pair);
  const auto expected = oracle::soft_aggregate({0.8, 0.2});
  double example_err = 0.0;
  for (int k = 0; k <= 2; ++k) {
    example_err = std::max(example_err, std::abs(d.at(k, 0, 0) - static_cast<double>(expected[k])));
  }
  return {worst <= 1e-6 && example_err <= 1e-3,
          "max |sum-1| " + fmt(worst) + "; (0.8,0.2) -> " + fmt(d.at(0, 0, 0)) + ", " + fmt(d.at(1, 0, 0)) + ", " +
              fmt(d.at(2, 0, 0)) + " (err " + fmt(example_err) + ")"};
}

struct Trained {
  nets::IpnModel model{nullptr};
  train::TrainConfig config;
};

Outcome training_smoke(Trained& out) {
  const auto t0 = Clock::now();
  auto config = train::TrainConfig::desk();
  config.seed = 1;
  const auto videos = train::toy_corpus(5, 16, 128, 1, config.toy_seed);
  train::Trainer trainer(config, videos);
  trainer.run({}, [](const train::IterationLog& log) {
    if ((log.iteration + 1) % 250 == 0) {
      std::cerr << "  training iteration " << log.iteration + 1 << " loss " << log.loss << "\n";
    }
  });
  const auto& h = trainer.history();
  const std::size_t n = h.size() / 10;
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    first += h[i].loss;
    last += h[h.size() - 1 - i].loss;
  }
  first /= static_cast<double>(n);
  last /= static_cast<double>(n);
  out.model = trainer.model();
  out.config = config;
  Outcome o{h.size() >= 1500 && last < 0.5 * first,
            std::to_string(h.size()) + " iterations, first-10% loss " + fmt(first) + ", last-10% loss " +
                fmt(last) + " (ratio " + fmt(last / first) + ")"};
  return within_time(o, seconds_since(t0), 1800.0);
}

std::vector<train::Video> held_out_videos() { return train::toy_corpus(10, 16, 128, 1, 5000); }

Outcome interactive_improvement(Trained& trained) {
  const auto t0 = Clock::now();
  const auto videos = held_out_videos();
  eval::EvalConfig cfg;
  std::vector<eval::VideoResult> results;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    results.push_back(eval::evaluate_interactive(trained.model, videos[i], cfg, 7 + i, "v" + std::to_string(i)));
  }
  const double j1 = eval::mean_j_after(results, 1);
  const double j3 = eval::mean_j_after(results, 3);
  const auto again = eval::evaluate_interactive(trained.model, videos[0], cfg, 7, "v0");
  bool same = again.records.size() == results[0].records.size();
  for (std::size_t k = 0; same && k < again.records.size(); ++k) {
    same = again.records[k].mean_j == results[0].records[k].mean_j && again.records[k].frame == results[0].records[k].frame;
  }
  Outcome o{j1 >= 0.5 && j3 >= j1 + 0.05 && same,
            "J(1) " + fmt(j1) + ", J(3) " + fmt(j3) + ", gain " + fmt(j3 - j1) + (same ? ", deterministic" : ", NOT deterministic")};
  return within_time(o, seconds_since(t0), 300.0);
}

Outcome metric_checks(Trained& trained) {
  const double a = eval::auc({{0.0, 0.6}, {20.0, 0.6}, {60.0, 0.6}}, 60.0);
  const double j = eval::j_at({{30.0, 0.4}, {90.0, 0.8}}, 60.0);
  eval::EvalConfig cfg;
  cfg.max_interactions = 8;
  std::size_t longest = 0;
  const auto videos = held_out_videos();
  for (std::size_t i = 0; i < 3; ++i) {
    longest = std::max(longest, eval::evaluate_interactive(trained.model, videos[i], cfg, 11 + i).curve.size());
  }
  return {a == 0.6 && j == 0.6 && longest <= 8,
          "auc(const 0.6) " + fmt(a, 17) + ", j_at midpoint " + fmt(j, 17) + ", longest curve " + std::to_string(longest)};
}

Outcome speed_envelope(Trained& trained) {
  train::ToyVideoSpec spec;
  spec.num_frames = 16;
  spec.h = spec.w = 128;
  const auto video = train::generate_toy_video(spec, 9000);
  Session session(video.frames, 1);
  std::mt19937_64 rng(112);
  double worst = 0.0;
  for (int round = 1; round <= 2; ++round) {
    const int t = round == 1 ? 0 : 10;
    const auto pred = session.get_masks()[static_cast<std::size_t>(t)];
    const auto set = scribble::synthesize_round_scribbles(round == 1 ? nullptr : &pred, video.gts[t], {1},
                                                          round, t, rng);
    if (set.empty()) break;
    const auto t0 = Clock::now();
    session.run_round(trained.model, set);
    worst = std::max(worst, seconds_since(t0));
  }
  const unsigned cores = std::thread::hardware_concurrency();
  return {worst < 5.0, "slowest round " + fmt(worst, 3) + " s on " + std::to_string(cores) + " core(s)"};
}

class ServeProcess {
 public:
  ServeProcess(const fs::path& ckpt, const fs::path& data, int port) : port_(port) {
    const std::string port_s = std::to_string(port);
    const std::string ckpt_s = ckpt.string(), data_s = data.string();
    std::vector<std::string> args{IPN_TOOL_PATH, "serve", "--ckpt", ckpt_s, "--data-dir", data_s,
                                  "--port", port_s, "--host", "127.0.0.1"};
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    if (posix_spawn(&pid_, argv[0], nullptr, nullptr, argv.data(), environ) != 0) pid_ = -1;
  }
  ~ServeProcess() {
    if (pid_ > 0) {
      kill(pid_, SIGTERM);
      waitpid(pid_, nullptr, 0);
    }
  }
  bool wait_ready() const {
    httplib::Client cli("127.0.0.1", port_);
    for (int i = 0; i < 200 && pid_ > 0; ++i) {
      if (auto res = cli.Get("/healthz"); res && res->status == 200) return true;
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    return false;
  }

 private:
  pid_t pid_ = -1;
  int port_;
};

int free_port() {
  const int fd = socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  socklen_t len = sizeof addr;
  int port = -1;
  if (bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0 &&
      getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) == 0) {
    port = ntohs(addr.sin_port);
  }
  close(fd);
  return port;
}

Outcome service_round_trip(Trained& trained) {
  const auto root = fs::temp_directory_path() / ("ipn_acceptance_" + std::to_string(getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const auto ckpt = root / "model.ckpt";
  nets::save_checkpoint(trained.model, {trained.config.model, trained.config.seed, trained.config.iterations, {}}, ckpt);
  train::ToyVideoSpec spec;
  spec.num_frames = 8;
  spec.h = spec.w = 128;
  const auto video = train::generate_toy_video(spec, 9100);
  httplib::MultipartFormDataItems items{{"num_objects", "1", "", ""}};
  for (const auto& f : video.frames) {
    const auto bytes = png::encode_frame(f);
    items.push_back({"frames", std::string(bytes.begin(), bytes.end()), "frame.png", "image/png"});
  }
  std::mt19937_64 rng(113);
  const auto scribbles = scribble::to_json(scribble::synthesize_round_scribbles(nullptr, video.gts[3], {1}, 1, 3, rng));

  std::string id;
  std::vector<std::string> first;
  Outcome o{false, ""};
  {
    const int port = free_port();
    ServeProcess server(ckpt, root / "data", port);
    if (!server.wait_ready()) return {false, "server did not start"};
    httplib::Client cli("127.0.0.1", port);
    auto created = cli.Post("/sessions", items);
    if (!created) return {false, "session creation failed: " + httplib::to_string(created.error())};
    if (created->status != 201) {
      return {false, "session creation failed: " + std::to_string(created->status) + " " + created->body};
    }
    id = nlohmann::json::parse(created->body).at("session_id");
    auto sub = cli.Post("/sessions/" + id + "/scribbles", scribbles, "application/json");
    if (!sub || sub->status != 200) return {false, "scribble submission failed"};
    for (int t = 0; t < spec.num_frames; ++t) {
      auto res = cli.Get("/sessions/" + id + "/rounds/1/frames/" + std::to_string(t) + "/mask.png");
      if (!res || res->status != 200) return {false, "mask " + std::to_string(t) + " unavailable"};
      first.push_back(res->body);
    }
  }
  const int port = free_port();
  ServeProcess server(ckpt, root / "data", port);
  if (!server.wait_ready()) return {false, "server did not restart"};
  httplib::Client cli("127.0.0.1", port);
  int identical = 0;
  for (int t = 0; t < spec.num_frames; ++t) {
    auto res = cli.Get("/sessions/" + id + "/rounds/1/frames/" + std::to_string(t) + "/mask.png");
    if (res && res->status == 200 && res->body == first[static_cast<std::size_t>(t)]) ++identical;
  }
  fs::remove_all(root);
  return {identical == spec.num_frames,
          std::to_string(identical) + "/" + std::to_string(spec.num_frames) + " masks byte-identical after restart"};
}

}  // namespace

int main() {
  torch::set_num_threads(static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));
  Trained trained;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"aggregation constraint", aggregation_constraint},
      {"gradient checks", gradient_checks},
      {"thinning oracle", thinning_oracle},
      {"scribble containment", scribble_containment},
      {"roi round trip", roi_round_trip},
      {"restricted propagation", restricted_propagation},
      {"blend weights", blend_weights},
      {"soft aggregation normalization", soft_aggregation},
      {"training smoke test", [&] { return training_smoke(trained); }},
      {"interactive improvement", [&] { return interactive_improvement(trained); }},
      {"metric checks", [&] { return metric_checks(trained); }},
      {"speed envelope", [&] { return speed_envelope(trained); }},
      {"service round trip", [&] { return service_round_trip(trained); }},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      if (i >= 9 && !trained.model) {
        o = {false, "no trained model"};
      } else {
        o = criteria[i].second();
      }
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first
              << "): " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failures == 0 ? 0 : 1;
}
