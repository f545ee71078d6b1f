// Command-line entry point: train, evaluate, serve, make-toy.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <httplib.h>

#include "ipn/checkpoint.hpp"
#include "ipn/data.hpp"
#include "ipn/evaluation.hpp"
#include "ipn/service.hpp"
#include "ipn/training.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<fs::path> video_dirs(const fs::path& root) {
  if (fs::is_directory(root / "frames")) return {root};
  std::vector<fs::path> out;
  for (const auto& item : fs::directory_iterator(root)) {
    if (item.is_directory() && fs::is_directory(item.path() / "frames")) out.push_back(item.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

int cmd_make_toy(const fs::path& out, int count, int frames, int size, int objects, std::uint64_t seed) {
  const auto videos = ipn::train::toy_corpus(count, frames, size, objects, seed);
  for (std::size_t i = 0; i < videos.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "video_%03zu", i);
    ipn::train::save_video(videos[i], out / name);
  }
  std::cout << "wrote " << videos.size() << " videos to " << out << "\n";
  return 0;
}

int cmd_train(const fs::path& config_path, const fs::path& out, std::optional<std::uint64_t> seed,
              const std::string& videos_dir) {
  auto config = config_path.empty() ? ipn::train::TrainConfig::desk()
                                    : ipn::train::load_train_config(config_path);
  if (seed) config.seed = *seed;
  std::vector<ipn::train::Video> videos;
  if (!videos_dir.empty()) {
    for (const auto& d : video_dirs(videos_dir)) videos.push_back(ipn::train::load_video(d));
  } else {
    videos = ipn::train::toy_corpus(config.toy_videos, config.toy_frames, config.toy_size,
                                    config.toy_objects, config.toy_seed);
  }
  ipn::train::Trainer trainer(config, std::move(videos));
  double window = 0.0;
  int count = 0;
  trainer.run(out, [&](const ipn::train::IterationLog& log) {
    window += log.loss;
    if (++count == 50 || log.iteration + 1 == config.iterations) {
      std::cout << "iter " << log.iteration + 1 << "/" << config.iterations << "  loss " << window / count
                << "  N " << log.clip_len << "  R " << log.rounds << std::endl;
      window = 0.0;
      count = 0;
    }
  });
  std::cout << "checkpoint: " << (out / "model.ckpt") << "\n";
  return 0;
}

int cmd_evaluate(const fs::path& ckpt, const fs::path& videos_root, const fs::path& config_path,
                 const fs::path& report, std::uint64_t seed) {
  auto checkpoint = ipn::nets::load_checkpoint(ckpt);
  const auto config = config_path.empty() ? ipn::eval::EvalConfig{} : ipn::eval::load_eval_config(config_path);
  std::vector<ipn::eval::VideoResult> results;
  const auto dirs = video_dirs(videos_root);
  if (dirs.empty()) throw ipn::IoError("no videos under " + videos_root.string());
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    const auto video = ipn::train::load_video(dirs[i]);
    auto r = ipn::eval::evaluate_interactive(checkpoint.model, video, config, seed + i,
                                             dirs[i].filename().string());
    std::cout << r.video_id << ":";
    for (const auto& rec : r.records) std::cout << " " << rec.mean_j;
    std::cout << (r.timed_out ? " (timeout)" : "") << "\n";
    results.push_back(std::move(r));
  }
  ipn::eval::write_report(report, results, config);
  std::cout << "report: " << report << "\n";
  return 0;
}

int cmd_serve(const fs::path& ckpt, fs::path data_dir, int port, const std::string& host, bool async) {
  auto checkpoint = ipn::nets::load_checkpoint(ckpt);
  ipn::service::ServiceConfig config;
  config.data_dir = std::move(data_dir);
  config.async_rounds = async;
  ipn::service::SessionService service(checkpoint.model, fs::absolute(ckpt).string(), config);
  httplib::Server server;
  ipn::service::install_routes(server, service);
  std::cout << "listening on " << host << ":" << port << " (data " << config.data_dir << ")" << std::endl;
  if (!server.listen(host, port)) {
    std::cerr << "cannot listen on " << host << ":" << port << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interactive video object segmentation"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Train a model on toy or saved videos");
  std::string train_config, train_out = "ckpt", train_videos;
  std::optional<std::uint64_t> train_seed;
  train->add_option("--config", train_config, "JSON training config (desk defaults when omitted)");
  train->add_option("--out", train_out, "Output directory for checkpoints and loss.csv");
  train->add_option("--seed", train_seed, "Overrides the config seed");
  train->add_option("--videos", train_videos, "Directory of saved videos instead of the toy corpus");

  auto* evaluate = app.add_subcommand("evaluate", "Robot-agent evaluation");
  std::string eval_ckpt, eval_videos, eval_config, eval_report = "report.csv";
  std::uint64_t eval_seed = 0;
  evaluate->add_option("--ckpt", eval_ckpt, "Checkpoint file")->required();
  evaluate->add_option("--videos", eval_videos, "Video directory or directory of videos")->required();
  evaluate->add_option("--config", eval_config, "JSON evaluation config");
  evaluate->add_option("--report", eval_report, "Output CSV");
  evaluate->add_option("--seed", eval_seed, "Robot seed");

  auto* serve = app.add_subcommand("serve", "HTTP session service");
  std::string serve_ckpt, serve_data, serve_host = "0.0.0.0";
  int serve_port = 0;
  bool serve_async = false;
  serve->add_option("--ckpt", serve_ckpt, "Checkpoint file")->required();
  serve->add_option("--data-dir", serve_data, "Snapshot directory (env IPN_DATA_DIR)");
  serve->add_option("--port", serve_port, "Port (env IPN_PORT, default 8080)");
  serve->add_option("--host", serve_host, "Bind address");
  serve->add_flag("--async", serve_async, "Run rounds in the background");

  auto* toy = app.add_subcommand("make-toy", "Write seeded toy videos");
  std::string toy_out = "toy";
  int toy_count = 10, toy_frames = 16, toy_size = 128, toy_objects = 1;
  std::uint64_t toy_seed = 0;
  toy->add_option("--out", toy_out, "Output directory");
  toy->add_option("--count", toy_count, "Number of videos");
  toy->add_option("--frames", toy_frames, "Frames per video");
  toy->add_option("--size", toy_size, "Frame side in pixels");
  toy->add_option("--objects", toy_objects, "Objects per video");
  toy->add_option("--seed", toy_seed, "First video seed");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(train_config, train_out, train_seed, train_videos);
    if (*evaluate) return cmd_evaluate(eval_ckpt, eval_videos, eval_config, eval_report, eval_seed);
    if (*serve) {
      if (serve_data.empty()) {
        const char* env = std::getenv("IPN_DATA_DIR");
        serve_data = env ? env : "data";
      }
      if (serve_port == 0) {
        const char* env = std::getenv("IPN_PORT");
        serve_port = env ? std::atoi(env) : 8080;
      }
      return cmd_serve(serve_ckpt, serve_data, serve_port, serve_host, serve_async);
    }
    if (*toy) return cmd_make_toy(toy_out, toy_count, toy_frames, toy_size, toy_objects, toy_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
