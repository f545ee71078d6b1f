#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ipn/data.hpp"
#include "ipn/metrics.hpp"
#include "ipn/networks.hpp"
#include "ipn/scribble.hpp"
#include "ipn/session.hpp"

namespace ipn::eval {

enum class TimeMode { kWallclock, kSynthetic };

struct EvalConfig {
  int max_interactions = 8;
  double per_object_time_limit_s = 30.0;
  double budget_s = 60.0;
  TimeMode time_mode = TimeMode::kSynthetic;
  double synthetic_seconds_per_interaction = 7.5;
  scribble::SynthesisOptions synthesis;
  SessionConfig session;

  void validate() const;
};

EvalConfig eval_config_from_json(const nlohmann::json& j);
EvalConfig load_eval_config(const std::filesystem::path& path);

struct InteractionRecord {
  int index = 1;  // 1-based interaction number
  int frame = 0;
  double t_seconds = 0.0;
  double mean_j = 0.0;
  double round_seconds = 0.0;  // measured wallclock of run_round
  bool timeout = false;
};

struct VideoResult {
  std::string video_id;
  std::vector<InteractionRecord> records;
  std::vector<TimedPoint> curve;
  bool timed_out = false;
  /// True when the robot had nothing left to correct.
  bool converged = false;
};

/// Robot-agent loop: annotate the worst frame, run a round, score, repeat.
VideoResult evaluate_interactive(nets::IpnModel& model, const train::Video& video,
                                 const EvalConfig& config, std::uint64_t seed,
                                 const std::string& video_id = "video");

/// Per-interaction rows plus a summary row with mean AUC and J at the budget.
void write_report(const std::filesystem::path& path, const std::vector<VideoResult>& results,
                  const EvalConfig& config);

/// Mean over videos of the J reached after interaction k (1-based); a video
/// that stopped early contributes its last value.
double mean_j_after(const std::vector<VideoResult>& results, int k);

}  // namespace ipn::eval
