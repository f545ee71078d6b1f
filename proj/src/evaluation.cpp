#include "ipn/evaluation.hpp"

#include <chrono>
#include <fstream>

#include "ipn/errors.hpp"

namespace ipn::eval {

void EvalConfig::validate() const {
  if (max_interactions < 1) throw ConfigError("max_interactions must be >= 1");
  if (!(budget_s > 0.0)) throw ConfigError("budget_s must be positive");
  if (!(per_object_time_limit_s > 0.0)) throw ConfigError("per_object_time_limit_s must be positive");
  if (!(synthetic_seconds_per_interaction > 0.0)) {
    throw ConfigError("synthetic_seconds_per_interaction must be positive");
  }
}

EvalConfig eval_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("evaluation config must be a JSON object");
  EvalConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "max_interactions") c.max_interactions = v.get<int>();
      else if (key == "per_object_time_limit_s") c.per_object_time_limit_s = v.get<double>();
      else if (key == "budget_s") c.budget_s = v.get<double>();
      else if (key == "synthetic_seconds_per_interaction") c.synthetic_seconds_per_interaction = v.get<double>();
      else if (key == "curve_time_mode") {
        const auto mode = v.get<std::string>();
        if (mode == "synthetic") c.time_mode = TimeMode::kSynthetic;
        else if (mode == "wallclock") c.time_mode = TimeMode::kWallclock;
        else throw ConfigError("curve_time_mode must be synthetic or wallclock");
      } else if (key == "weights") {
        const auto fn = v.get<std::string>();
        if (fn == "linear") c.session.weights = WeightFunction::kLinear;
        else if (fn == "gaussian") c.session.weights = WeightFunction::kGaussian;
        else throw ConfigError("weights must be linear or gaussian");
      } else if (key == "brush_radius") c.session.brush_radius = v.get<int>();
      else if (key == "max_strokes") c.synthesis.max_strokes = v.get<int>();
      else throw ConfigError("unknown evaluation config key: " + key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("evaluation config: ") + e.what());
  }
  c.validate();
  return c;
}

EvalConfig load_eval_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return eval_config_from_json(j);
}

VideoResult evaluate_interactive(nets::IpnModel& model, const train::Video& video,
                                 const EvalConfig& config, std::uint64_t seed,
                                 const std::string& video_id) {
  config.validate();
  if (video.length() < 1 || static_cast<int>(video.gts.size()) != video.length()) {
    throw ArgumentError("evaluation video needs frames and matching ground truth");
  }
  std::mt19937_64 rng(seed);
  Session session(video.frames, video.num_objects, config.session);
  std::vector<int> objects;
  for (int m = 1; m <= video.num_objects; ++m) objects.push_back(m);

  VideoResult result;
  result.video_id = video_id;
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const double limit = config.per_object_time_limit_s * video.num_objects;
  for (int k = 1; k <= config.max_interactions; ++k) {
    const auto& preds = session.get_masks();
    const int t = scribble::select_worst_frame(preds, video.gts, video.num_objects);
    const auto strokes = scribble::synthesize_round_scribbles(k == 1 ? nullptr : &preds[t], video.gts[t],
                                                              objects, k, t, rng, config.synthesis);
    if (strokes.empty()) {
      result.converged = true;
      break;
    }
    const auto round_start = clock::now();
    session.run_round(model, strokes);
    const auto now = clock::now();
    InteractionRecord rec;
    rec.index = k;
    rec.frame = t;
    rec.round_seconds = std::chrono::duration<double>(now - round_start).count();
    rec.t_seconds = config.time_mode == TimeMode::kSynthetic
                        ? k * config.synthetic_seconds_per_interaction
                        : std::chrono::duration<double>(now - start).count();
    rec.mean_j = mean_jaccard_video(session.get_masks(), video.gts, video.num_objects);
    rec.timeout = rec.round_seconds > limit;
    result.records.push_back(rec);
    result.curve.push_back({rec.t_seconds, rec.mean_j});
    if (rec.timeout) {
      result.timed_out = true;
      break;
    }
  }
  return result;
}

void write_report(const std::filesystem::path& path, const std::vector<VideoResult>& results,
                  const EvalConfig& config) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report " + path.string());
  out << "video_id,interaction_idx,t_seconds,mean_j,timeout_flag\n";
  double auc_sum = 0.0;
  double j_sum = 0.0;
  int counted = 0;
  for (const auto& r : results) {
    for (const auto& rec : r.records) {
      out << r.video_id << ',' << rec.index << ',' << rec.t_seconds << ',' << rec.mean_j << ','
          << (rec.timeout ? 1 : 0) << '\n';
    }
    if (!r.curve.empty()) {
      auc_sum += auc(r.curve, config.budget_s);
      j_sum += j_at(r.curve, config.budget_s);
      ++counted;
    }
  }
  const double n = counted > 0 ? counted : 1;
  out << "summary,auc=" << auc_sum / n << ",j_at_" << config.budget_s << "=" << j_sum / n << ",,\n";
}

double mean_j_after(const std::vector<VideoResult>& results, int k) {
  if (results.empty()) throw ArgumentError("mean_j_after: no results");
  if (k < 1) throw ArgumentError("mean_j_after: k must be >= 1");
  double s = 0.0;
  for (const auto& r : results) {
    if (r.records.empty()) throw ArgumentError("mean_j_after: video without interactions");
    const auto idx = std::min<std::size_t>(static_cast<std::size_t>(k), r.records.size()) - 1;
    s += r.records[idx].mean_j;
  }
  return s / static_cast<double>(results.size());
}

}  // namespace ipn::eval
