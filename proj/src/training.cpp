#include "ipn/training.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "ipn/checkpoint.hpp"
#include "ipn/errors.hpp"
#include "ipn/scribble.hpp"
#include "ipn/steps.hpp"

namespace ipn::train {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (optimizer != "adam") throw ConfigError("only the adam optimizer is supported");
  if (clip_len_min < 2 || clip_len_max < clip_len_min) throw ConfigError("clip lengths need 2 <= min <= max");
  if (rounds_min < 1 || rounds_max < rounds_min) throw ConfigError("rounds need 1 <= min <= max");
  if (!(curriculum_ramp > 0.0 && curriculum_ramp <= 1.0)) throw ConfigError("curriculum_ramp must be in (0, 1]");
  if (patch_size < 8 || patch_size > short_edge_resize) {
    throw ConfigError("patch_size must be in [8, short_edge_resize]");
  }
  if (iterations < 1) throw ConfigError("iterations must be positive");
  if (pretrain_fraction < 0.0 || pretrain_fraction > 1.0) throw ConfigError("pretrain_fraction must be in [0, 1]");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (toy_videos < 1 || toy_frames < clip_len_max || toy_size < 16 || toy_objects < 1) {
    throw ConfigError("toy corpus needs >= 1 video, clip_len_max frames, size >= 16, >= 1 object");
  }
  model.validate();
}

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.lr = 5e-4;
  c.patch_size = 112;
  c.short_edge_resize = 128;
  c.iterations = 3000;
  c.model = nets::ModelConfig::reduced(128);
  return c;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"optimizer", c.optimizer},
          {"clip_len_min", c.clip_len_min},
          {"clip_len_max", c.clip_len_max},
          {"rounds_min", c.rounds_min},
          {"rounds_max", c.rounds_max},
          {"curriculum_ramp", c.curriculum_ramp},
          {"patch_size", c.patch_size},
          {"short_edge_resize", c.short_edge_resize},
          {"augment", c.augment},
          {"iterations", c.iterations},
          {"seed", c.seed},
          {"model", nets::to_json(c.model)},
          {"pretrain_fraction", c.pretrain_fraction},
          {"checkpoint_every", c.checkpoint_every},
          {"toy_videos", c.toy_videos},
          {"toy_frames", c.toy_frames},
          {"toy_size", c.toy_size},
          {"toy_objects", c.toy_objects},
          {"toy_seed", c.toy_seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  TrainConfig c;
  try {
    // Shorthand model selection; a full "model" object wins.
    std::string variant = "reduced";
    int roi_size = c.model.roi_size();
    for (const auto& [key, v] : j.items()) {
      if (key == "lr") c.lr = v.get<double>();
      else if (key == "optimizer") c.optimizer = v.get<std::string>();
      else if (key == "clip_len_min") c.clip_len_min = v.get<int>();
      else if (key == "clip_len_max") c.clip_len_max = v.get<int>();
      else if (key == "rounds_min") c.rounds_min = v.get<int>();
      else if (key == "rounds_max") c.rounds_max = v.get<int>();
      else if (key == "curriculum_ramp") c.curriculum_ramp = v.get<double>();
      else if (key == "patch_size") c.patch_size = v.get<int>();
      else if (key == "short_edge_resize") c.short_edge_resize = v.get<int>();
      else if (key == "augment") c.augment = v.get<bool>();
      else if (key == "iterations") c.iterations = v.get<long>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "pretrain_fraction") c.pretrain_fraction = v.get<double>();
      else if (key == "checkpoint_every") c.checkpoint_every = v.get<long>();
      else if (key == "toy_videos") c.toy_videos = v.get<int>();
      else if (key == "toy_frames") c.toy_frames = v.get<int>();
      else if (key == "toy_size") c.toy_size = v.get<int>();
      else if (key == "toy_objects") c.toy_objects = v.get<int>();
      else if (key == "toy_seed") c.toy_seed = v.get<std::uint64_t>();
      else if (key == "variant") variant = v.get<std::string>();
      else if (key == "roi_size") roi_size = v.get<int>();
      else if (key != "model") throw ConfigError("unknown training config key: " + key);
    }
    if (variant != "reduced" && variant != "full") throw ConfigError("unknown variant " + variant);
    c.model = variant == "full" ? nets::ModelConfig::full(roi_size) : nets::ModelConfig::reduced(roi_size);
    if (j.contains("model")) c.model = nets::model_config_from_json(j.at("model"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return train_config_from_json(j);
}

torch::Tensor masked_bce_loss(const torch::Tensor& pred, const torch::Tensor& gt) {
  if (pred.sizes() != gt.sizes()) throw ShapeError("masked_bce_loss: shapes differ");
  const auto p = pred.clamp(1e-6, 1.0 - 1e-6);
  return -(gt * torch::log(p) + (1.0 - gt) * torch::log(1.0 - p)).mean();
}

double StepResult::mean_loss() const {
  if (losses.empty()) return 0.0;
  double s = 0.0;
  for (const auto& l : losses) s += l.loss;
  return s / static_cast<double>(losses.size());
}

namespace {

LabelMask binary_labels(const LabelMask& gt, int object_id) {
  LabelMask out{Grid<std::uint8_t>(gt.height(), gt.width(), 0), 1};
  for (std::size_t i = 0; i < out.labels.size(); ++i) out.labels[i] = gt.labels[i] == object_id ? 1 : 0;
  return out;
}

LabelMask estimate_labels(const ProbMask& m) {
  LabelMask out{threshold(m), 1};
  return out;
}

}  // namespace

StepResult multiround_train_step(nets::IpnModel& model, torch::optim::Optimizer& optimizer,
                                 const ClipSample& clip, int rounds, std::mt19937_64& rng,
                                 const StepOptions& opts) {
  if (rounds < 1) throw ArgumentError("rounds must be >= 1");
  const int n = clip.length();
  if (n < 1 || static_cast<int>(clip.gts.size()) != n) throw ArgumentError("clip frames and masks differ");
  if (clip.object_ids.empty()) throw ArgumentError("clip has no target object");
  const int h = clip.frames.front().height();
  const int w = clip.frames.front().width();
  const int roi_size = model->config().roi_size();
  model->train();

  StepResult result;
  result.target_object = clip.object_ids[std::uniform_int_distribution<std::size_t>(
      0, clip.object_ids.size() - 1)(rng)];
  std::vector<LabelMask> gt;
  std::vector<BinaryMap> region;
  for (const auto& g : clip.gts) {
    gt.push_back(binary_labels(g, result.target_object));
    region.push_back(gt.back().labels);
  }

  auto update = [&](const torch::Tensor& loss, int round, int frame, StepKind kind) {
    const double value = loss.item<double>();
    if (!std::isfinite(value)) {
      std::ostringstream msg;
      msg << "non-finite loss at iteration " << opts.iteration << ", round " << round << ", frame "
          << frame;
      throw TrainingError(msg.str());
    }
    optimizer.zero_grad();
    loss.backward();
    if (opts.record_gradients) {
      for (const auto& p : model->named_parameters()) {
        const auto& g = p.value().grad();
        if (g.defined() && g.abs().sum().item<double>() > 0.0) result.params_with_gradient.insert(p.key());
      }
    }
    optimizer.step();
    result.losses.push_back({round, frame, kind, value});
  };

  std::vector<std::optional<ProbMask>> prev_round(static_cast<std::size_t>(n));
  std::optional<nets::AggregatedFeature> aggregated;
  for (int r = 1; r <= rounds; ++r) {
    int t = 0;
    std::vector<LabelMask> estimates;
    if (r == 1) {
      std::vector<int> candidates;
      for (int f = 0; f < n; ++f) {
        if (std::find(region[f].values().begin(), region[f].values().end(), 1) != region[f].values().end()) {
          candidates.push_back(f);
        }
      }
      if (candidates.empty()) candidates.push_back(0);
      t = candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];
    } else {
      for (const auto& m : prev_round) estimates.push_back(estimate_labels(*m));
      t = scribble::select_worst_frame(estimates, gt, 1);
    }
    const auto strokes = scribble::synthesize_round_scribbles(r == 1 ? nullptr : &estimates[t], gt[t],
                                                              {1}, r, t, rng);
    const auto maps = scribble::rasterize(strokes, h, w);
    const auto it = maps.find(1);

    std::vector<ProbMask> current(static_cast<std::size_t>(n));
    const auto in = steps::prepare_interaction(clip.frames[t], prev_round[t] ? &*prev_round[t] : nullptr,
                                               it == maps.end() ? nullptr : &it->second, roi_size, r == 1);
    const auto out = nets::interaction_forward(model, in.frame, in.prev_round, in.pos, in.neg);
    update(masked_bce_loss(out.prob, steps::roi_target(region[t], in.roi)), r, t, StepKind::kInteraction);
    current[t] = steps::paste_prediction(out.prob, in.roi, h, w, 1);
    const auto reference = out.reference.detach();

    auto propagate = [&](int f, int from) {
      const auto pin = steps::prepare_propagation(clip.frames[f], current[from],
                                                  prev_round[f] ? &*prev_round[f] : nullptr, roi_size);
      const auto agg = nets::aggregate_features(model, aggregated, reference);
      const auto pout = nets::propagation_forward(model, pin.frame, pin.prev_frame, pin.prev_round, agg);
      update(masked_bce_loss(pout.prob, steps::roi_target(region[f], pin.roi)), r, f, StepKind::kPropagation);
      current[f] = steps::paste_prediction(pout.prob, pin.roi, h, w, 1);
    };
    for (int f = t + 1; f < n; ++f) propagate(f, f - 1);
    for (int f = t - 1; f >= 0; --f) propagate(f, f + 1);

    {
      torch::NoGradGuard no_grad;
      auto next = nets::aggregate_features(model, aggregated, reference);
      next.map = next.map.detach();
      aggregated = next;
    }
    for (int f = 0; f < n; ++f) prev_round[f] = std::move(current[f]);
  }
  return result;
}

std::vector<Video> toy_corpus(int count, int frames, int size, int objects, std::uint64_t seed) {
  std::vector<Video> out;
  for (int i = 0; i < count; ++i) {
    ToyVideoSpec spec;
    spec.num_frames = frames;
    spec.h = size;
    spec.w = size;
    spec.num_objects = objects;
    out.push_back(generate_toy_video(spec, seed + static_cast<std::uint64_t>(i)));
  }
  return out;
}

Trainer::Trainer(const TrainConfig& config, std::vector<Video> videos)
    : config_(config), videos_(std::move(videos)), rng_(config.seed ^ 0x5851f42d4c957f2dULL) {
  config_.validate();
  if (videos_.empty()) throw ArgumentError("trainer needs at least one video");
  for (const auto& v : videos_) {
    if (v.length() < config_.clip_len_max) throw ArgumentError("training video shorter than clip_len_max");
  }
  model_ = nets::init_params(config_.model, config_.seed);
  optimizer_ = std::make_unique<torch::optim::Adam>(model_->parameters(),
                                                    torch::optim::AdamOptions(config_.lr));
}

IterationLog Trainer::step() {
  const auto cur = curriculum_schedule(iteration_, config_.iterations, config_.clip_len_min,
                                       config_.clip_len_max, config_.rounds_min, config_.rounds_max,
                                       config_.curriculum_ramp);
  const auto& video = videos_[std::uniform_int_distribution<std::size_t>(0, videos_.size() - 1)(rng_)];
  std::optional<ClipSample> clip;
  if (config_.pretrain_fraction > 0.0 &&
      std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < config_.pretrain_fraction) {
    const int f = std::uniform_int_distribution<int>(0, video.length() - 1)(rng_);
    clip = synthesize_pretrain_pair(video.frames[f], video.gts[f], rng_);
    if (clip && config_.augment) jitter_colors(clip->frames, rng_);
  }
  if (!clip) {
    ClipOptions opts;
    opts.short_edge = config_.short_edge_resize;
    opts.patch_size = config_.patch_size;
    opts.augment = config_.augment;
    clip = sample_training_clip(video, cur.clip_len, rng_, opts);
  }
  StepOptions opts;
  opts.iteration = iteration_;
  const auto res = multiround_train_step(model_, *optimizer_, *clip, cur.rounds, rng_, opts);
  IterationLog log{iteration_, res.mean_loss(), clip->length(), cur.rounds};
  history_.push_back(log);
  ++iteration_;
  return log;
}

void Trainer::save(const std::filesystem::path& path) {
  nets::CheckpointMeta meta;
  meta.config = config_.model;
  meta.seed = config_.seed;
  meta.iteration = iteration_;
  meta.extra = {{"train_config", to_json(config_)}};
  nets::save_checkpoint(model_, meta, path);
}

void Trainer::run(const std::filesystem::path& out_dir,
                  const std::function<void(const IterationLog&)>& on_iteration) {
  std::ofstream csv;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    csv.open(out_dir / "loss.csv");
    if (!csv) throw IoError("cannot write " + (out_dir / "loss.csv").string());
    csv << "iteration,loss,N,R\n";
  }
  while (iteration_ < config_.iterations) {
    const auto log = step();
    if (csv.is_open()) csv << log.iteration << ',' << log.loss << ',' << log.clip_len << ',' << log.rounds << '\n';
    if (on_iteration) on_iteration(log);
    if (!out_dir.empty() && config_.checkpoint_every > 0 && iteration_ % config_.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "ckpt_%06ld.ckpt", iteration_);
      save(out_dir / name);
      csv.flush();
    }
  }
  if (!out_dir.empty()) save(out_dir / "model.ckpt");
}

}  // namespace ipn::train
