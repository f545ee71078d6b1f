#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "ipn/data.hpp"
#include "ipn/networks.hpp"

namespace ipn::train {

struct TrainConfig {
  double lr = 1e-5;
  std::string optimizer = "adam";
  int clip_len_min = 4;
  int clip_len_max = 8;
  int rounds_min = 1;
  int rounds_max = 3;
  /// Fraction of the run after which the curriculum is at its maximum.
  double curriculum_ramp = 0.8;
  int patch_size = 400;
  int short_edge_resize = 480;
  bool augment = true;
  long iterations = 1000;
  std::uint64_t seed = 0;
  nets::ModelConfig model = nets::ModelConfig::reduced();
  /// Share of iterations drawn as single-step synthetic image pairs.
  double pretrain_fraction = 0.0;
  long checkpoint_every = 0;

  // Toy training corpus.
  int toy_videos = 5;
  int toy_frames = 16;
  int toy_size = 128;
  int toy_objects = 1;
  std::uint64_t toy_seed = 1000;

  void validate() const;
  /// 128x128 frames, 112 patches, roi 128, reduced backbone.
  static TrainConfig desk();
};

nlohmann::json to_json(const TrainConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);
TrainConfig load_train_config(const std::filesystem::path& path);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mean binary cross-entropy with predictions clamped to [1e-6, 1 - 1e-6].
torch::Tensor masked_bce_loss(const torch::Tensor& pred, const torch::Tensor& gt);

enum class StepKind { kInteraction, kPropagation };

struct LossEntry {
  int round = 1;
  int frame = 0;
  StepKind kind = StepKind::kInteraction;
  double loss = 0.0;
};

struct StepOptions {
  long iteration = 0;
  /// Collects the names of parameters that saw a nonzero gradient.
  bool record_gradients = false;
};

struct StepResult {
  std::vector<LossEntry> losses;
  int target_object = 1;
  std::set<std::string> params_with_gradient;

  double mean_loss() const;
};

/// One training iteration: `rounds` simulated interaction rounds on the clip,
/// each followed by propagation to both ends, with a parameter update after
/// every loss.
StepResult multiround_train_step(nets::IpnModel& model, torch::optim::Optimizer& optimizer,
                                 const ClipSample& clip, int rounds, std::mt19937_64& rng,
                                 const StepOptions& opts = {});

struct IterationLog {
  long iteration = 0;
  double loss = 0.0;
  int clip_len = 0;
  int rounds = 0;
};

class Trainer {
 public:
  Trainer(const TrainConfig& config, std::vector<Video> videos);

  /// Runs one curriculum-scheduled iteration and returns its log row.
  IterationLog step();
  /// Runs the remaining iterations. Writes loss.csv, periodic checkpoints and
  /// model.ckpt under out_dir when it is not empty.
  void run(const std::filesystem::path& out_dir,
           const std::function<void(const IterationLog&)>& on_iteration = {});

  nets::IpnModel& model() { return model_; }
  const std::vector<IterationLog>& history() const { return history_; }
  long iteration() const { return iteration_; }
  void save(const std::filesystem::path& path);

 private:
  TrainConfig config_;
  std::vector<Video> videos_;
  nets::IpnModel model_{nullptr};
  std::unique_ptr<torch::optim::Optimizer> optimizer_;
  std::mt19937_64 rng_;
  long iteration_ = 0;
  std::vector<IterationLog> history_;
};

/// Seeded toy corpus described by the config's toy_* fields.
std::vector<Video> toy_corpus(int count, int frames, int size, int objects, std::uint64_t seed);

}  // namespace ipn::train
