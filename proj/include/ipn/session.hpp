#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "ipn/networks.hpp"
#include "ipn/scribble.hpp"
#include "ipn/seg_core.hpp"

namespace ipn {

struct PropagationPlan {
  std::vector<int> forward_range;   // t+1, t+2, ...
  std::vector<int> backward_range;  // t-1, t-2, ...
  /// frame -> (d, D): distance from the annotated frame and range length.
  std::map<int, std::pair<int, int>> distances;
};

/// Frames reached from annotated frame t before hitting a frame annotated in
/// an earlier round or the end of the video. Barrier frames are excluded and
/// t itself is never a barrier.
PropagationPlan plan_propagation(int t, const std::set<int>& history_frames, int num_frames);

enum class WeightFunction { kLinear, kGaussian };

/// Trust in the freshly propagated mask at distance d of a D-frame range.
/// Linear: (D - d + 1) / D. First-round blending is disabled (weight 1).
double blend_weight(int d, int span, bool first_round = false,
                    WeightFunction fn = WeightFunction::kLinear);

struct SessionConfig {
  WeightFunction weights = WeightFunction::kLinear;
  int brush_radius = scribble::kDefaultBrushRadius;
};

struct RoundRecord {
  int round = 0;
  int frame = 0;
  scribble::ScribbleSet scribbles;
  std::vector<int> changed_frames;
};

/// Call counts of the last run_round, per object.
struct RoundStats {
  int interaction_calls = 0;
  int propagation_calls = 0;
  std::map<int, std::vector<int>> propagated_frames;
};

/// Round-based interactive segmentation state for one video.
class Session {
 public:
  Session(std::vector<Frame> frames, int num_objects, SessionConfig config = {});

  int length() const { return static_cast<int>(frames_.size()); }
  int num_objects() const { return num_objects_; }
  int round() const { return static_cast<int>(labels_.size()) - 1; }
  int height() const { return frames_.front().height(); }
  int width() const { return frames_.front().width(); }
  const std::vector<Frame>& frames() const { return frames_; }
  const std::vector<RoundRecord>& history() const { return history_; }
  const SessionConfig& config() const { return config_; }

  /// Applies one user interaction and propagates it. Returns the record that
  /// was appended to the history.
  const RoundRecord& run_round(nets::IpnModel& model, const scribble::ScribbleSet& scribbles);

  /// Labels of every frame for a completed round; -1 means the latest.
  const std::vector<LabelMask>& get_masks(int round = -1) const;
  /// Soft-aggregated distribution of the latest round.
  const MultiObjectProbs& latest_probs(int frame) const;
  /// Channel `object_id` of the latest distribution, neutral before the
  /// object's first annotation.
  ProbMask object_mask(int frame, int object_id) const;
  /// Per-object masks of the latest round before soft aggregation.
  const ProbMask& last_estimate(int frame, int object_id) const;
  /// Interaction output pasted at the annotated frame in the latest round.
  const std::optional<ProbMask>& last_interaction(int object_id) const;
  const std::optional<nets::AggregatedFeature>& aggregated(int object_id) const;
  bool annotated(int object_id) const { return annotated_.count(object_id) > 0; }
  const RoundStats& last_stats() const { return stats_; }
  std::set<int> history_frames() const;

  /// Snapshot directory: frames/, masks/round_RRR/frame_TTTTT.png,
  /// masks/round_RRR/frame_TTTTT_obj_KK.png, scribbles/round_RRR.json,
  /// session.json and state.bin for resuming.
  void save(const std::filesystem::path& dir) const;
  /// Writes frames and session.json only; used right after creation.
  void save_frames(const std::filesystem::path& dir) const;
  /// Writes the files of the latest round and refreshes the metadata.
  void save_latest_round(const std::filesystem::path& dir) const;
  static Session load(const std::filesystem::path& dir, SessionConfig config = {});

 private:
  void check_object(int object_id) const;

  std::vector<Frame> frames_;
  int num_objects_;
  SessionConfig config_;
  std::vector<std::vector<LabelMask>> labels_;  // per round, round 0 included
  std::vector<MultiObjectProbs> dist_;          // latest round, empty at round 0
  std::vector<std::vector<ProbMask>> estimates_;  // [object-1][frame], latest round
  std::vector<std::optional<ProbMask>> interaction_;
  std::vector<std::optional<nets::AggregatedFeature>> aggregated_;
  std::set<int> annotated_;
  std::vector<RoundRecord> history_;
  RoundStats stats_;
};

}  // namespace ipn
