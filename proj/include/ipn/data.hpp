#pragma once

#include <filesystem>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "ipn/seg_core.hpp"

namespace ipn::train {

/// Frames with exact per-pixel object labels.
struct Video {
  std::vector<Frame> frames;
  std::vector<LabelMask> gts;
  int num_objects = 0;

  int length() const { return static_cast<int>(frames.size()); }
};

enum class ShapeKind { kEllipse, kPolygon };

struct ToyVideoSpec {
  int num_frames = 16;
  int h = 128;
  int w = 128;
  int num_objects = 1;
  std::vector<ShapeKind> shape_kinds{ShapeKind::kEllipse, ShapeKind::kPolygon};
  /// Peak displacement of an object center as a fraction of the short side.
  double motion_amplitude = 0.15;
  std::uint64_t background_seed = 0;
};

/// Textured shapes moving over a textured background; labels are exact by
/// construction and later objects occlude earlier ones.
Video generate_toy_video(const ToyVideoSpec& spec, std::uint64_t seed);

/// 2x3 forward map: x' = m[0] x + m[1] y + m[2], y' = m[3] x + m[4] y + m[5],
/// in continuous pixel coordinates.
struct Affine {
  double m[6] = {1, 0, 0, 0, 1, 0};

  static Affine identity() { return {}; }
  static Affine translation(double dx, double dy);
  /// Rotation (degrees) and uniform scale about (cx, cy), then a shift.
  static Affine similarity(double deg, double scale, double cx, double cy, double dx, double dy);
  Affine inverse() const;
  std::pair<double, double> apply(double x, double y) const;
};

Frame warp_frame(const Frame& src, const Affine& forward, float pad = 0.0f);
LabelMask warp_labels(const LabelMask& src, const Affine& forward);

struct ClipSample {
  std::vector<Frame> frames;
  std::vector<LabelMask> gts;
  std::vector<int> object_ids;
  std::vector<int> source_indices;

  int length() const { return static_cast<int>(frames.size()); }
};

struct PairTransforms {
  Affine background;
  std::vector<Affine> objects;  // one per object id 1..M, in compositing order
};

inline constexpr int kMinPretrainArea = 100;

/// Reference/target pair from one annotated image: objects are re-placed by
/// their own affine over a perturbed, object-free background. Returns nullopt
/// when no object reaches kMinPretrainArea pixels.
std::optional<ClipSample> synthesize_pretrain_pair(const Frame& image, const LabelMask& mask,
                                                   std::mt19937_64& rng);
std::optional<ClipSample> compose_pretrain_pair(const Frame& image, const LabelMask& mask,
                                                const PairTransforms& transforms);

struct ClipOptions {
  int short_edge = 480;
  int patch_size = 400;
  bool augment = true;
  /// Adds clip-wide color jitter on top of the affine when augmenting.
  bool photometric = true;
  /// Forces the frame stride instead of drawing it from {1,2,3}.
  int skip = 0;
  int min_object_area = 20;
};

/// Same random channel permutation, per-channel gain and offset, and
/// optional inversion applied to every frame.
void jitter_colors(std::vector<Frame>& frames, std::mt19937_64& rng);

/// N frames at a common random stride, one random window for the whole clip,
/// and one clip-wide random affine.
ClipSample sample_training_clip(const Video& video, int n, std::mt19937_64& rng,
                                const ClipOptions& opts = {});

Frame resize_frame(const Frame& src, int h, int w);
LabelMask resize_labels(const LabelMask& src, int h, int w);

struct Curriculum {
  int clip_len = 4;
  int rounds = 1;
  friend bool operator==(const Curriculum&, const Curriculum&) = default;
};

/// Clip length 4 -> 8 and rounds 1 -> 3, linear in iteration, saturating at
/// `ramp` of the total.
Curriculum curriculum_schedule(long iteration, long total, int len_min = 4, int len_max = 8,
                               int rounds_min = 1, int rounds_max = 3, double ramp = 0.8);

/// <dir>/frames/NNNNN.png and <dir>/gt/NNNNN.png (indexed).
void save_video(const Video& video, const std::filesystem::path& dir);
Video load_video(const std::filesystem::path& dir);
/// Frames only, sorted by file name.
std::vector<Frame> load_frames(const std::filesystem::path& dir);

}  // namespace ipn::train
