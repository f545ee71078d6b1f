#pragma once

#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ipn/seg_core.hpp"

namespace ipn::scribble {

enum class Sign { kPositive, kNegative };

struct Point {
  double x = 0.0;  // normalized column coordinate in [0,1]
  double y = 0.0;  // normalized row coordinate in [0,1]
  friend bool operator==(const Point&, const Point&) = default;
};

struct Scribble {
  std::vector<Point> points;
  int object_id = 1;
  Sign sign = Sign::kPositive;
  friend bool operator==(const Scribble&, const Scribble&) = default;
};

struct ScribbleSet {
  int frame_index = 0;
  std::vector<Scribble> scribbles;

  bool empty() const { return scribbles.empty(); }
  std::set<int> object_ids() const;
  friend bool operator==(const ScribbleSet&, const ScribbleSet&) = default;
};

/// {frame: int, scribbles: [{object_id, sign: "pos"|"neg", points: [[x,y],...]}]}
std::string to_json(const ScribbleSet& set);
/// Throws ArgumentError on malformed input.
ScribbleSet from_json(const std::string& text);

struct ObjectScribbleMaps {
  BinaryMap pos;
  BinaryMap neg;
};

inline constexpr int kDefaultBrushRadius = 2;
inline constexpr int kDefaultMaxStrokes = 3;

/// Draws every polyline as connected segments stamped with a disk brush.
/// Keyed by object id; objects without scribbles are absent.
std::map<int, ObjectScribbleMaps> rasterize(const ScribbleSet& set, int h, int w,
                                            int brush_radius_px = kDefaultBrushRadius);

// Region extraction and morphology.

struct ErrorRegions {
  BinaryMap false_negative;
  BinaryMap false_positive;
};

ErrorRegions error_regions(const LabelMask& pred, const LabelMask& gt, int object_id);

BinaryMap erode(const BinaryMap& region, int radius);
BinaryMap dilate(const BinaryMap& region, int radius);
BinaryMap open(const BinaryMap& region, int radius);

/// 8-connected component labels (0 = unset) and the number of components.
std::pair<Grid<int>, int> connected_components(const BinaryMap& region);

/// Repeated opening with a disk, dropping components smaller than
/// min_component_area.
BinaryMap clean_region(const BinaryMap& region, int kernel_radius = 1, int min_component_area = 9);

/// Guo-Hall parallel thinning to a one-pixel-wide skeleton.
BinaryMap skeletonize(const BinaryMap& region);

using Polyline = std::vector<Point>;

/// Pixel paths over the skeleton: endpoint-anchored traces first, then cycles.
std::vector<Polyline> trace_polylines(const BinaryMap& skeleton, int min_length_px = 3);

struct SynthesisOptions {
  int max_strokes = kDefaultMaxStrokes;
  int kernel_radius = 1;
  int min_component_area = 9;
  int min_length_px = 3;
};

/// Simulated annotator. Round 1 draws positive strokes inside each object;
/// later rounds draw positives on misses and negatives on false alarms.
ScribbleSet synthesize_round_scribbles(const LabelMask* pred, const LabelMask& gt,
                                       const std::vector<int>& object_ids, int round_index,
                                       int frame_index, std::mt19937_64& rng,
                                       const SynthesisOptions& opts = {});

/// Mean-over-objects Jaccard of every frame.
std::vector<double> frame_scores(const std::vector<LabelMask>& preds,
                                 const std::vector<LabelMask>& gts, int num_objects);

/// Frame with the lowest mean Jaccard; ties go to the lowest index.
int select_worst_frame(const std::vector<LabelMask>& preds, const std::vector<LabelMask>& gts,
                       int num_objects, const std::set<int>& exclude = {});
int select_worst_frame(const std::vector<double>& scores, const std::set<int>& exclude = {});

}  // namespace ipn::scribble
