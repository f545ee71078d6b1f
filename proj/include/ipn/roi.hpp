#pragma once

#include <optional>
#include <vector>

#include "ipn/seg_core.hpp"

namespace ipn::roi {

/// Half-open box in continuous image coordinates. Pixel (row, col) covers
/// [col, col+1) x [row, row+1) and has its center at (col+0.5, row+0.5).
struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double center_x() const { return 0.5 * (x0 + x1); }
  double center_y() const { return 0.5 * (y0 + y1); }
  friend bool operator==(const Box&, const Box&) = default;
};

inline constexpr int kDefaultRoiSize = 256;

struct Roi {
  Box box;
  int out_h = kDefaultRoiSize;
  int out_w = kDefaultRoiSize;
};

/// A stack of same-sized planes with the value read outside the image.
struct Channel {
  const Grid<float>* plane = nullptr;
  float pad = 0.0f;
};

inline constexpr float kNeutralPad = 0.5f;

/// Tight box around scribble pixels and mask pixels >= mask_threshold.
/// Any of the inputs may be null. Returns nullopt when nothing is set.
std::optional<Box> guidance_bbox(const BinaryMap* pos_scrib, const BinaryMap* neg_scrib,
                                 const ProbMask* prev_frame_mask, const ProbMask* prev_round_mask,
                                 float mask_threshold = 0.5f);

/// Doubles each side around the same center. Not clamped to the image.
Box expand_box(const Box& tight);

Roi first_round_roi(int h, int w, int out_size = kDefaultRoiSize);

/// Doubled guidance box, or the whole image when there is no guidance.
Roi roi_from_guidance(const std::optional<Box>& tight, int h, int w, int out_size);

/// Bilinear samples of one plane on a uniform out_h x out_w grid over roi.box.
Grid<float> warp_to_roi(const Grid<float>& plane, const Roi& roi, float pad = 0.0f);
std::vector<Grid<float>> warp_to_roi(const std::vector<Channel>& channels, const Roi& roi);

/// Inverse warp of an roi-space prediction; pixels whose center lies outside
/// the box keep the value from `full`.
ProbMask paste_from_roi(const Grid<float>& pred, const Roi& roi, const ProbMask& full);

Grid<float> to_float(const BinaryMap& map);

}  // namespace ipn::roi
