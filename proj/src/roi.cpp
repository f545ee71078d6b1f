#include "ipn/roi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ipn::roi {

namespace {

struct Extent {
  int r0 = std::numeric_limits<int>::max();
  int c0 = std::numeric_limits<int>::max();
  int r1 = -1;
  int c1 = -1;

  void add(int r, int c) {
    r0 = std::min(r0, r);
    c0 = std::min(c0, c);
    r1 = std::max(r1, r);
    c1 = std::max(c1, c);
  }
  bool empty() const { return r1 < 0; }
};

// Bilinear read at a continuous image position. Positions outside the image
// read `pad`; inside, the half-pixel border clamps to the edge pixels.
float sample(const Grid<float>& g, double x, double y, float pad) {
  const int h = g.height();
  const int w = g.width();
  if (x < 0.0 || y < 0.0 || x >= w || y >= h) return pad;
  const double u = std::clamp(x - 0.5, 0.0, static_cast<double>(w - 1));
  const double v = std::clamp(y - 0.5, 0.0, static_cast<double>(h - 1));
  const int c0 = static_cast<int>(std::floor(u));
  const int r0 = static_cast<int>(std::floor(v));
  const int c1 = std::min(c0 + 1, w - 1);
  const int r1 = std::min(r0 + 1, h - 1);
  const double fu = u - c0;
  const double fv = v - r0;
  const double top = (1.0 - fu) * g(r0, c0) + fu * g(r0, c1);
  const double bot = (1.0 - fu) * g(r1, c0) + fu * g(r1, c1);
  return static_cast<float>((1.0 - fv) * top + fv * bot);
}

}  // namespace

std::optional<Box> guidance_bbox(const BinaryMap* pos_scrib, const BinaryMap* neg_scrib,
                                 const ProbMask* prev_frame_mask, const ProbMask* prev_round_mask,
                                 float mask_threshold) {
  int h = -1;
  int w = -1;
  auto check = [&](int mh, int mw) {
    if (h < 0) {
      h = mh;
      w = mw;
    } else if (mh != h || mw != w) {
      throw DimensionError("guidance maps differ in size");
    }
  };
  if (pos_scrib) check(pos_scrib->height(), pos_scrib->width());
  if (neg_scrib) check(neg_scrib->height(), neg_scrib->width());
  if (prev_frame_mask) check(prev_frame_mask->height(), prev_frame_mask->width());
  if (prev_round_mask) check(prev_round_mask->height(), prev_round_mask->width());
  if (h < 0) return std::nullopt;

  Extent ext;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const bool hit = (pos_scrib && (*pos_scrib)(r, c)) || (neg_scrib && (*neg_scrib)(r, c)) ||
                       (prev_frame_mask && prev_frame_mask->values(r, c) >= mask_threshold) ||
                       (prev_round_mask && prev_round_mask->values(r, c) >= mask_threshold);
      if (hit) ext.add(r, c);
    }
  }
  if (ext.empty()) return std::nullopt;
  return Box{static_cast<double>(ext.c0), static_cast<double>(ext.r0),
             static_cast<double>(ext.c1 + 1), static_cast<double>(ext.r1 + 1)};
}

Box expand_box(const Box& tight) {
  const double hw = tight.width();
  const double hh = tight.height();
  return Box{tight.x0 - 0.5 * hw, tight.y0 - 0.5 * hh, tight.x1 + 0.5 * hw, tight.y1 + 0.5 * hh};
}

Roi first_round_roi(int h, int w, int out_size) {
  if (h < 1 || w < 1) throw DimensionError("roi image dimensions must be positive");
  return Roi{Box{0.0, 0.0, static_cast<double>(w), static_cast<double>(h)}, out_size, out_size};
}

Roi roi_from_guidance(const std::optional<Box>& tight, int h, int w, int out_size) {
  if (!tight) return first_round_roi(h, w, out_size);
  return Roi{expand_box(*tight), out_size, out_size};
}

Grid<float> warp_to_roi(const Grid<float>& plane, const Roi& roi, float pad) {
  Grid<float> out(roi.out_h, roi.out_w);
  const double sx = roi.box.width() / roi.out_w;
  const double sy = roi.box.height() / roi.out_h;
  for (int i = 0; i < roi.out_h; ++i) {
    const double y = roi.box.y0 + (i + 0.5) * sy;
    for (int j = 0; j < roi.out_w; ++j) {
      const double x = roi.box.x0 + (j + 0.5) * sx;
      out(i, j) = sample(plane, x, y, pad);
    }
  }
  return out;
}

std::vector<Grid<float>> warp_to_roi(const std::vector<Channel>& channels, const Roi& roi) {
  std::vector<Grid<float>> out;
  out.reserve(channels.size());
  for (const auto& ch : channels) out.push_back(warp_to_roi(*ch.plane, roi, ch.pad));
  return out;
}

ProbMask paste_from_roi(const Grid<float>& pred, const Roi& roi, const ProbMask& full) {
  ProbMask out = full;
  const int h = full.height();
  const int w = full.width();
  const double kx = roi.out_w / roi.box.width();
  const double ky = roi.out_h / roi.box.height();
  const int c_lo = std::max(0, static_cast<int>(std::floor(roi.box.x0)));
  const int r_lo = std::max(0, static_cast<int>(std::floor(roi.box.y0)));
  const int c_hi = std::min(w - 1, static_cast<int>(std::ceil(roi.box.x1)));
  const int r_hi = std::min(h - 1, static_cast<int>(std::ceil(roi.box.y1)));
  for (int r = r_lo; r <= r_hi; ++r) {
    const double cy = r + 0.5;
    if (cy < roi.box.y0 || cy >= roi.box.y1) continue;
    for (int c = c_lo; c <= c_hi; ++c) {
      const double cx = c + 0.5;
      if (cx < roi.box.x0 || cx >= roi.box.x1) continue;
      // Position in roi pixel units, then shifted so pixel centers sit at +0.5.
      const double x = (cx - roi.box.x0) * kx;
      const double y = (cy - roi.box.y0) * ky;
      out.values(r, c) = sample(pred, x, y, 0.0f);
    }
  }
  return out;
}

Grid<float> to_float(const BinaryMap& map) {
  Grid<float> out(map.height(), map.width());
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = map[i] ? 1.0f : 0.0f;
  return out;
}

}  // namespace ipn::roi
