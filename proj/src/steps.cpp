#include "ipn/steps.hpp"

#include <algorithm>
#include <cstring>

namespace ipn::steps {

torch::Tensor to_tensor(const std::vector<Grid<float>>& planes) {
  if (planes.empty()) throw ArgumentError("to_tensor: no planes");
  const int h = planes.front().height();
  const int w = planes.front().width();
  auto t = torch::empty({1, static_cast<int64_t>(planes.size()), h, w}, torch::kFloat32);
  float* dst = t.data_ptr<float>();
  for (const auto& p : planes) {
    if (p.height() != h || p.width() != w) throw DimensionError("to_tensor: plane sizes differ");
    std::memcpy(dst, p.values().data(), p.size() * sizeof(float));
    dst += p.size();
  }
  return t;
}

Grid<float> to_grid(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  if (c.dim() == 4 && c.size(0) == 1 && c.size(1) == 1) c = c.view({c.size(2), c.size(3)});
  if (c.dim() != 2) throw ShapeError("to_grid: expected a single plane");
  Grid<float> g(static_cast<int>(c.size(0)), static_cast<int>(c.size(1)));
  std::memcpy(g.values().data(), c.data_ptr<float>(), g.size() * sizeof(float));
  return g;
}

std::vector<Grid<float>> frame_planes(const Frame& frame) {
  std::vector<Grid<float>> out;
  for (int ch = 0; ch < 3; ++ch) {
    Grid<float> g(frame.height(), frame.width());
    const auto src = frame.plane(ch);
    std::copy(src.begin(), src.end(), g.values().begin());
    out.push_back(std::move(g));
  }
  return out;
}

roi::Roi make_roi(const std::optional<roi::Box>& tight, int h, int w, int roi_size) {
  auto r = roi::roi_from_guidance(tight, h, w, roi_size);
  if (!tight) return r;
  auto& b = r.box;
  if (b.width() < kMinRoiSide) {
    const double cx = b.center_x();
    b.x0 = cx - 0.5 * kMinRoiSide;
    b.x1 = cx + 0.5 * kMinRoiSide;
  }
  if (b.height() < kMinRoiSide) {
    const double cy = b.center_y();
    b.y0 = cy - 0.5 * kMinRoiSide;
    b.y1 = cy + 0.5 * kMinRoiSide;
  }
  return r;
}

namespace {

torch::Tensor warp_frame_tensor(const Frame& frame, const roi::Roi& roi) {
  const auto planes = frame_planes(frame);
  std::vector<roi::Channel> chans;
  for (const auto& p : planes) chans.push_back({&p, 0.0f});
  return to_tensor(roi::warp_to_roi(chans, roi));
}

torch::Tensor warp_plane(const Grid<float>& plane, const roi::Roi& roi, float pad) {
  return to_tensor({roi::warp_to_roi(plane, roi, pad)});
}

}  // namespace

InteractionInput prepare_interaction(const Frame& frame, const ProbMask* prev_round,
                                     const scribble::ObjectScribbleMaps* scribbles, int roi_size,
                                     bool whole_image) {
  const int h = frame.height();
  const int w = frame.width();
  std::optional<roi::Box> tight;
  if (!whole_image) {
    tight = roi::guidance_bbox(scribbles ? &scribbles->pos : nullptr,
                               scribbles ? &scribbles->neg : nullptr, nullptr, prev_round);
  }
  InteractionInput in;
  in.roi = make_roi(tight, h, w, roi_size);
  in.frame = warp_frame_tensor(frame, in.roi);
  const ProbMask neutral = prev_round ? ProbMask{} : neutral_mask(h, w, 1);
  in.prev_round = warp_plane(prev_round ? prev_round->values : neutral.values, in.roi, roi::kNeutralPad);
  if (scribbles) {
    in.pos = warp_plane(roi::to_float(scribbles->pos), in.roi, 0.0f);
    in.neg = warp_plane(roi::to_float(scribbles->neg), in.roi, 0.0f);
  } else {
    in.pos = torch::zeros({1, 1, roi_size, roi_size});
    in.neg = torch::zeros({1, 1, roi_size, roi_size});
  }
  return in;
}

PropagationInput prepare_propagation(const Frame& frame, const ProbMask& prev_frame,
                                     const ProbMask* prev_round, int roi_size) {
  const int h = frame.height();
  const int w = frame.width();
  PropagationInput in;
  in.roi = make_roi(roi::guidance_bbox(nullptr, nullptr, &prev_frame, prev_round), h, w, roi_size);
  in.frame = warp_frame_tensor(frame, in.roi);
  in.prev_frame = warp_plane(prev_frame.values, in.roi, roi::kNeutralPad);
  const ProbMask neutral = prev_round ? ProbMask{} : neutral_mask(h, w, 1);
  in.prev_round = warp_plane(prev_round ? prev_round->values : neutral.values, in.roi, roi::kNeutralPad);
  return in;
}

ProbMask paste_prediction(const torch::Tensor& prob, const roi::Roi& roi, int h, int w,
                          int object_id) {
  ProbMask zeros{Grid<float>(h, w, 0.0f), object_id};
  return roi::paste_from_roi(to_grid(prob), roi, zeros);
}

torch::Tensor roi_target(const BinaryMap& region, const roi::Roi& roi) {
  auto warped = roi::warp_to_roi(roi::to_float(region), roi, 0.0f);
  for (auto& v : warped.values()) v = v >= 0.5f ? 1.0f : 0.0f;
  return to_tensor({warped});
}

}  // namespace ipn::steps
