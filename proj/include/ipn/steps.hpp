#pragma once

#include <optional>
#include <vector>

#include <torch/torch.h>

#include "ipn/networks.hpp"
#include "ipn/roi.hpp"
#include "ipn/scribble.hpp"
#include "ipn/seg_core.hpp"

// Glue between full-resolution image state and the ROI-space networks,
// shared by training and interactive sessions.
namespace ipn::steps {

/// Smallest side of a guidance ROI box, in image pixels.
inline constexpr double kMinRoiSide = 16.0;

/// [1, C, H, W] float tensor from same-sized planes.
torch::Tensor to_tensor(const std::vector<Grid<float>>& planes);
/// Copies a [1,1,H,W] or [H,W] tensor into a grid.
Grid<float> to_grid(const torch::Tensor& t);
std::vector<Grid<float>> frame_planes(const Frame& frame);

/// Doubled guidance box grown to kMinRoiSide, or the whole image.
roi::Roi make_roi(const std::optional<roi::Box>& tight, int h, int w, int roi_size);

struct InteractionInput {
  roi::Roi roi;
  torch::Tensor frame, prev_round, pos, neg;
};

/// `prev_round` null means no estimate yet (neutral, and no guidance);
/// `scribbles` null means no strokes for this object.
InteractionInput prepare_interaction(const Frame& frame, const ProbMask* prev_round,
                                     const scribble::ObjectScribbleMaps* scribbles, int roi_size,
                                     bool whole_image);

struct PropagationInput {
  roi::Roi roi;
  torch::Tensor frame, prev_frame, prev_round;
};

PropagationInput prepare_propagation(const Frame& frame, const ProbMask& prev_frame,
                                     const ProbMask* prev_round, int roi_size);

/// Pastes an ROI prediction into an all-zero full-resolution mask.
ProbMask paste_prediction(const torch::Tensor& prob, const roi::Roi& roi, int h, int w,
                          int object_id);

/// Binary target in ROI space: warped region thresholded at 0.5.
torch::Tensor roi_target(const BinaryMap& region, const roi::Roi& roi);

}  // namespace ipn::steps
