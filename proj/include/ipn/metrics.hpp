#pragma once

#include <vector>

#include "ipn/seg_core.hpp"

namespace ipn::eval {

struct TimedPoint {
  double t = 0.0;  // seconds since the evaluation started
  double j = 0.0;  // mean Jaccard over frames and objects
};

/// Mean over objects of the per-object mean-over-frames Jaccard.
double mean_jaccard_video(const std::vector<LabelMask>& preds, const std::vector<LabelMask>& gts,
                          int num_objects);

/// Normalized area under the J-vs-time curve on [0, budget_s]. The first
/// value is held back to t = 0 and the last one forward to the budget.
double auc(const std::vector<TimedPoint>& curve, double budget_s);

/// Curve value at t_query by linear interpolation, held beyond the ends.
double j_at(const std::vector<TimedPoint>& curve, double t_query);

}  // namespace ipn::eval
