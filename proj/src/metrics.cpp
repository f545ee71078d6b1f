#include "ipn/metrics.hpp"

#include <algorithm>

namespace ipn::eval {

double mean_jaccard_video(const std::vector<LabelMask>& preds, const std::vector<LabelMask>& gts,
                          int num_objects) {
  if (preds.size() != gts.size()) throw DimensionError("mean_jaccard_video: frame counts differ");
  if (preds.empty()) throw ArgumentError("mean_jaccard_video: empty video");
  if (num_objects < 1) throw ArgumentError("mean_jaccard_video: need at least one object");
  double total = 0.0;
  for (int m = 1; m <= num_objects; ++m) {
    double per_object = 0.0;
    for (std::size_t t = 0; t < preds.size(); ++t) per_object += jaccard(preds[t], gts[t], m);
    total += per_object / static_cast<double>(preds.size());
  }
  return total / num_objects;
}

double j_at(const std::vector<TimedPoint>& curve, double t_query) {
  if (curve.empty()) throw ArgumentError("j_at: empty curve");
  if (t_query <= curve.front().t) return curve.front().j;
  if (t_query >= curve.back().t) return curve.back().j;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const auto& a = curve[i - 1];
    const auto& b = curve[i];
    if (t_query <= b.t) {
      if (t_query == b.t || b.t == a.t) return b.j;
      const double v = ((b.t - t_query) * a.j + (t_query - a.t) * b.j) / (b.t - a.t);
      return std::clamp(v, std::min(a.j, b.j), std::max(a.j, b.j));
    }
  }
  return curve.back().j;
}

double auc(const std::vector<TimedPoint>& curve, double budget_s) {
  if (curve.empty()) throw ArgumentError("auc: empty curve");
  if (!(budget_s > 0.0)) throw ArgumentError("auc: budget must be positive");
  // Knots of the held, piecewise-linear curve restricted to [0, budget].
  std::vector<TimedPoint> knots;
  knots.push_back({0.0, j_at(curve, 0.0)});
  for (const auto& p : curve) {
    if (p.t > 0.0 && p.t < budget_s) knots.push_back(p);
  }
  knots.push_back({budget_s, j_at(curve, budget_s)});
  double area = 0.0;
  for (std::size_t i = 1; i < knots.size(); ++i) {
    area += 0.5 * (knots[i].j + knots[i - 1].j) * (knots[i].t - knots[i - 1].t);
  }
  return area / budget_s;
}

}  // namespace ipn::eval
