#include "ipn/seg_core.hpp"

#include <cmath>
#include <string>

namespace ipn {

Frame::Frame(int height, int width, int index) : h_(height), w_(width), index_(index) {
  if (height < 8 || width < 8) {
    throw DimensionError("frames must be at least 8x8, got " + std::to_string(height) + "x" +
                         std::to_string(width));
  }
  if (index < 0) throw ArgumentError("frame index must be non-negative");
  pixels_.assign(static_cast<std::size_t>(3) * height * width, 0.0f);
}

std::span<const float> Frame::plane(int channel) const {
  const std::size_t n = static_cast<std::size_t>(h_) * w_;
  return std::span<const float>(pixels_).subspan(channel * n, n);
}

std::span<float> Frame::plane(int channel) {
  const std::size_t n = static_cast<std::size_t>(h_) * w_;
  return std::span<float>(pixels_).subspan(channel * n, n);
}

MultiObjectProbs::MultiObjectProbs(int num_objects, int height, int width)
    : m_(num_objects), h_(height), w_(width) {
  if (num_objects < 1) throw ArgumentError("need at least one object");
  if (height < 1 || width < 1) throw DimensionError("distribution dimensions must be positive");
  dist_.assign(static_cast<std::size_t>(num_objects + 1) * height * width, 0.0f);
}

ProbMask MultiObjectProbs::channel(int c) const {
  if (c < 0 || c > m_) throw ArgumentError("channel out of range");
  ProbMask out{Grid<float>(h_, w_), c == 0 ? 1 : c};
  const std::size_t n = static_cast<std::size_t>(h_) * w_;
  std::copy_n(dist_.begin() + static_cast<std::ptrdiff_t>(c * n), n, out.values.values().begin());
  return out;
}

ProbMask neutral_mask(int h, int w, int object_id) {
  if (h < 1 || w < 1) throw DimensionError("neutral mask dimensions must be positive");
  return ProbMask{Grid<float>(h, w, 0.5f), object_id};
}

namespace {

template <typename Pred>
double iou_count(std::size_t n, Pred in_a_in_b) {
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto [a, b] = in_a_in_b(i);
    inter += (a && b) ? 1 : 0;
    uni += (a || b) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

double jaccard(const LabelMask& a, const LabelMask& b, int object_id) {
  if (!a.labels.same_shape(b.labels)) throw DimensionError("jaccard: mask sizes differ");
  const auto id = static_cast<std::uint8_t>(object_id);
  return iou_count(a.labels.size(), [&](std::size_t i) {
    return std::pair{a.labels[i] == id, b.labels[i] == id};
  });
}

double jaccard(const BinaryMap& a, const BinaryMap& b) {
  if (!a.same_shape(b)) throw DimensionError("jaccard: mask sizes differ");
  return iou_count(a.size(), [&](std::size_t i) { return std::pair{a[i] != 0, b[i] != 0}; });
}

MultiObjectProbs soft_aggregate(std::span<const ProbMask> per_object) {
  if (per_object.empty()) throw ArgumentError("soft_aggregate: empty object list");
  const int h = per_object.front().height();
  const int w = per_object.front().width();
  for (const auto& m : per_object) {
    if (m.height() != h || m.width() != w) throw DimensionError("soft_aggregate: mask sizes differ");
  }
  const int num = static_cast<int>(per_object.size());
  MultiObjectProbs out(num, h, w);
  std::vector<double> odds(num + 1);
  constexpr double eps = kAggregationEpsilon;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double bg = 1.0;
      for (int k = 0; k < num; ++k) {
        const double p = std::clamp(static_cast<double>(per_object[k].values(r, c)), eps, 1.0 - eps);
        odds[k + 1] = p / (1.0 - p);
        bg *= 1.0 - p;
      }
      bg = std::clamp(bg, eps, 1.0 - eps);
      odds[0] = bg / (1.0 - bg);
      double total = 0.0;
      for (double o : odds) total += o;
      for (int k = 0; k <= num; ++k) out.at(k, r, c) = static_cast<float>(odds[k] / total);
    }
  }
  return out;
}

LabelMask argmax_label(const MultiObjectProbs& dist) {
  LabelMask out{Grid<std::uint8_t>(dist.height(), dist.width()), dist.num_objects()};
  for (int r = 0; r < dist.height(); ++r) {
    for (int c = 0; c < dist.width(); ++c) {
      int best = 0;
      float best_p = dist.at(0, r, c);
      for (int k = 1; k <= dist.num_objects(); ++k) {
        if (dist.at(k, r, c) > best_p) {
          best_p = dist.at(k, r, c);
          best = k;
        }
      }
      out.labels(r, c) = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

ProbMask blend(const ProbMask& fresh, const ProbMask& prev, double w) {
  if (!(w >= 0.0 && w <= 1.0)) throw ArgumentError("blend weight must lie in [0,1]");
  if (!fresh.values.same_shape(prev.values)) throw DimensionError("blend: mask sizes differ");
  ProbMask out{Grid<float>(fresh.height(), fresh.width()), fresh.object_id};
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = static_cast<float>(w * fresh.values[i] + (1.0 - w) * prev.values[i]);
  }
  return out;
}

BinaryMap object_region(const LabelMask& labels, int object_id) {
  BinaryMap out(labels.height(), labels.width());
  const auto id = static_cast<std::uint8_t>(object_id);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = labels.labels[i] == id ? 1 : 0;
  return out;
}

BinaryMap threshold(const ProbMask& mask, float thresh) {
  BinaryMap out(mask.height(), mask.width());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mask.values[i] >= thresh ? 1 : 0;
  return out;
}

LabelMask background_labels(int h, int w, int num_objects) {
  return LabelMask{Grid<std::uint8_t>(h, w, 0), num_objects};
}

}  // namespace ipn
