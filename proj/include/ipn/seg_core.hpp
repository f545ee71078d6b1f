#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "ipn/errors.hpp"

namespace ipn {

/// Dense row-major 2-D array.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, T fill = T{})
      : h_(height), w_(width), data_(checked_size(height, width), fill) {}

  int height() const { return h_; }
  int width() const { return w_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int row, int col) { return data_[static_cast<std::size_t>(row) * w_ + col]; }
  const T& operator()(int row, int col) const {
    return data_[static_cast<std::size_t>(row) * w_ + col];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  bool contains(int row, int col) const { return row >= 0 && col >= 0 && row < h_ && col < w_; }
  bool same_shape(const Grid& other) const { return h_ == other.h_ && w_ == other.w_; }
  template <typename U>
  bool same_shape(const Grid<U>& other) const {
    return h_ == other.height() && w_ == other.width();
  }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.h_ == b.h_ && a.w_ == b.w_ && a.data_ == b.data_;
  }

 private:
  static std::size_t checked_size(int h, int w) {
    if (h < 1 || w < 1) throw DimensionError("grid dimensions must be positive");
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }

  int h_ = 0;
  int w_ = 0;
  std::vector<T> data_;
};

using BinaryMap = Grid<std::uint8_t>;

/// Planar RGB image with values in [0,1], stored channel-first.
class Frame {
 public:
  Frame() = default;
  Frame(int height, int width, int index = 0);

  int height() const { return h_; }
  int width() const { return w_; }
  int index() const { return index_; }
  void set_index(int index) { index_ = index; }

  float& at(int channel, int row, int col) {
    return pixels_[(static_cast<std::size_t>(channel) * h_ + row) * w_ + col];
  }
  float at(int channel, int row, int col) const {
    return pixels_[(static_cast<std::size_t>(channel) * h_ + row) * w_ + col];
  }

  /// One color plane as a contiguous H*W span.
  std::span<const float> plane(int channel) const;
  std::span<float> plane(int channel);
  std::span<const float> data() const { return pixels_; }
  std::span<float> data() { return pixels_; }

  friend bool operator==(const Frame& a, const Frame& b) {
    return a.h_ == b.h_ && a.w_ == b.w_ && a.pixels_ == b.pixels_;
  }

 private:
  int h_ = 0;
  int w_ = 0;
  int index_ = 0;
  std::vector<float> pixels_;
};

/// Foreground probability of one object on one frame.
struct ProbMask {
  Grid<float> values;
  int object_id = 1;

  int height() const { return values.height(); }
  int width() const { return values.width(); }
};

/// Per-pixel object labels, 0 is background.
struct LabelMask {
  Grid<std::uint8_t> labels;
  int num_objects = 0;

  int height() const { return labels.height(); }
  int width() const { return labels.width(); }
  friend bool operator==(const LabelMask&, const LabelMask&) = default;
};

/// (M+1) x H x W distribution over background and M objects.
class MultiObjectProbs {
 public:
  MultiObjectProbs() = default;
  MultiObjectProbs(int num_objects, int height, int width);

  int num_objects() const { return m_; }
  int height() const { return h_; }
  int width() const { return w_; }

  float& at(int channel, int row, int col) {
    return dist_[(static_cast<std::size_t>(channel) * h_ + row) * w_ + col];
  }
  float at(int channel, int row, int col) const {
    return dist_[(static_cast<std::size_t>(channel) * h_ + row) * w_ + col];
  }
  /// Channel c (0 = background) as a probability mask.
  ProbMask channel(int c) const;

 private:
  int m_ = 0;
  int h_ = 0;
  int w_ = 0;
  std::vector<float> dist_;
};

inline constexpr double kAggregationEpsilon = 1e-5;

ProbMask neutral_mask(int h, int w, int object_id);

/// Intersection over union of the pixels labelled `object_id` in a and b.
/// Both empty counts as a perfect match.
double jaccard(const LabelMask& a, const LabelMask& b, int object_id);
double jaccard(const BinaryMap& a, const BinaryMap& b);

/// Odds-normalized merge of independent per-object probabilities.
MultiObjectProbs soft_aggregate(std::span<const ProbMask> per_object);

/// Per-pixel most probable channel; ties go to the lower channel.
LabelMask argmax_label(const MultiObjectProbs& dist);

/// w * fresh + (1 - w) * prev.
ProbMask blend(const ProbMask& fresh, const ProbMask& prev, double w);

/// Pixels of `labels` equal to `object_id`.
BinaryMap object_region(const LabelMask& labels, int object_id);

/// Pixels with probability >= threshold.
BinaryMap threshold(const ProbMask& mask, float thresh = 0.5f);

LabelMask background_labels(int h, int w, int num_objects);

}  // namespace ipn
