#include "ipn/scribble.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

namespace ipn::scribble {

using nlohmann::json;

std::set<int> ScribbleSet::object_ids() const {
  std::set<int> ids;
  for (const auto& s : scribbles) ids.insert(s.object_id);
  return ids;
}

std::string to_json(const ScribbleSet& set) {
  json j;
  j["frame"] = set.frame_index;
  j["scribbles"] = json::array();
  for (const auto& s : set.scribbles) {
    json pts = json::array();
    for (const auto& p : s.points) pts.push_back({p.x, p.y});
    j["scribbles"].push_back({{"object_id", s.object_id},
                              {"sign", s.sign == Sign::kPositive ? "pos" : "neg"},
                              {"points", std::move(pts)}});
  }
  return j.dump();
}

ScribbleSet from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ArgumentError(std::string("scribble JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("frame") || !j["frame"].is_number_integer()) {
    throw ArgumentError("scribble JSON: missing integer 'frame'");
  }
  ScribbleSet out;
  out.frame_index = j["frame"].get<int>();
  if (out.frame_index < 0) throw ArgumentError("scribble JSON: negative frame");
  if (!j.contains("scribbles") || !j["scribbles"].is_array()) {
    throw ArgumentError("scribble JSON: missing 'scribbles' array");
  }
  for (const auto& js : j["scribbles"]) {
    if (!js.is_object()) throw ArgumentError("scribble JSON: scribble must be an object");
    Scribble s;
    if (!js.contains("object_id") || !js["object_id"].is_number_integer()) {
      throw ArgumentError("scribble JSON: missing integer 'object_id'");
    }
    s.object_id = js["object_id"].get<int>();
    if (s.object_id < 1) throw ArgumentError("scribble JSON: object_id must be >= 1");
    const auto sign = js.value("sign", std::string{});
    if (sign == "pos") {
      s.sign = Sign::kPositive;
    } else if (sign == "neg") {
      s.sign = Sign::kNegative;
    } else {
      throw ArgumentError("scribble JSON: sign must be \"pos\" or \"neg\"");
    }
    if (!js.contains("points") || !js["points"].is_array()) {
      throw ArgumentError("scribble JSON: missing 'points'");
    }
    for (const auto& jp : js["points"]) {
      if (!jp.is_array() || jp.size() != 2 || !jp[0].is_number() || !jp[1].is_number()) {
        throw ArgumentError("scribble JSON: point must be [x, y]");
      }
      const Point p{jp[0].get<double>(), jp[1].get<double>()};
      if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0)) {
        throw ArgumentError("scribble JSON: point outside the normalized [0,1] range");
      }
      s.points.push_back(p);
    }
    if (s.points.size() < 2) throw ArgumentError("scribble JSON: a scribble needs >= 2 points");
    out.scribbles.push_back(std::move(s));
  }
  return out;
}

namespace {

void stamp_disk(BinaryMap& map, int row, int col, int radius) {
  for (int dr = -radius; dr <= radius; ++dr) {
    for (int dc = -radius; dc <= radius; ++dc) {
      if (dr * dr + dc * dc > radius * radius) continue;
      if (map.contains(row + dr, col + dc)) map(row + dr, col + dc) = 1;
    }
  }
}

std::pair<int, int> to_pixel(const Point& p, int h, int w) {
  const int col = std::clamp(static_cast<int>(std::floor(p.x * w)), 0, w - 1);
  const int row = std::clamp(static_cast<int>(std::floor(p.y * h)), 0, h - 1);
  return {row, col};
}

void draw_segment(BinaryMap& map, std::pair<int, int> a, std::pair<int, int> b, int radius) {
  auto [r0, c0] = a;
  const auto [r1, c1] = b;
  const int dc = std::abs(c1 - c0);
  const int dr = -std::abs(r1 - r0);
  const int sc = c0 < c1 ? 1 : -1;
  const int sr = r0 < r1 ? 1 : -1;
  int err = dc + dr;
  while (true) {
    stamp_disk(map, r0, c0, radius);
    if (r0 == r1 && c0 == c1) break;
    const int e2 = 2 * err;
    if (e2 >= dr) {
      err += dr;
      c0 += sc;
    }
    if (e2 <= dc) {
      err += dc;
      r0 += sr;
    }
  }
}

constexpr std::array<std::pair<int, int>, 8> kNeighbors{{
    {-1, 0}, {0, 1}, {1, 0}, {0, -1},  // 4-neighbors first
    {-1, 1}, {1, 1}, {1, -1}, {-1, -1},
}};

}  // namespace

std::map<int, ObjectScribbleMaps> rasterize(const ScribbleSet& set, int h, int w,
                                            int brush_radius_px) {
  std::map<int, ObjectScribbleMaps> out;
  for (const auto& s : set.scribbles) {
    auto [it, inserted] =
        out.try_emplace(s.object_id, ObjectScribbleMaps{BinaryMap(h, w), BinaryMap(h, w)});
    BinaryMap& target = s.sign == Sign::kPositive ? it->second.pos : it->second.neg;
    if (s.points.empty()) continue;
    auto prev = to_pixel(s.points.front(), h, w);
    stamp_disk(target, prev.first, prev.second, brush_radius_px);
    for (std::size_t i = 1; i < s.points.size(); ++i) {
      const auto cur = to_pixel(s.points[i], h, w);
      draw_segment(target, prev, cur, brush_radius_px);
      prev = cur;
    }
  }
  return out;
}

ErrorRegions error_regions(const LabelMask& pred, const LabelMask& gt, int object_id) {
  if (!pred.labels.same_shape(gt.labels)) throw DimensionError("error_regions: sizes differ");
  ErrorRegions out{BinaryMap(gt.height(), gt.width()), BinaryMap(gt.height(), gt.width())};
  const auto id = static_cast<std::uint8_t>(object_id);
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const bool in_gt = gt.labels[i] == id;
    const bool in_pred = pred.labels[i] == id;
    out.false_negative[i] = in_gt && !in_pred;
    out.false_positive[i] = in_pred && !in_gt;
  }
  return out;
}

namespace {

template <bool kErode>
BinaryMap morph(const BinaryMap& in, int radius) {
  const int h = in.height();
  const int w = in.width();
  BinaryMap out(h, w);
  std::vector<std::pair<int, int>> offsets;
  for (int dr = -radius; dr <= radius; ++dr) {
    for (int dc = -radius; dc <= radius; ++dc) {
      if (dr * dr + dc * dc <= radius * radius) offsets.emplace_back(dr, dc);
    }
  }
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      bool v = kErode;
      for (auto [dr, dc] : offsets) {
        const int rr = r + dr;
        const int cc = c + dc;
        const bool set = in.contains(rr, cc) && in(rr, cc) != 0;
        if (kErode && !set) {
          v = false;
          break;
        }
        if (!kErode && set) {
          v = true;
          break;
        }
      }
      out(r, c) = v ? 1 : 0;
    }
  }
  return out;
}

}  // namespace

BinaryMap erode(const BinaryMap& region, int radius) { return morph<true>(region, radius); }
BinaryMap dilate(const BinaryMap& region, int radius) { return morph<false>(region, radius); }
BinaryMap open(const BinaryMap& region, int radius) { return dilate(erode(region, radius), radius); }

std::pair<Grid<int>, int> connected_components(const BinaryMap& region) {
  const int h = region.height();
  const int w = region.width();
  Grid<int> labels(h, w, 0);
  int count = 0;
  std::vector<std::pair<int, int>> stack;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!region(r, c) || labels(r, c) != 0) continue;
      ++count;
      labels(r, c) = count;
      stack.assign(1, {r, c});
      while (!stack.empty()) {
        auto [cr, cc] = stack.back();
        stack.pop_back();
        for (auto [dr, dc] : kNeighbors) {
          const int nr = cr + dr;
          const int nc = cc + dc;
          if (region.contains(nr, nc) && region(nr, nc) && labels(nr, nc) == 0) {
            labels(nr, nc) = count;
            stack.emplace_back(nr, nc);
          }
        }
      }
    }
  }
  return {std::move(labels), count};
}

BinaryMap clean_region(const BinaryMap& region, int kernel_radius, int min_component_area) {
  BinaryMap cur = region;
  constexpr int kMaxPasses = 8;
  for (int pass = 0; pass < kMaxPasses; ++pass) {
    BinaryMap next = open(cur, kernel_radius);
    const bool stable = next == cur;
    cur = std::move(next);
    auto [labels, n] = connected_components(cur);
    if (n == 0) return cur;
    std::vector<int> area(static_cast<std::size_t>(n) + 1, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) ++area[labels[i]];
    const bool all_large = std::all_of(area.begin() + 1, area.end(),
                                       [&](int a) { return a >= min_component_area; });
    if (all_large) return cur;
    if (stable) {
      // Opening is idempotent; remaining small pieces are dropped directly.
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && area[labels[i]] < min_component_area) cur[i] = 0;
      }
      return cur;
    }
  }
  auto [labels, n] = connected_components(cur);
  std::vector<int> area(static_cast<std::size_t>(n) + 1, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) ++area[labels[i]];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && area[labels[i]] < min_component_area) cur[i] = 0;
  }
  return cur;
}

namespace {

// Neighborhood code: bit k holds p(k+2) in the clockwise order
// N, NE, E, SE, S, SW, W, NW starting from north.
constexpr std::array<std::pair<int, int>, 8> kRing{{
    {-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}, {-1, -1},
}};

using DeletionTable = std::array<std::uint8_t, 256>;

DeletionTable build_table(int subiteration) {
  DeletionTable t{};
  for (int code = 0; code < 256; ++code) {
    auto bit = [code](int k) { return (code >> k) & 1; };
    const int p2 = bit(0), p3 = bit(1), p4 = bit(2), p5 = bit(3);
    const int p6 = bit(4), p7 = bit(5), p8 = bit(6), p9 = bit(7);
    const int c = ((1 - p2) & (p3 | p4)) + ((1 - p4) & (p5 | p6)) + ((1 - p6) & (p7 | p8)) +
                  ((1 - p8) & (p9 | p2));
    const int n1 = (p9 | p2) + (p3 | p4) + (p5 | p6) + (p7 | p8);
    const int n2 = (p2 | p3) + (p4 | p5) + (p6 | p7) + (p8 | p9);
    const int n = std::min(n1, n2);
    const int m = subiteration == 0 ? ((p2 | p3 | (1 - p5)) & p4) : ((p6 | p7 | (1 - p9)) & p8);
    t[code] = (c == 1 && n >= 2 && n <= 3 && m == 0) ? 1 : 0;
  }
  return t;
}

const std::array<DeletionTable, 2>& deletion_tables() {
  static const std::array<DeletionTable, 2> tables{build_table(0), build_table(1)};
  return tables;
}

}  // namespace

BinaryMap skeletonize(const BinaryMap& region) {
  const int h = region.height();
  const int w = region.width();
  // One-pixel zero border so the inner loop needs no bounds checks.
  const int pw = w + 2;
  std::vector<std::uint8_t> img(static_cast<std::size_t>(h + 2) * pw, 0);
  std::vector<int> live;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (region(r, c)) {
        const int idx = (r + 1) * pw + (c + 1);
        img[idx] = 1;
        live.push_back(idx);
      }
    }
  }
  std::array<int, 8> ring{};
  for (int k = 0; k < 8; ++k) ring[k] = kRing[k].first * pw + kRing[k].second;

  const auto& tables = deletion_tables();
  std::vector<int> doomed;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int sub = 0; sub < 2; ++sub) {
      doomed.clear();
      for (int idx : live) {
        int code = 0;
        for (int k = 0; k < 8; ++k) code |= img[idx + ring[k]] << k;
        if (tables[sub][code]) doomed.push_back(idx);
      }
      if (doomed.empty()) continue;
      changed = true;
      for (int idx : doomed) img[idx] = 0;
      std::erase_if(live, [&](int idx) { return img[idx] == 0; });
    }
  }

  BinaryMap out(h, w);
  for (int idx : live) out((idx / pw) - 1, (idx % pw) - 1) = 1;
  return out;
}

std::vector<Polyline> trace_polylines(const BinaryMap& skeleton, int min_length_px) {
  const int h = skeleton.height();
  const int w = skeleton.width();
  Grid<std::uint8_t> visited(h, w, 0);
  std::vector<std::pair<int, int>> pixels;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (skeleton(r, c)) pixels.emplace_back(r, c);
    }
  }
  auto free_neighbors = [&](int r, int c) {
    int n = 0;
    for (auto [dr, dc] : kNeighbors) {
      const int nr = r + dr;
      const int nc = c + dc;
      if (skeleton.contains(nr, nc) && skeleton(nr, nc) && !visited(nr, nc)) ++n;
    }
    return n;
  };

  std::vector<Polyline> out;
  std::size_t remaining = pixels.size();
  while (remaining > 0) {
    // Start where the fewest unvisited neighbors remain: endpoints before
    // interior pixels, and any pixel of a pure cycle last.
    int best = -1;
    int best_n = std::numeric_limits<int>::max();
    for (std::size_t i = 0; i < pixels.size(); ++i) {
      auto [r, c] = pixels[i];
      if (visited(r, c)) continue;
      const int n = free_neighbors(r, c);
      if (n < best_n) {
        best_n = n;
        best = static_cast<int>(i);
        if (n <= 1) break;
      }
    }
    auto [r, c] = pixels[best];
    std::vector<std::pair<int, int>> path;
    while (true) {
      visited(r, c) = 1;
      --remaining;
      path.emplace_back(r, c);
      bool moved = false;
      for (auto [dr, dc] : kNeighbors) {
        const int nr = r + dr;
        const int nc = c + dc;
        if (skeleton.contains(nr, nc) && skeleton(nr, nc) && !visited(nr, nc)) {
          r = nr;
          c = nc;
          moved = true;
          break;
        }
      }
      if (!moved) break;
    }
    // A stroke needs two points, whatever the requested minimum.
    if (static_cast<int>(path.size()) < std::max(2, min_length_px)) continue;
    Polyline line;
    line.reserve(path.size());
    for (auto [pr, pc] : path) {
      line.push_back(Point{(pc + 0.5) / w, (pr + 0.5) / h});
    }
    out.push_back(std::move(line));
  }
  return out;
}

namespace {

// Traced skeleton strokes, plus a single-point stroke on the skeleton of any
// component whose skeleton is too short to trace (compact blobs).
std::vector<Polyline> strokes_in(const BinaryMap& area, const SynthesisOptions& opts) {
  const BinaryMap cleaned = clean_region(area, opts.kernel_radius, opts.min_component_area);
  const BinaryMap skeleton = skeletonize(cleaned);
  auto lines = trace_polylines(skeleton, opts.min_length_px);
  const int h = area.height();
  const int w = area.width();
  const auto [components, count] = connected_components(cleaned);
  std::vector<bool> covered(static_cast<std::size_t>(count) + 1, false);
  for (const auto& line : lines) {
    for (const auto& p : line) {
      const int r = std::clamp(static_cast<int>(p.y * h), 0, h - 1);
      const int c = std::clamp(static_cast<int>(p.x * w), 0, w - 1);
      covered[static_cast<std::size_t>(components(r, c))] = true;
    }
  }
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int k = components(r, c);
      if (!skeleton(r, c) || k == 0 || covered[static_cast<std::size_t>(k)]) continue;
      covered[static_cast<std::size_t>(k)] = true;
      const Point p{(c + 0.5) / w, (r + 0.5) / h};
      lines.push_back({p, p});
    }
  }
  return lines;
}

// Length-weighted sampling without replacement.
std::vector<Polyline> pick_strokes(std::vector<Polyline> lines, int max_strokes,
                                   std::mt19937_64& rng) {
  std::vector<Polyline> picked;
  while (!lines.empty() && static_cast<int>(picked.size()) < max_strokes) {
    std::vector<double> weights;
    weights.reserve(lines.size());
    for (const auto& l : lines) weights.push_back(static_cast<double>(l.size()));
    std::discrete_distribution<std::size_t> dist(weights.begin(), weights.end());
    const std::size_t k = dist(rng);
    picked.push_back(std::move(lines[k]));
    lines.erase(lines.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return picked;
}

void append(ScribbleSet& set, std::vector<Polyline> lines, int object_id, Sign sign) {
  for (auto& l : lines) set.scribbles.push_back(Scribble{std::move(l), object_id, sign});
}

}  // namespace

ScribbleSet synthesize_round_scribbles(const LabelMask* pred, const LabelMask& gt,
                                       const std::vector<int>& object_ids, int round_index,
                                       int frame_index, std::mt19937_64& rng,
                                       const SynthesisOptions& opts) {
  if (round_index >= 2 && pred == nullptr) {
    throw ArgumentError("synthesize_round_scribbles: rounds >= 2 need a prediction");
  }
  if (pred && !pred->labels.same_shape(gt.labels)) {
    throw DimensionError("synthesize_round_scribbles: sizes differ");
  }
  ScribbleSet set;
  set.frame_index = frame_index;
  for (int id : object_ids) {
    if (round_index <= 1) {
      const BinaryMap region = object_region(gt, id);
      auto lines = strokes_in(region, opts);
      if (lines.empty()) {
        // Objects too small to survive the opening still get a stroke.
        SynthesisOptions raw = opts;
        raw.kernel_radius = 0;
        raw.min_component_area = 1;
        lines = strokes_in(region, raw);
      }
      append(set, pick_strokes(std::move(lines), opts.max_strokes, rng), id, Sign::kPositive);
    } else {
      const auto err = error_regions(*pred, gt, id);
      append(set, pick_strokes(strokes_in(err.false_negative, opts), opts.max_strokes, rng), id,
             Sign::kPositive);
      append(set, pick_strokes(strokes_in(err.false_positive, opts), opts.max_strokes, rng), id,
             Sign::kNegative);
    }
  }
  return set;
}

std::vector<double> frame_scores(const std::vector<LabelMask>& preds,
                                 const std::vector<LabelMask>& gts, int num_objects) {
  if (preds.size() != gts.size()) throw DimensionError("frame_scores: frame counts differ");
  if (num_objects < 1) throw ArgumentError("frame_scores: need at least one object");
  std::vector<double> scores(preds.size(), 0.0);
  for (std::size_t t = 0; t < preds.size(); ++t) {
    double sum = 0.0;
    for (int m = 1; m <= num_objects; ++m) sum += jaccard(preds[t], gts[t], m);
    scores[t] = sum / num_objects;
  }
  return scores;
}

int select_worst_frame(const std::vector<double>& scores, const std::set<int>& exclude) {
  int best = -1;
  for (int t = 0; t < static_cast<int>(scores.size()); ++t) {
    if (exclude.contains(t)) continue;
    if (best < 0 || scores[t] < scores[best]) best = t;
  }
  if (best < 0) throw ArgumentError("select_worst_frame: every frame is excluded");
  return best;
}

int select_worst_frame(const std::vector<LabelMask>& preds, const std::vector<LabelMask>& gts,
                       int num_objects, const std::set<int>& exclude) {
  return select_worst_frame(frame_scores(preds, gts, num_objects), exclude);
}

}  // namespace ipn::scribble
