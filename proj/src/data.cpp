#include "ipn/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "ipn/png_io.hpp"

namespace ipn::train {

namespace {

using Color = std::array<float, 3>;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

double color_distance(const Color& a, const Color& b) {
  double s = 0.0;
  for (int k = 0; k < 3; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

struct ToyObject {
  ShapeKind kind = ShapeKind::kEllipse;
  double radius = 10.0;
  double aspect = 1.0;
  std::vector<std::pair<double, double>> polygon;  // local coordinates
  Color color{};
  double stripe_freq = 0.2;
  double stripe_phase = 0.0;
  double cx = 0.0, cy = 0.0;
  std::array<double, 2> freq{};
  std::array<double, 2> phase{};
  double theta0 = 0.0;
  double rot_amp = 0.0;
  double rot_phase = 0.0;
  double scale_amp = 0.0;

  bool contains_local(double lx, double ly) const {
    if (kind == ShapeKind::kEllipse) {
      const double a = radius;
      const double b = radius * aspect;
      return (lx * lx) / (a * a) + (ly * ly) / (b * b) <= 1.0;
    }
    bool inside = false;
    const std::size_t n = polygon.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      const auto [xi, yi] = polygon[i];
      const auto [xj, yj] = polygon[j];
      if (((yi > ly) != (yj > ly)) && (lx < (xj - xi) * (ly - yi) / (yj - yi) + xi)) {
        inside = !inside;
      }
    }
    return inside;
  }
};

Grid<float> smooth_noise(int h, int w, int cells, std::mt19937_64& rng, double lo, double hi) {
  Grid<float> coarse(cells + 1, cells + 1);
  for (std::size_t i = 0; i < coarse.size(); ++i) coarse[i] = static_cast<float>(uniform(rng, lo, hi));
  Grid<float> out(h, w);
  for (int r = 0; r < h; ++r) {
    const double v = (r + 0.5) / h * cells;
    const int r0 = std::min(static_cast<int>(v), cells - 1);
    const double fv = v - r0;
    for (int c = 0; c < w; ++c) {
      const double u = (c + 0.5) / w * cells;
      const int c0 = std::min(static_cast<int>(u), cells - 1);
      const double fu = u - c0;
      const double top = (1 - fu) * coarse(r0, c0) + fu * coarse(r0, c0 + 1);
      const double bot = (1 - fu) * coarse(r0 + 1, c0) + fu * coarse(r0 + 1, c0 + 1);
      out(r, c) = static_cast<float>((1 - fv) * top + fv * bot);
    }
  }
  return out;
}

}  // namespace

Video generate_toy_video(const ToyVideoSpec& spec, std::uint64_t seed) {
  if (spec.num_frames < 1 || spec.num_objects < 1 || spec.num_objects > 255) {
    throw ArgumentError("toy video needs >= 1 frame and 1..255 objects");
  }
  if (spec.shape_kinds.empty()) throw ArgumentError("toy video needs at least one shape kind");
  std::mt19937_64 rng(seed);
  std::mt19937_64 bg_rng(spec.background_seed != 0 ? spec.background_seed : seed ^ 0x9e3779b97f4a7c15ULL);
  const int h = spec.h;
  const int w = spec.w;
  const double side = std::min(h, w);

  // Background: low-frequency color field plus fixed fine grain.
  std::array<Grid<float>, 3> bg_planes{smooth_noise(h, w, 4, bg_rng, 0.1, 0.9),
                                       smooth_noise(h, w, 4, bg_rng, 0.1, 0.9),
                                       smooth_noise(h, w, 4, bg_rng, 0.1, 0.9)};
  Grid<float> grain(h, w);
  for (std::size_t i = 0; i < grain.size(); ++i) grain[i] = static_cast<float>(uniform(bg_rng, -0.04, 0.04));
  Color bg_mean{};
  for (int k = 0; k < 3; ++k) {
    double s = 0.0;
    for (float v : bg_planes[k].values()) s += v;
    bg_mean[k] = static_cast<float>(s / static_cast<double>(bg_planes[k].size()));
  }

  std::vector<ToyObject> objects(static_cast<std::size_t>(spec.num_objects));
  for (int k = 0; k < spec.num_objects; ++k) {
    ToyObject& o = objects[k];
    o.kind = spec.shape_kinds[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(spec.shape_kinds.size()) - 1))];
    o.radius = uniform(rng, 0.12, 0.22) * side;
    o.aspect = uniform(rng, 0.55, 1.0);
    if (o.kind == ShapeKind::kPolygon) {
      const int n = uniform_int(rng, 5, 8);
      std::vector<double> angles;
      for (int i = 0; i < n; ++i) angles.push_back(uniform(rng, 0.0, 2.0 * std::numbers::pi));
      std::sort(angles.begin(), angles.end());
      for (double a : angles) {
        const double rr = o.radius * uniform(rng, 0.6, 1.0);
        o.polygon.emplace_back(rr * std::cos(a), rr * std::sin(a));
      }
    }
    for (int attempt = 0; attempt < 64; ++attempt) {
      for (auto& ch : o.color) ch = static_cast<float>(uniform(rng, 0.05, 0.95));
      bool ok = color_distance(o.color, bg_mean) >= 0.35;
      for (int j = 0; j < k && ok; ++j) ok = color_distance(o.color, objects[j].color) >= 0.25;
      if (ok) break;
    }
    o.stripe_freq = uniform(rng, 0.15, 0.45);
    o.stripe_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    o.cx = uniform(rng, 0.3, 0.7) * w;
    o.cy = uniform(rng, 0.3, 0.7) * h;
    for (int i = 0; i < 2; ++i) {
      o.freq[i] = uniform(rng, 0.5, 1.5);
      o.phase[i] = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    }
    o.theta0 = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    o.rot_amp = uniform(rng, -1.0, 1.0) * spec.motion_amplitude * 2.0;
    o.rot_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    o.scale_amp = spec.motion_amplitude > 0.0 ? uniform(rng, 0.0, 0.1) : 0.0;
  }

  Video video;
  video.num_objects = spec.num_objects;
  const double amp = spec.motion_amplitude * side;
  const double span = std::max(1, spec.num_frames - 1);
  for (int t = 0; t < spec.num_frames; ++t) {
    Frame frame(h, w, t);
    LabelMask gt{Grid<std::uint8_t>(h, w, 0), spec.num_objects};
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        for (int k = 0; k < 3; ++k) {
          frame.at(k, r, c) = std::clamp(bg_planes[k](r, c) + grain(r, c), 0.0f, 1.0f);
        }
      }
    }
    const double phase_t = 2.0 * std::numbers::pi * t / span;
    for (int k = 0; k < spec.num_objects; ++k) {
      const ToyObject& o = objects[k];
      const double cx = o.cx + amp * std::sin(o.freq[0] * phase_t + o.phase[0]);
      const double cy = o.cy + amp * std::sin(o.freq[1] * phase_t + o.phase[1]);
      const double theta = o.theta0 + o.rot_amp * std::sin(phase_t + o.rot_phase);
      const double scale = 1.0 + o.scale_amp * std::sin(phase_t + o.rot_phase * 0.5);
      const double cs = std::cos(theta);
      const double sn = std::sin(theta);
      const double reach = o.radius * scale + 2.0;
      const int r_lo = std::max(0, static_cast<int>(cy - reach));
      const int r_hi = std::min(h - 1, static_cast<int>(cy + reach));
      const int c_lo = std::max(0, static_cast<int>(cx - reach));
      const int c_hi = std::min(w - 1, static_cast<int>(cx + reach));
      for (int r = r_lo; r <= r_hi; ++r) {
        for (int c = c_lo; c <= c_hi; ++c) {
          const double dx = (c + 0.5) - cx;
          const double dy = (r + 0.5) - cy;
          const double lx = (cs * dx + sn * dy) / scale;
          const double ly = (-sn * dx + cs * dy) / scale;
          if (!o.contains_local(lx, ly)) continue;
          gt.labels(r, c) = static_cast<std::uint8_t>(k + 1);
          const double stripe = 1.0 + 0.12 * std::sin(o.stripe_freq * (lx + ly) + o.stripe_phase);
          for (int ch = 0; ch < 3; ++ch) {
            const double v = o.color[ch] * stripe + 0.5 * grain(r, c);
            frame.at(ch, r, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
          }
        }
      }
    }
    video.frames.push_back(std::move(frame));
    video.gts.push_back(std::move(gt));
  }
  return video;
}

Affine Affine::translation(double dx, double dy) {
  Affine a;
  a.m[2] = dx;
  a.m[5] = dy;
  return a;
}

Affine Affine::similarity(double deg, double scale, double cx, double cy, double dx, double dy) {
  const double th = deg * std::numbers::pi / 180.0;
  const double c = scale * std::cos(th);
  const double s = scale * std::sin(th);
  Affine a;
  a.m[0] = c;
  a.m[1] = -s;
  a.m[3] = s;
  a.m[4] = c;
  a.m[2] = cx - c * cx + s * cy + dx;
  a.m[5] = cy - s * cx - c * cy + dy;
  return a;
}

Affine Affine::inverse() const {
  const double det = m[0] * m[4] - m[1] * m[3];
  if (std::abs(det) < 1e-12) throw ArgumentError("affine transform is singular");
  Affine inv;
  inv.m[0] = m[4] / det;
  inv.m[1] = -m[1] / det;
  inv.m[3] = -m[3] / det;
  inv.m[4] = m[0] / det;
  inv.m[2] = -(inv.m[0] * m[2] + inv.m[1] * m[5]);
  inv.m[5] = -(inv.m[3] * m[2] + inv.m[4] * m[5]);
  return inv;
}

std::pair<double, double> Affine::apply(double x, double y) const {
  return {m[0] * x + m[1] * y + m[2], m[3] * x + m[4] * y + m[5]};
}

Frame warp_frame(const Frame& src, const Affine& forward, float pad) {
  const Affine inv = forward.inverse();
  const int h = src.height();
  const int w = src.width();
  Frame out(h, w, src.index());
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const auto [x, y] = inv.apply(c + 0.5, r + 0.5);
      if (x < 0.0 || y < 0.0 || x >= w || y >= h) {
        for (int k = 0; k < 3; ++k) out.at(k, r, c) = pad;
        continue;
      }
      const double u = std::clamp(x - 0.5, 0.0, w - 1.0);
      const double v = std::clamp(y - 0.5, 0.0, h - 1.0);
      const int c0 = static_cast<int>(u);
      const int r0 = static_cast<int>(v);
      const int c1 = std::min(c0 + 1, w - 1);
      const int r1 = std::min(r0 + 1, h - 1);
      const double fu = u - c0;
      const double fv = v - r0;
      for (int k = 0; k < 3; ++k) {
        const double top = (1 - fu) * src.at(k, r0, c0) + fu * src.at(k, r0, c1);
        const double bot = (1 - fu) * src.at(k, r1, c0) + fu * src.at(k, r1, c1);
        out.at(k, r, c) = static_cast<float>((1 - fv) * top + fv * bot);
      }
    }
  }
  return out;
}

LabelMask warp_labels(const LabelMask& src, const Affine& forward) {
  const Affine inv = forward.inverse();
  const int h = src.height();
  const int w = src.width();
  LabelMask out{Grid<std::uint8_t>(h, w, 0), src.num_objects};
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const auto [x, y] = inv.apply(c + 0.5, r + 0.5);
      const int sc = static_cast<int>(std::floor(x));
      const int sr = static_cast<int>(std::floor(y));
      if (src.labels.contains(sr, sc)) out.labels(r, c) = src.labels(sr, sc);
    }
  }
  return out;
}

std::optional<ClipSample> compose_pretrain_pair(const Frame& image, const LabelMask& mask,
                                                const PairTransforms& transforms) {
  if (image.height() != mask.height() || image.width() != mask.width()) {
    throw DimensionError("pretrain pair: image and mask sizes differ");
  }
  const int h = image.height();
  const int w = image.width();
  const int num = mask.num_objects;
  std::vector<int> area(static_cast<std::size_t>(num) + 1, 0);
  for (std::uint8_t v : mask.labels.values()) {
    if (v <= num) ++area[v];
  }
  std::vector<int> kept;
  for (int id = 1; id <= num; ++id) {
    if (area[id] >= kMinPretrainArea) kept.push_back(id);
  }
  if (kept.empty()) return std::nullopt;

  // Reference keeps only the usable objects.
  LabelMask ref_mask{Grid<std::uint8_t>(h, w, 0), num};
  for (std::size_t i = 0; i < ref_mask.labels.size(); ++i) {
    const int v = mask.labels[i];
    if (v != 0 && area[v] >= kMinPretrainArea) ref_mask.labels[i] = static_cast<std::uint8_t>(v);
  }

  // Object-free background: object pixels take the mean of the rest.
  Frame bg = image;
  std::array<double, 3> mean{};
  std::size_t n_bg = 0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (ref_mask.labels(r, c)) continue;
      for (int k = 0; k < 3; ++k) mean[k] += image.at(k, r, c);
      ++n_bg;
    }
  }
  for (auto& m : mean) m = n_bg > 0 ? m / static_cast<double>(n_bg) : 0.5;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!ref_mask.labels(r, c)) continue;
      for (int k = 0; k < 3; ++k) bg.at(k, r, c) = static_cast<float>(mean[k]);
    }
  }

  Frame target = warp_frame(bg, transforms.background, 0.0f);
  LabelMask target_mask{Grid<std::uint8_t>(h, w, 0), num};
  const Frame* source = &image;
  for (int id : kept) {
    const Affine& fwd = static_cast<std::size_t>(id - 1) < transforms.objects.size()
                            ? transforms.objects[static_cast<std::size_t>(id - 1)]
                            : Affine::identity();
    LabelMask only{Grid<std::uint8_t>(h, w, 0), num};
    for (std::size_t i = 0; i < only.labels.size(); ++i) {
      only.labels[i] = ref_mask.labels[i] == id ? static_cast<std::uint8_t>(id) : 0;
    }
    const LabelMask moved = warp_labels(only, fwd);
    const Frame moved_px = warp_frame(*source, fwd, 0.0f);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        if (moved.labels(r, c) != id) continue;
        target_mask.labels(r, c) = static_cast<std::uint8_t>(id);
        for (int k = 0; k < 3; ++k) target.at(k, r, c) = moved_px.at(k, r, c);
      }
    }
  }

  ClipSample out;
  Frame ref = image;
  ref.set_index(0);
  target.set_index(1);
  out.frames = {std::move(ref), std::move(target)};
  out.gts = {std::move(ref_mask), std::move(target_mask)};
  out.object_ids = kept;
  out.source_indices = {0, 1};
  return out;
}

std::optional<ClipSample> synthesize_pretrain_pair(const Frame& image, const LabelMask& mask,
                                                   std::mt19937_64& rng) {
  const int h = image.height();
  const int w = image.width();
  PairTransforms tf;
  tf.background = Affine::similarity(uniform(rng, -5.0, 5.0), uniform(rng, 0.95, 1.05), 0.5 * w,
                                     0.5 * h, uniform(rng, -0.03, 0.03) * w,
                                     uniform(rng, -0.03, 0.03) * h);
  for (int id = 1; id <= mask.num_objects; ++id) {
    double sx = 0.0, sy = 0.0;
    long n = 0;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        if (mask.labels(r, c) != id) continue;
        sx += c + 0.5;
        sy += r + 0.5;
        ++n;
      }
    }
    const double cx = n > 0 ? sx / n : 0.5 * w;
    const double cy = n > 0 ? sy / n : 0.5 * h;
    tf.objects.push_back(Affine::similarity(uniform(rng, -15.0, 15.0), uniform(rng, 0.9, 1.1), cx,
                                            cy, uniform(rng, -0.1, 0.1) * w,
                                            uniform(rng, -0.1, 0.1) * h));
  }
  return compose_pretrain_pair(image, mask, tf);
}

Frame resize_frame(const Frame& src, int h, int w) {
  if (src.height() == h && src.width() == w) return src;
  Frame out(h, w, src.index());
  const double sy = static_cast<double>(src.height()) / h;
  const double sx = static_cast<double>(src.width()) / w;
  for (int r = 0; r < h; ++r) {
    const double v = std::clamp((r + 0.5) * sy - 0.5, 0.0, src.height() - 1.0);
    const int r0 = static_cast<int>(v);
    const int r1 = std::min(r0 + 1, src.height() - 1);
    const double fv = v - r0;
    for (int c = 0; c < w; ++c) {
      const double u = std::clamp((c + 0.5) * sx - 0.5, 0.0, src.width() - 1.0);
      const int c0 = static_cast<int>(u);
      const int c1 = std::min(c0 + 1, src.width() - 1);
      const double fu = u - c0;
      for (int k = 0; k < 3; ++k) {
        const double top = (1 - fu) * src.at(k, r0, c0) + fu * src.at(k, r0, c1);
        const double bot = (1 - fu) * src.at(k, r1, c0) + fu * src.at(k, r1, c1);
        out.at(k, r, c) = static_cast<float>((1 - fv) * top + fv * bot);
      }
    }
  }
  return out;
}

LabelMask resize_labels(const LabelMask& src, int h, int w) {
  if (src.height() == h && src.width() == w) return src;
  LabelMask out{Grid<std::uint8_t>(h, w, 0), src.num_objects};
  for (int r = 0; r < h; ++r) {
    const int sr = std::min(src.height() - 1, static_cast<int>((r + 0.5) * src.height() / h));
    for (int c = 0; c < w; ++c) {
      const int sc = std::min(src.width() - 1, static_cast<int>((c + 0.5) * src.width() / w));
      out.labels(r, c) = src.labels(sr, sc);
    }
  }
  return out;
}

void jitter_colors(std::vector<Frame>& frames, std::mt19937_64& rng) {
  std::array<int, 3> perm{0, 1, 2};
  std::shuffle(perm.begin(), perm.end(), rng);
  std::array<double, 3> gain{}, offset{};
  for (int k = 0; k < 3; ++k) {
    gain[k] = uniform(rng, 0.7, 1.3);
    offset[k] = uniform(rng, -0.15, 0.15);
  }
  const bool invert = uniform(rng, 0.0, 1.0) < 0.3;
  for (auto& f : frames) {
    const Frame src = f;
    for (int k = 0; k < 3; ++k) {
      const auto in = src.plane(perm[k]);
      auto out = f.plane(k);
      for (std::size_t i = 0; i < out.size(); ++i) {
        double v = in[i];
        if (invert) v = 1.0 - v;
        out[i] = static_cast<float>(std::clamp(gain[k] * (v - 0.5) + 0.5 + offset[k], 0.0, 1.0));
      }
    }
  }
}

ClipSample sample_training_clip(const Video& video, int n, std::mt19937_64& rng,
                                const ClipOptions& opts) {
  if (n < 2) throw ArgumentError("training clips need at least 2 frames");
  if (video.length() < n) throw ArgumentError("video is shorter than the requested clip");
  const int src_h = video.frames.front().height();
  const int src_w = video.frames.front().width();
  const double k = static_cast<double>(opts.short_edge) / std::min(src_h, src_w);
  const int h = std::max(8, static_cast<int>(std::lround(src_h * k)));
  const int w = std::max(8, static_cast<int>(std::lround(src_w * k)));
  const int ph = std::min(opts.patch_size, h);
  const int pw = std::min(opts.patch_size, w);

  constexpr int kAttempts = 32;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    int skip = opts.skip > 0 ? opts.skip : uniform_int(rng, 1, 3);
    if ((n - 1) * skip + 1 > video.length()) skip = 1;
    const int start = uniform_int(rng, 0, video.length() - ((n - 1) * skip + 1));
    const int top = uniform_int(rng, 0, h - ph);
    const int left = uniform_int(rng, 0, w - pw);
    Affine aug = Affine::identity();
    if (opts.augment) {
      aug = Affine::similarity(uniform(rng, -10.0, 10.0), uniform(rng, 0.9, 1.1), 0.5 * pw,
                               0.5 * ph, uniform(rng, -0.05, 0.05) * pw,
                               uniform(rng, -0.05, 0.05) * ph);
    }

    ClipSample clip;
    for (int i = 0; i < n; ++i) {
      const int idx = start + i * skip;
      const Frame resized = resize_frame(video.frames[idx], h, w);
      const LabelMask resized_gt = resize_labels(video.gts[idx], h, w);
      Frame patch(ph, pw, i);
      LabelMask patch_gt{Grid<std::uint8_t>(ph, pw, 0), video.num_objects};
      for (int r = 0; r < ph; ++r) {
        for (int c = 0; c < pw; ++c) {
          for (int ch = 0; ch < 3; ++ch) patch.at(ch, r, c) = resized.at(ch, top + r, left + c);
          patch_gt.labels(r, c) = resized_gt.labels(top + r, left + c);
        }
      }
      if (opts.augment) {
        patch = warp_frame(patch, aug, 0.0f);
        patch_gt = warp_labels(patch_gt, aug);
      }
      clip.frames.push_back(std::move(patch));
      clip.gts.push_back(std::move(patch_gt));
      clip.source_indices.push_back(idx);
    }
    std::vector<int> area(static_cast<std::size_t>(video.num_objects) + 1, 0);
    for (std::uint8_t v : clip.gts.front().labels.values()) {
      if (v <= video.num_objects) ++area[v];
    }
    for (int id = 1; id <= video.num_objects; ++id) {
      if (area[id] >= opts.min_object_area) clip.object_ids.push_back(id);
    }
    if (!clip.object_ids.empty()) {
      if (opts.augment && opts.photometric) jitter_colors(clip.frames, rng);
      return clip;
    }
  }
  throw ArgumentError("could not sample a clip with a visible object in its first frame");
}

Curriculum curriculum_schedule(long iteration, long total, int len_min, int len_max,
                               int rounds_min, int rounds_max, double ramp) {
  if (total < 1 || iteration < 0 || iteration >= total) {
    throw ArgumentError("curriculum: iteration must lie in [0, total)");
  }
  const double progress = std::min(1.0, static_cast<double>(iteration) / (ramp * total));
  const int dl = static_cast<int>(std::floor(progress * (len_max - len_min) + 1e-9));
  const int dr = static_cast<int>(std::floor(progress * (rounds_max - rounds_min) + 1e-9));
  return {len_min + std::min(dl, len_max - len_min), rounds_min + std::min(dr, rounds_max - rounds_min)};
}

namespace {

std::string frame_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05d.png", i);
  return buf;
}

std::vector<std::filesystem::path> sorted_pngs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

void save_video(const Video& video, const std::filesystem::path& dir) {
  for (int t = 0; t < video.length(); ++t) {
    png::write_file(dir / "frames" / frame_name(t), png::encode_frame(video.frames[t]));
    png::write_file(dir / "gt" / frame_name(t), png::encode_labels(video.gts[t]));
  }
}

std::vector<Frame> load_frames(const std::filesystem::path& dir) {
  std::vector<Frame> frames;
  int t = 0;
  for (const auto& f : sorted_pngs(dir)) frames.push_back(png::decode_frame(png::read_file(f), t++));
  return frames;
}

Video load_video(const std::filesystem::path& dir) {
  Video v;
  v.frames = load_frames(dir / "frames");
  for (const auto& f : sorted_pngs(dir / "gt")) v.gts.push_back(png::decode_labels(png::read_file(f)));
  if (v.frames.size() != v.gts.size() || v.frames.empty()) {
    throw IoError("video " + dir.string() + " needs matching non-empty frames/ and gt/");
  }
  for (const auto& g : v.gts) v.num_objects = std::max(v.num_objects, g.num_objects);
  for (auto& g : v.gts) g.num_objects = v.num_objects;
  return v;
}

}  // namespace ipn::train
