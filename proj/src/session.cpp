#include "ipn/session.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ipn/data.hpp"
#include "ipn/errors.hpp"
#include "ipn/png_io.hpp"
#include "ipn/steps.hpp"

namespace ipn {

PropagationPlan plan_propagation(int t, const std::set<int>& history_frames, int num_frames) {
  if (num_frames < 1) throw ArgumentError("plan_propagation: video is empty");
  if (t < 0 || t >= num_frames) throw ArgumentError("plan_propagation: frame out of range");
  int stop_f = num_frames;
  int stop_b = -1;
  for (int h : history_frames) {
    if (h > t) stop_f = std::min(stop_f, h);
    if (h < t) stop_b = std::max(stop_b, h);
  }
  PropagationPlan plan;
  for (int f = t + 1; f < stop_f; ++f) plan.forward_range.push_back(f);
  for (int f = t - 1; f > stop_b; --f) plan.backward_range.push_back(f);
  const int df = static_cast<int>(plan.forward_range.size());
  const int db = static_cast<int>(plan.backward_range.size());
  for (int f : plan.forward_range) plan.distances[f] = {f - t, df};
  for (int f : plan.backward_range) plan.distances[f] = {t - f, db};
  return plan;
}

double blend_weight(int d, int span, bool first_round, WeightFunction fn) {
  if (span < 1 || d < 1) throw ArgumentError("blend_weight: d and D must be >= 1");
  if (d > span) throw ArgumentError("blend_weight: d exceeds D");
  if (first_round) return 1.0;
  if (fn == WeightFunction::kGaussian) {
    const double sigma = 0.5 * span;
    const double z = (d - 1) / sigma;
    return std::exp(-0.5 * z * z);
  }
  return static_cast<double>(span - d + 1) / span;
}

Session::Session(std::vector<Frame> frames, int num_objects, SessionConfig config)
    : frames_(std::move(frames)), num_objects_(num_objects), config_(config) {
  if (frames_.empty()) throw ArgumentError("session needs at least one frame");
  if (num_objects_ < 1 || num_objects_ > 255) throw ArgumentError("session needs 1..255 objects");
  for (std::size_t i = 0; i < frames_.size(); ++i) {
    if (frames_[i].height() != height() || frames_[i].width() != width()) {
      throw DimensionError("session frames must share one size");
    }
    frames_[i].set_index(static_cast<int>(i));
  }
  labels_.emplace_back();
  for (int t = 0; t < length(); ++t) labels_.back().push_back(background_labels(height(), width(), num_objects_));
  interaction_.resize(static_cast<std::size_t>(num_objects_));
  aggregated_.resize(static_cast<std::size_t>(num_objects_));
}

void Session::check_object(int object_id) const {
  if (object_id < 1 || object_id > num_objects_) {
    throw ArgumentError("object id " + std::to_string(object_id) + " outside 1.." +
                        std::to_string(num_objects_));
  }
}

std::set<int> Session::history_frames() const {
  std::set<int> out;
  for (const auto& h : history_) out.insert(h.frame);
  return out;
}

ProbMask Session::object_mask(int frame, int object_id) const {
  check_object(object_id);
  if (frame < 0 || frame >= length()) throw ArgumentError("frame index out of range");
  if (round() == 0 || !annotated(object_id)) return neutral_mask(height(), width(), object_id);
  return dist_[frame].channel(object_id);
}

const MultiObjectProbs& Session::latest_probs(int frame) const {
  if (round() == 0) throw ArgumentError("no completed round");
  if (frame < 0 || frame >= length()) throw ArgumentError("frame index out of range");
  return dist_[frame];
}

const ProbMask& Session::last_estimate(int frame, int object_id) const {
  check_object(object_id);
  if (estimates_.empty()) throw ArgumentError("no completed round");
  if (frame < 0 || frame >= length()) throw ArgumentError("frame index out of range");
  return estimates_[object_id - 1][frame];
}

const std::optional<ProbMask>& Session::last_interaction(int object_id) const {
  check_object(object_id);
  return interaction_[object_id - 1];
}

const std::optional<nets::AggregatedFeature>& Session::aggregated(int object_id) const {
  check_object(object_id);
  return aggregated_[object_id - 1];
}

const std::vector<LabelMask>& Session::get_masks(int round_index) const {
  if (round_index < 0) return labels_.back();
  if (round_index > round()) throw ArgumentError("round " + std::to_string(round_index) + " is not completed");
  return labels_[round_index];
}

const RoundRecord& Session::run_round(nets::IpnModel& model, const scribble::ScribbleSet& scribbles) {
  const int t = scribbles.frame_index;
  if (t < 0 || t >= length()) throw ArgumentError("scribble frame index out of range");
  if (scribbles.empty()) throw ArgumentError("a round needs at least one scribble");
  const auto objects = scribbles.object_ids();
  for (int m : objects) check_object(m);
  const int roi_size = model->config().roi_size();
  const int h = height();
  const int w = width();
  const int r = round() + 1;
  const bool first_round = r == 1;

  torch::NoGradGuard no_grad;
  const auto plan = plan_propagation(t, history_frames(), length());
  const auto maps = scribble::rasterize(scribbles, h, w, config_.brush_radius);

  // Previous-round inputs for every object, read before any state changes.
  std::vector<std::vector<ProbMask>> prev(static_cast<std::size_t>(num_objects_));
  for (int m = 1; m <= num_objects_; ++m) {
    for (int f = 0; f < length(); ++f) prev[m - 1].push_back(object_mask(f, m));
  }

  RoundStats stats;
  auto estimates = prev;
  auto interaction = interaction_;
  for (int m = 1; m <= num_objects_; ++m) interaction[m - 1].reset();
  auto aggregated = aggregated_;
  for (int m : objects) {
    const bool seen = annotated(m);
    const bool full_trust = first_round || !seen;
    auto& est = estimates[m - 1];
    const auto& p = prev[m - 1];
    const auto it = maps.find(m);

    const auto in = steps::prepare_interaction(frames_[t], seen ? &p[t] : nullptr,
                                               it == maps.end() ? nullptr : &it->second, roi_size,
                                               full_trust);
    const auto out = nets::interaction_forward(model, in.frame, in.prev_round, in.pos, in.neg);
    ++stats.interaction_calls;
    est[t] = steps::paste_prediction(out.prob, in.roi, h, w, m);
    interaction[m - 1] = est[t];
    aggregated[m - 1] = nets::aggregate_features(model, aggregated[m - 1], out.reference);
    const auto& reference = *aggregated[m - 1];

    auto step = [&](int f, int from) {
      const auto pin = steps::prepare_propagation(frames_[f], est[from], seen ? &p[f] : nullptr, roi_size);
      const auto pout = nets::propagation_forward(model, pin.frame, pin.prev_frame, pin.prev_round, reference);
      ++stats.propagation_calls;
      stats.propagated_frames[m].push_back(f);
      const auto raw = steps::paste_prediction(pout.prob, pin.roi, h, w, m);
      const auto [d, span] = plan.distances.at(f);
      est[f] = blend(raw, p[f], blend_weight(d, span, full_trust, config_.weights));
    };
    for (int f : plan.forward_range) step(f, f - 1);
    for (int f : plan.backward_range) step(f, f + 1);
  }

  std::set<int> annotated_after = annotated_;
  annotated_after.insert(objects.begin(), objects.end());
  std::vector<int> changed{t};
  changed.insert(changed.end(), plan.forward_range.begin(), plan.forward_range.end());
  changed.insert(changed.end(), plan.backward_range.begin(), plan.backward_range.end());
  std::sort(changed.begin(), changed.end());

  std::vector<MultiObjectProbs> dist = dist_;
  dist.resize(static_cast<std::size_t>(length()));
  std::vector<LabelMask> labels = labels_.back();
  const ProbMask absent{Grid<float>(h, w, 0.0f), 0};
  for (int f : changed) {
    std::vector<ProbMask> per_object;
    for (int m = 1; m <= num_objects_; ++m) {
      per_object.push_back(annotated_after.count(m) ? estimates[m - 1][f] : absent);
    }
    dist[f] = soft_aggregate(per_object);
    labels[f] = argmax_label(dist[f]);
  }

  dist_ = std::move(dist);
  labels_.push_back(std::move(labels));
  estimates_ = std::move(estimates);
  interaction_ = std::move(interaction);
  aggregated_ = std::move(aggregated);
  annotated_ = std::move(annotated_after);
  stats_ = std::move(stats);
  history_.push_back(RoundRecord{r, t, scribbles, changed});
  return history_.back();
}

namespace {

namespace fs = std::filesystem;

std::string round_dir(int r) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "round_%03d", r);
  return buf;
}

std::string frame_name(int t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05d.png", t);
  return buf;
}

std::string prob_name(int t, int m) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "frame_%05d_obj_%02d.png", t, m);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  png::write_file(path, std::span<const std::uint8_t>(
                            reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const fs::path& path) {
  const auto bytes = png::read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

constexpr char kStateMagic[8] = {'I', 'P', 'N', 'S', 'T', 'A', 'T', 'E'};

void append_floats(std::vector<std::uint8_t>& out, const float* p, std::size_t n) {
  const auto* b = reinterpret_cast<const std::uint8_t*>(p);
  out.insert(out.end(), b, b + n * sizeof(float));
}

}  // namespace

void Session::save_frames(const fs::path& dir) const {
  fs::create_directories(dir / "frames");
  for (int t = 0; t < length(); ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "%05d.png", t);
    png::write_file(dir / "frames" / name, png::encode_frame(frames_[t]));
  }
  const auto r0 = dir / "masks" / round_dir(0);
  fs::create_directories(r0);
  const auto neutral = neutral_mask(height(), width(), 1);
  const auto neutral_png = png::encode_prob(neutral);
  for (int t = 0; t < length(); ++t) {
    png::write_file(r0 / frame_name(t), png::encode_labels(labels_[0][t]));
    for (int m = 1; m <= num_objects_; ++m) png::write_file(r0 / prob_name(t, m), neutral_png);
  }
  if (round() == 0) {
    nlohmann::json meta{{"num_frames", length()},     {"num_objects", num_objects_},
                        {"height", height()},         {"width", width()},
                        {"round", 0},                 {"history", nlohmann::json::array()},
                        {"annotated", nlohmann::json::array()}};
    write_text(dir / "session.json", meta.dump(2));
  }
}

void Session::save_latest_round(const fs::path& dir) const {
  const int r = round();
  if (r == 0) return save_frames(dir);
  const auto rd = dir / "masks" / round_dir(r);
  fs::create_directories(rd);
  fs::create_directories(dir / "scribbles");
  for (int t = 0; t < length(); ++t) {
    png::write_file(rd / frame_name(t), png::encode_labels(labels_[r][t]));
    for (int m = 1; m <= num_objects_; ++m) {
      png::write_file(rd / prob_name(t, m), png::encode_prob(object_mask(t, m)));
    }
  }
  write_text(dir / "scribbles" / (round_dir(r) + ".json"), scribble::to_json(history_.back().scribbles));

  // Full-precision state needed to continue with the next round.
  nlohmann::json header{{"num_frames", length()}, {"num_objects", num_objects_}, {"aggregated", nlohmann::json::array()}};
  std::vector<std::uint8_t> blob;
  for (const auto& d : dist_) {
    for (int c = 0; c <= num_objects_; ++c) {
      const auto ch = d.channel(c);
      append_floats(blob, ch.values.values().data(), ch.values.size());
    }
  }
  for (int m = 1; m <= num_objects_; ++m) {
    const auto& a = aggregated_[m - 1];
    if (!a) continue;
    const auto t = a->map.detach().to(torch::kFloat32).contiguous();
    header["aggregated"].push_back({{"object", m}, {"round", a->round}, {"shape", t.sizes().vec()}, {"offset", blob.size()}});
    append_floats(blob, t.data_ptr<float>(), static_cast<std::size_t>(t.numel()));
  }
  const auto text = header.dump();
  std::vector<std::uint8_t> out(kStateMagic, kStateMagic + sizeof(kStateMagic));
  const std::uint64_t len = text.size();
  const auto* lp = reinterpret_cast<const std::uint8_t*>(&len);
  out.insert(out.end(), lp, lp + sizeof(len));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), blob.begin(), blob.end());
  png::write_file(dir / "state.bin", out);

  nlohmann::json meta{{"num_frames", length()}, {"num_objects", num_objects_}, {"height", height()},
                      {"width", width()},       {"round", r}};
  meta["history"] = nlohmann::json::array();
  for (const auto& h : history_) {
    meta["history"].push_back({{"round", h.round}, {"frame", h.frame}, {"changed_frames", h.changed_frames}});
  }
  meta["annotated"] = std::vector<int>(annotated_.begin(), annotated_.end());
  // Written last so a crash mid-round leaves the previous round consistent.
  write_text(dir / "session.json", meta.dump(2));
}

void Session::save(const fs::path& dir) const {
  save_frames(dir);
  for (int r = 1; r < round(); ++r) {
    const auto rd = dir / "masks" / round_dir(r);
    fs::create_directories(rd);
    fs::create_directories(dir / "scribbles");
    for (int t = 0; t < length(); ++t) png::write_file(rd / frame_name(t), png::encode_labels(labels_[r][t]));
    write_text(dir / "scribbles" / (round_dir(r) + ".json"), scribble::to_json(history_[r - 1].scribbles));
  }
  if (round() > 0) save_latest_round(dir);
}

Session Session::load(const fs::path& dir, SessionConfig config) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_text(dir / "session.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("session.json: " + std::string(e.what()));
  }
  auto frames = train::load_frames(dir / "frames");
  const int m_count = meta.at("num_objects").get<int>();
  if (static_cast<int>(frames.size()) != meta.at("num_frames").get<int>()) {
    throw IoError("snapshot frame count does not match session.json");
  }
  Session s(std::move(frames), m_count, config);
  const int rounds = meta.at("round").get<int>();
  for (const auto& h : meta.at("history")) {
    const int r = h.at("round").get<int>();
    RoundRecord rec;
    rec.round = r;
    rec.frame = h.at("frame").get<int>();
    rec.changed_frames = h.at("changed_frames").get<std::vector<int>>();
    rec.scribbles = scribble::from_json(read_text(dir / "scribbles" / (round_dir(r) + ".json")));
    s.history_.push_back(std::move(rec));
  }
  for (int r = 1; r <= rounds; ++r) {
    std::vector<LabelMask> labels;
    for (int t = 0; t < s.length(); ++t) {
      labels.push_back(png::decode_labels(png::read_file(dir / "masks" / round_dir(r) / frame_name(t)), m_count));
    }
    s.labels_.push_back(std::move(labels));
  }
  for (int m : meta.at("annotated").get<std::vector<int>>()) s.annotated_.insert(m);
  if (rounds == 0) return s;

  const auto bytes = png::read_file(dir / "state.bin");
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kStateMagic, sizeof(kStateMagic)) != 0) {
    throw IoError("state.bin is not a session state file");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, sizeof(len));
  if (16 + len > bytes.size()) throw IoError("state.bin truncated");
  const auto header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
  const std::uint8_t* data = bytes.data() + 16 + len;
  const std::size_t avail = bytes.size() - 16 - len;
  const std::size_t plane = static_cast<std::size_t>(s.height()) * s.width();
  const std::size_t dist_bytes = plane * (m_count + 1) * s.length() * sizeof(float);
  if (avail < dist_bytes) throw IoError("state.bin truncated");
  const float* fp = reinterpret_cast<const float*>(data);
  for (int t = 0; t < s.length(); ++t) {
    MultiObjectProbs d(m_count, s.height(), s.width());
    for (int c = 0; c <= m_count; ++c) {
      std::memcpy(&d.at(c, 0, 0), fp, plane * sizeof(float));
      fp += plane;
    }
    s.dist_.push_back(std::move(d));
  }
  for (const auto& a : header.at("aggregated")) {
    const int m = a.at("object").get<int>();
    const auto shape = a.at("shape").get<std::vector<int64_t>>();
    const auto offset = a.at("offset").get<std::size_t>();
    auto t = torch::empty(shape, torch::kFloat32);
    const std::size_t nbytes = static_cast<std::size_t>(t.numel()) * sizeof(float);
    if (offset + nbytes > avail) throw IoError("state.bin truncated");
    std::memcpy(t.data_ptr<float>(), data + offset, nbytes);
    s.aggregated_.at(m - 1) = nets::AggregatedFeature{t, a.at("round").get<int>()};
  }
  s.estimates_.assign(static_cast<std::size_t>(m_count), {});
  for (int m = 1; m <= m_count; ++m) {
    for (int t = 0; t < s.length(); ++t) s.estimates_[m - 1].push_back(s.object_mask(t, m));
  }
  return s;
}

}  // namespace ipn
