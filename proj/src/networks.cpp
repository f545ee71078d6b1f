#include "ipn/networks.hpp"

#include <mutex>

#include "ipn/errors.hpp"

namespace ipn::nets {

namespace F = torch::nn::functional;

namespace {

torch::nn::Conv2d conv(int in, int out, int k, int stride = 1, bool bias = true) {
  return torch::nn::Conv2d(
      torch::nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2).bias(bias));
}

std::string shape_str(const torch::Tensor& t) {
  std::string s = "[";
  for (int64_t i = 0; i < t.dim(); ++i) s += (i ? "," : "") + std::to_string(t.size(i));
  return s + "]";
}

void expect_shape(const torch::Tensor& t, std::vector<int64_t> shape, const char* what) {
  if (!t.defined() || t.sizes().vec() != shape) {
    throw ShapeError(std::string(what) + ": unexpected shape " +
                     (t.defined() ? shape_str(t) : std::string("<undefined>")));
  }
}

torch::Tensor upsample(const torch::Tensor& x, double factor) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{factor, factor})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

// Frame channels are standardized with ImageNet statistics.
torch::Tensor normalize_frame(const torch::Tensor& frame) {
  const auto opts = frame.options();
  const auto mean = torch::tensor({0.485, 0.456, 0.406}, opts).view({1, 3, 1, 1});
  const auto std = torch::tensor({0.229, 0.224, 0.225}, opts).view({1, 3, 1, 1});
  return (frame - mean) / std;
}

const char* variant_name(BackboneVariant v) {
  return v == BackboneVariant::kFull ? "full" : "reduced";
}

}  // namespace

BackboneConfig BackboneConfig::full(int in_channels, int roi_size) {
  return BackboneConfig{BackboneVariant::kFull, {256, 512, 1024, 2048}, in_channels, roi_size};
}

BackboneConfig BackboneConfig::reduced(int in_channels, int roi_size) {
  return BackboneConfig{BackboneVariant::kReduced, {16, 32, 64, 128}, in_channels, roi_size};
}

void BackboneConfig::validate() const {
  if (in_channels != kInteractionChannels && in_channels != kPropagationChannels) {
    throw ConfigError("backbone in_channels must be 5 or 6, got " + std::to_string(in_channels));
  }
  for (int c : stage_channels) {
    if (c < 1) throw ConfigError("stage channels must be positive");
  }
  if (variant == BackboneVariant::kFull) {
    for (int c : stage_channels) {
      if (c % 4 != 0) throw ConfigError("bottleneck stages need channel counts divisible by 4");
    }
  }
  if (roi_size < 32 || roi_size % 32 != 0) {
    throw ConfigError("roi_size must be a positive multiple of 32");
  }
}

ModelConfig ModelConfig::reduced(int roi_size) {
  ModelConfig c;
  c.interaction = BackboneConfig::reduced(kInteractionChannels, roi_size);
  c.propagation = BackboneConfig::reduced(kPropagationChannels, roi_size);
  c.decoder_width = 64;
  return c;
}

ModelConfig ModelConfig::full(int roi_size) {
  ModelConfig c;
  c.interaction = BackboneConfig::full(kInteractionChannels, roi_size);
  c.propagation = BackboneConfig::full(kPropagationChannels, roi_size);
  c.decoder_width = 256;
  return c;
}

void ModelConfig::validate() const {
  interaction.validate();
  propagation.validate();
  if (interaction.in_channels != kInteractionChannels) {
    throw ConfigError("interaction network takes 6 input channels");
  }
  if (propagation.in_channels != kPropagationChannels) {
    throw ConfigError("propagation network takes 5 input channels");
  }
  if (interaction.roi_size != propagation.roi_size) throw ConfigError("roi sizes differ");
  if (decoder_width < 1) throw ConfigError("decoder width must be positive");
  if (bottleneck_ratio < 1 || bottom_channels() / bottleneck_ratio < 1) {
    throw ConfigError("aggregation bottleneck must keep at least one unit");
  }
}

nlohmann::json to_json(const ModelConfig& config) {
  auto backbone = [](const BackboneConfig& b) {
    return nlohmann::json{{"variant", variant_name(b.variant)},
                          {"stage_channels", b.stage_channels},
                          {"in_channels", b.in_channels},
                          {"roi_size", b.roi_size}};
  };
  return {{"interaction", backbone(config.interaction)},
          {"propagation", backbone(config.propagation)},
          {"decoder_width", config.decoder_width},
          {"bottleneck_ratio", config.bottleneck_ratio}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  auto backbone = [](const nlohmann::json& b) {
    BackboneConfig c;
    const auto v = b.at("variant").get<std::string>();
    if (v == "full") {
      c.variant = BackboneVariant::kFull;
    } else if (v == "reduced") {
      c.variant = BackboneVariant::kReduced;
    } else {
      throw ConfigError("unknown backbone variant " + v);
    }
    c.stage_channels = b.at("stage_channels").get<std::array<int, 4>>();
    c.in_channels = b.at("in_channels").get<int>();
    c.roi_size = b.at("roi_size").get<int>();
    return c;
  };
  ModelConfig c;
  try {
    c.interaction = backbone(j.at("interaction"));
    c.propagation = backbone(j.at("propagation"));
    c.decoder_width = j.at("decoder_width").get<int>();
    c.bottleneck_ratio = j.at("bottleneck_ratio").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

BasicBlockImpl::BasicBlockImpl(int in_ch, int out_ch, int stride) {
  conv1_ = register_module("conv1", conv(in_ch, out_ch, 3, stride));
  conv2_ = register_module("conv2", conv(out_ch, out_ch, 3));
  if (stride != 1 || in_ch != out_ch) {
    shortcut_ = register_module("shortcut", conv(in_ch, out_ch, 1, stride));
  }
}

torch::Tensor BasicBlockImpl::forward(const torch::Tensor& x) {
  auto y = conv2_(torch::relu(conv1_(x)));
  auto s = shortcut_ ? shortcut_(x) : x;
  return torch::relu(y + s);
}

BottleneckImpl::BottleneckImpl(int in_ch, int out_ch, int stride) {
  const int mid = out_ch / 4;
  conv1_ = register_module("conv1", conv(in_ch, mid, 1));
  conv2_ = register_module("conv2", conv(mid, mid, 3, stride));
  conv3_ = register_module("conv3", conv(mid, out_ch, 1));
  if (stride != 1 || in_ch != out_ch) {
    shortcut_ = register_module("shortcut", conv(in_ch, out_ch, 1, stride));
  }
}

torch::Tensor BottleneckImpl::forward(const torch::Tensor& x) {
  auto y = conv3_(torch::relu(conv2_(torch::relu(conv1_(x)))));
  auto s = shortcut_ ? shortcut_(x) : x;
  return torch::relu(y + s);
}

EncoderImpl::EncoderImpl(const BackboneConfig& config) : config_(config) {
  config_.validate();
  const bool full = config_.variant == BackboneVariant::kFull;
  const int stem_ch = full ? 64 : config_.stage_channels[0];
  stem_ = register_module("stem", conv(config_.in_channels, stem_ch, 7, 2));
  const std::array<int, 4> depth = full ? std::array<int, 4>{3, 4, 6, 3} : std::array<int, 4>{2, 2, 2, 2};
  int in_ch = stem_ch;
  for (int s = 0; s < 4; ++s) {
    torch::nn::Sequential stage;
    const int out_ch = config_.stage_channels[s];
    for (int b = 0; b < depth[s]; ++b) {
      const int stride = (b == 0 && s > 0) ? 2 : 1;
      if (full) {
        stage->push_back(Bottleneck(in_ch, out_ch, stride));
      } else {
        stage->push_back(BasicBlock(in_ch, out_ch, stride));
      }
      in_ch = out_ch;
    }
    stages_[s] = register_module("stage" + std::to_string(s + 1), stage);
  }
}

EncoderOutput EncoderImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != config_.in_channels) {
    throw ShapeError("encoder expects [B," + std::to_string(config_.in_channels) + ",H,W], got " +
                     shape_str(x));
  }
  auto y = torch::relu(stem_(x));
  y = F::max_pool2d(y, F::MaxPool2dFuncOptions(3).stride(2).padding(1));
  EncoderOutput out;
  y = stages_[0]->forward(y);
  out.skips[0] = y;
  y = stages_[1]->forward(y);
  out.skips[1] = y;
  y = stages_[2]->forward(y);
  out.skips[2] = y;
  out.bottom = stages_[3]->forward(y);
  return out;
}

ResBlockImpl::ResBlockImpl(int width) {
  conv1_ = register_module("conv1", conv(width, width, 3));
  conv2_ = register_module("conv2", conv(width, width, 3));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x) {
  return x + conv2_(torch::relu(conv1_(torch::relu(x))));
}

RefineBlockImpl::RefineBlockImpl(int skip_channels, int width) {
  project_ = register_module("project", conv(skip_channels, width, 3));
  res_ = register_module("res", ResBlock(width));
}

torch::Tensor RefineBlockImpl::forward(const torch::Tensor& skip, const torch::Tensor& coarse) {
  if (skip.size(2) != 2 * coarse.size(2) || skip.size(3) != 2 * coarse.size(3)) {
    throw ShapeError("refine block: skip " + shape_str(skip) + " is not twice coarse " +
                     shape_str(coarse));
  }
  return res_(project_(skip) + upsample(coarse, 2.0));
}

DecoderImpl::DecoderImpl(std::array<int, 3> skip_channels, int bottom_channels, int width)
    : bottom_channels_(bottom_channels) {
  bottom_proj_ = register_module("bottom_proj", conv(bottom_channels, width, 1));
  bottom_res_ = register_module("bottom_res", ResBlock(width));
  // refine_[0] consumes the stride-16 skip, refine_[2] the stride-4 skip.
  for (int i = 0; i < 3; ++i) {
    refine_[i] = register_module("refine" + std::to_string(i + 1),
                                 RefineBlock(skip_channels[2 - i], width));
  }
  head_ = register_module("head", conv(width, 1, 3));
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& bottom,
                                   const std::array<torch::Tensor, 3>& skips) {
  if (bottom.dim() != 4 || bottom.size(1) != bottom_channels_) {
    throw ShapeError("decoder expects " + std::to_string(bottom_channels_) +
                     " bottom channels, got " + shape_str(bottom));
  }
  auto y = bottom_res_(bottom_proj_(bottom));
  y = refine_[0](skips[2], y);
  y = refine_[1](skips[1], y);
  y = refine_[2](skips[0], y);
  return head_(torch::relu(y));
}

AggregationImpl::AggregationImpl(int channels, int bottleneck_ratio) : channels_(channels) {
  const int hidden = std::max(1, channels / bottleneck_ratio);
  fc1_ = register_module("fc1", torch::nn::Linear(2 * channels, hidden));
  fc2_ = register_module("fc2", torch::nn::Linear(hidden, 2 * channels));
}

AggregationWeights AggregationImpl::weights(const torch::Tensor& prev, const torch::Tensor& fresh) {
  if (prev.sizes() != fresh.sizes() || prev.dim() != 4 || prev.size(1) != channels_) {
    throw ShapeError("aggregation: maps " + shape_str(prev) + " and " + shape_str(fresh) +
                     " must match with " + std::to_string(channels_) + " channels");
  }
  const auto pooled = torch::cat({prev.mean({2, 3}), fresh.mean({2, 3})}, 1);
  const auto logits = fc2_(torch::relu(fc1_(pooled))).view({prev.size(0), 2, channels_});
  const auto w = torch::softmax(logits, 1);
  return {w.select(1, 0), w.select(1, 1)};
}

torch::Tensor AggregationImpl::forward(const torch::Tensor& prev, const torch::Tensor& fresh) {
  const auto w = weights(prev, fresh);
  return w.alpha.unsqueeze(-1).unsqueeze(-1) * prev + w.beta.unsqueeze(-1).unsqueeze(-1) * fresh;
}

IpnModelImpl::IpnModelImpl(const ModelConfig& config) : config_(config) {
  config_.validate();
  const auto& ib = config_.interaction;
  const auto& pb = config_.propagation;
  const std::array<int, 3> iskips{ib.stage_channels[0], ib.stage_channels[1], ib.stage_channels[2]};
  const std::array<int, 3> pskips{pb.stage_channels[0], pb.stage_channels[1], pb.stage_channels[2]};
  interaction_encoder = register_module("interaction_encoder", Encoder(ib));
  interaction_decoder = register_module(
      "interaction_decoder", Decoder(iskips, ib.stage_channels[3], config_.decoder_width));
  propagation_encoder = register_module("propagation_encoder", Encoder(pb));
  propagation_decoder = register_module(
      "propagation_decoder",
      Decoder(pskips, pb.stage_channels[3] + ib.stage_channels[3], config_.decoder_width));
  aggregation = register_module("aggregation",
                                Aggregation(ib.stage_channels[3], config_.bottleneck_ratio));
}

IpnModel init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  // torch's default generator is process-global.
  static std::mutex init_mutex;
  std::lock_guard<std::mutex> lock(init_mutex);
  torch::manual_seed(seed);
  IpnModel model(config);
  torch::NoGradGuard no_grad;
  for (auto& item : model->named_modules()) {
    if (auto* c = item.value()->as<torch::nn::Conv2d>()) {
      torch::nn::init::kaiming_normal_(c->weight, 0.0, torch::kFanIn, torch::kReLU);
      if (c->bias.defined()) c->bias.zero_();
    }
  }
  // Residual branches start close to identity and the heads near 0.5.
  for (auto& item : model->named_parameters()) {
    const auto& name = item.key();
    if (name.find(".conv2.weight") != std::string::npos && name.find("res") != std::string::npos) {
      item.value().mul_(0.1);
    }
    if (name.ends_with("head.weight")) item.value().mul_(0.1);
  }
  return model;
}

void load_pretrained_backbone(IpnModel&, const std::string& path) {
  throw ConfigError("pretrained backbone loading is not available in this build: " + path);
}

InteractionOutput interaction_forward(IpnModel& model, const torch::Tensor& frame,
                                      const torch::Tensor& prev_round_mask,
                                      const torch::Tensor& pos_scribble,
                                      const torch::Tensor& neg_scribble) {
  const int64_t s = model->config().roi_size();
  const int64_t b = frame.defined() ? frame.size(0) : 0;
  expect_shape(frame, {b, 3, s, s}, "interaction frame");
  expect_shape(prev_round_mask, {b, 1, s, s}, "interaction previous-round mask");
  expect_shape(pos_scribble, {b, 1, s, s}, "interaction positive scribbles");
  expect_shape(neg_scribble, {b, 1, s, s}, "interaction negative scribbles");
  const auto x = torch::cat({normalize_frame(frame), prev_round_mask, pos_scribble, neg_scribble}, 1);
  const auto enc = model->interaction_encoder(x);
  const auto quarter = model->interaction_decoder(enc.bottom, enc.skips);
  const auto logits = upsample(quarter, 4.0);
  return {torch::sigmoid(logits), logits, enc.bottom};
}

PropagationOutput propagation_forward(IpnModel& model, const torch::Tensor& frame,
                                      const torch::Tensor& prev_frame_mask,
                                      const torch::Tensor& prev_round_mask,
                                      const AggregatedFeature& reference) {
  const int64_t s = model->config().roi_size();
  const int64_t b = frame.defined() ? frame.size(0) : 0;
  expect_shape(frame, {b, 3, s, s}, "propagation frame");
  expect_shape(prev_frame_mask, {b, 1, s, s}, "propagation previous-frame mask");
  expect_shape(prev_round_mask, {b, 1, s, s}, "propagation previous-round mask");
  expect_shape(reference.map, {b, model->config().bottom_channels(), s / 32, s / 32},
               "propagation reference");
  const auto x = torch::cat({normalize_frame(frame), prev_frame_mask, prev_round_mask}, 1);
  const auto enc = model->propagation_encoder(x);
  const auto quarter = model->propagation_decoder(torch::cat({enc.bottom, reference.map}, 1), enc.skips);
  const auto logits = upsample(quarter, 4.0);
  return {torch::sigmoid(logits), logits};
}

AggregatedFeature aggregate_features(IpnModel& model, const std::optional<AggregatedFeature>& prev,
                                     const torch::Tensor& fresh) {
  if (!prev) return {fresh, 1};
  if (prev->map.sizes() != fresh.sizes()) {
    throw ShapeError("aggregate_features: " + shape_str(prev->map) + " vs " + shape_str(fresh));
  }
  return {model->aggregation(prev->map, fresh), prev->round + 1};
}

torch::Tensor decode(Decoder& decoder, const torch::Tensor& bottom,
                     const std::array<torch::Tensor, 3>& skips) {
  return decoder(bottom, skips);
}

}  // namespace ipn::nets
