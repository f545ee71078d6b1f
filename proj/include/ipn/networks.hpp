#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include <nlohmann/json.hpp>

namespace ipn::nets {

enum class BackboneVariant { kFull, kReduced };

/// Encoder layout. Both variants have four stages at strides 4, 8, 16, 32.
struct BackboneConfig {
  BackboneVariant variant = BackboneVariant::kReduced;
  std::array<int, 4> stage_channels{16, 32, 64, 128};
  int in_channels = 6;
  int roi_size = 256;

  /// ResNet50 layout: bottleneck blocks [3, 4, 6, 3].
  static BackboneConfig full(int in_channels, int roi_size = 256);
  /// Two basic blocks per stage with small widths.
  static BackboneConfig reduced(int in_channels, int roi_size = 256);
  void validate() const;
};

inline constexpr int kInteractionChannels = 6;
inline constexpr int kPropagationChannels = 5;

struct ModelConfig {
  BackboneConfig interaction = BackboneConfig::reduced(kInteractionChannels);
  BackboneConfig propagation = BackboneConfig::reduced(kPropagationChannels);
  int decoder_width = 64;
  /// Hidden units of the aggregation bottleneck = channels / bottleneck_ratio.
  int bottleneck_ratio = 4;

  static ModelConfig reduced(int roi_size = 256);
  static ModelConfig full(int roi_size = 256);
  int roi_size() const { return interaction.roi_size; }
  int bottom_channels() const { return interaction.stage_channels[3]; }
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct EncoderOutput {
  torch::Tensor bottom;              // stride 32
  std::array<torch::Tensor, 3> skips;  // strides 4, 8, 16
};

class BasicBlockImpl : public torch::nn::Module {
 public:
  BasicBlockImpl(int in_ch, int out_ch, int stride);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, shortcut_{nullptr};
};
TORCH_MODULE(BasicBlock);

class BottleneckImpl : public torch::nn::Module {
 public:
  BottleneckImpl(int in_ch, int out_ch, int stride);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, conv3_{nullptr}, shortcut_{nullptr};
};
TORCH_MODULE(Bottleneck);

/// ResNet-style encoder whose first convolution accepts the extra guidance
/// channels next to RGB.
class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const BackboneConfig& config);
  EncoderOutput forward(const torch::Tensor& x);
  const BackboneConfig& config() const { return config_; }
  const torch::nn::Conv2d& stem() const { return stem_; }

 private:
  BackboneConfig config_;
  torch::nn::Conv2d stem_{nullptr};
  std::array<torch::nn::Sequential, 4> stages_;
};
TORCH_MODULE(Encoder);

/// Pre-activation residual block: x + conv(relu(conv(relu(x)))).
class ResBlockImpl : public torch::nn::Module {
 public:
  explicit ResBlockImpl(int width);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
};
TORCH_MODULE(ResBlock);

/// One decoder stage: project the skip to the decoder width, add the x2
/// upsampled coarser path, then a residual block.
class RefineBlockImpl : public torch::nn::Module {
 public:
  RefineBlockImpl(int skip_channels, int width);
  torch::Tensor forward(const torch::Tensor& skip, const torch::Tensor& coarse);

 private:
  torch::nn::Conv2d project_{nullptr};
  ResBlock res_{nullptr};
};
TORCH_MODULE(RefineBlock);

class DecoderImpl : public torch::nn::Module {
 public:
  /// `bottom_channels` includes any concatenated reference channels.
  DecoderImpl(std::array<int, 3> skip_channels, int bottom_channels, int width);
  /// Logits at stride 4.
  torch::Tensor forward(const torch::Tensor& bottom, const std::array<torch::Tensor, 3>& skips);
  RefineBlock& refine(int i) { return refine_[i]; }
  int bottom_channels() const { return bottom_channels_; }

 private:
  int bottom_channels_;
  torch::nn::Conv2d bottom_proj_{nullptr};
  ResBlock bottom_res_{nullptr};
  std::array<RefineBlock, 3> refine_{RefineBlock{nullptr}, RefineBlock{nullptr}, RefineBlock{nullptr}};
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(Decoder);

struct AggregationWeights {
  torch::Tensor alpha;  // [B, C], weight of the previous aggregate
  torch::Tensor beta;   // [B, C], weight of the new reference
};

/// Channel attention over the pooled pair (A_prev, R_new) that produces
/// per-channel convex weights.
class AggregationImpl : public torch::nn::Module {
 public:
  AggregationImpl(int channels, int bottleneck_ratio);
  AggregationWeights weights(const torch::Tensor& prev, const torch::Tensor& fresh);
  torch::Tensor forward(const torch::Tensor& prev, const torch::Tensor& fresh);

 private:
  int channels_;
  torch::nn::Linear fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(Aggregation);

/// Every learnable weight of both networks and the aggregation module.
class IpnModelImpl : public torch::nn::Module {
 public:
  explicit IpnModelImpl(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  Encoder interaction_encoder{nullptr};
  Decoder interaction_decoder{nullptr};
  Encoder propagation_encoder{nullptr};
  Decoder propagation_decoder{nullptr};
  Aggregation aggregation{nullptr};

 private:
  ModelConfig config_;
};
TORCH_MODULE(IpnModel);

/// Deterministic random initialization for a fixed seed.
IpnModel init_params(const ModelConfig& config, std::uint64_t seed);

/// Loads ImageNet-style backbone weights; the extra guidance filters of the
/// first convolution are zeroed. Not available at desk scale.
void load_pretrained_backbone(IpnModel& model, const std::string& path);

struct AggregatedFeature {
  torch::Tensor map;
  int round = 1;
};

struct InteractionOutput {
  torch::Tensor prob;       // [B,1,S,S]
  torch::Tensor logits;     // [B,1,S,S], upsampled
  torch::Tensor reference;  // encoder bottom, [B,C4,S/32,S/32]
};

struct PropagationOutput {
  torch::Tensor prob;
  torch::Tensor logits;
};

/// All inputs [B,C,S,S] at the configured roi size; frame in [0,1].
InteractionOutput interaction_forward(IpnModel& model, const torch::Tensor& frame,
                                      const torch::Tensor& prev_round_mask,
                                      const torch::Tensor& pos_scribble,
                                      const torch::Tensor& neg_scribble);

PropagationOutput propagation_forward(IpnModel& model, const torch::Tensor& frame,
                                      const torch::Tensor& prev_frame_mask,
                                      const torch::Tensor& prev_round_mask,
                                      const AggregatedFeature& reference);

/// A_r = alpha * A_{r-1} + beta * R_r; round 1 returns R_r as is.
AggregatedFeature aggregate_features(IpnModel& model, const std::optional<AggregatedFeature>& prev,
                                     const torch::Tensor& fresh);

torch::Tensor decode(Decoder& decoder, const torch::Tensor& bottom,
                     const std::array<torch::Tensor, 3>& skips);

}  // namespace ipn::nets
