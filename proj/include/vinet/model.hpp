#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace vinet {

/// Architecture hyper-parameters. Everything here is persisted in checkpoints and must match
/// on load.
struct ArchConfig {
  std::array<int64_t, 4> widths{32, 64, 128, 256};  // channels at scales 1, 1/2, 1/4, 1/8
  bool share_reference_encoder = false;
  // Optional per-channel input normalization x' = (x - shift) / scale; identity by default.
  std::array<double, 3> input_shift{0.0, 0.0, 0.0};
  std::array<double, 3> input_scale{1.0, 1.0, 1.0};

  std::map<std::string, std::string> to_map() const;
  static ArchConfig from_map(const std::map<std::string, std::string>& kv);
  bool operator==(const ArchConfig&) const = default;
};

/// Feature maps at scales {1, 1/2, 1/4, 1/8} (index 0 is full resolution).
using Pyramid = std::array<torch::Tensor, 4>;

/// Conv + LeakyReLU(0.2).
class ConvActImpl : public torch::nn::Module {
 public:
  ConvActImpl(int64_t in, int64_t out, int64_t stride = 1, bool activate = true);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv_{nullptr};
  bool activate_;
};
TORCH_MODULE(ConvAct);

/// Strided convolutional pyramid over a 4-channel (RGB + mask) input.
class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const std::array<int64_t, 4>& widths);
  Pyramid forward(const torch::Tensor& x);

 private:
  std::vector<torch::nn::Sequential> stages_;
};
TORCH_MODULE(Encoder);

/// Four plain convolutions producing a 2-channel (dx, dy) map.
class FlowNetImpl : public torch::nn::Module {
 public:
  FlowNetImpl(int64_t in, int64_t hidden);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(FlowNet);

/// Three convolutions on |a - b| followed by a sigmoid; single-channel output in (0, 1).
class MaskNetImpl : public torch::nn::Module {
 public:
  explicit MaskNetImpl(int64_t in);
  torch::Tensor forward(const torch::Tensor& abs_diff);

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(MaskNet);

/// 5x3x3 (THW) convolution collapsing five aligned streams into one map of equal width.
class AggregatorImpl : public torch::nn::Module {
 public:
  explicit AggregatorImpl(int64_t channels);
  torch::Tensor forward(const std::vector<torch::Tensor>& streams);
  /// Same as forward on a [5 * N, C, H, W] stream-major batch.
  torch::Tensor forward_stacked(const torch::Tensor& stacked);

  torch::nn::Conv3d conv{nullptr};
};
TORCH_MODULE(Aggregator);

class ConvLSTMImpl : public torch::nn::Module {
 public:
  ConvLSTMImpl(int64_t in, int64_t hidden);
  /// Returns (hidden, cell).
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& x, const torch::Tensor& h,
                                                  const torch::Tensor& c);

 private:
  torch::nn::Conv2d gates_{nullptr};
  int64_t hidden_;
};
TORCH_MODULE(ConvLSTM);

/// Upsamples x2 three times (nearest + conv) with composite skip features at 1/4 and 1/2.
class DecoderImpl : public torch::nn::Module {
 public:
  explicit DecoderImpl(const std::array<int64_t, 4>& widths);
  /// Returns (finest feature map, raw output in [0, 1]).
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& bottleneck,
                                                  const torch::Tensor& skip_quarter,
                                                  const torch::Tensor& skip_half);

 private:
  ConvAct up_quarter_{nullptr}, fuse_quarter_{nullptr};
  ConvAct up_half_{nullptr}, fuse_half_{nullptr};
  ConvAct up_full_{nullptr}, fuse_full_{nullptr};
  torch::nn::Conv2d out_{nullptr};
};
TORCH_MODULE(Decoder);

/// Flows at scales {1/8, 1/4, 1/2} plus the raw sub-network outputs that produced them.
/// residuals[0] is the coarse prediction itself; residuals[i] = flows[i] - upsample(flows[i-1]).
struct FeatureFlows {
  std::array<torch::Tensor, 3> flows;
  std::array<torch::Tensor, 3> residuals;
};

/// Recurrent state threaded between steps.
struct ModelState {
  torch::Tensor lstm_hidden;  // [N, c4, H/8, W/8]
  torch::Tensor lstm_cell;
  torch::Tensor prev_output;  // [N, 3, H, W]

  /// Zero memory and the given previous frame.
  static ModelState initial(const torch::Tensor& prev_output, int64_t memory_channels);
};

/// The five source streams and the reference stream of one step. Stream 4 is the feedback
/// stream: the previous output (with an all-zero mask) during recurrent operation, or the
/// masked previous input frame in stage-1 mode.
struct StepInputs {
  std::array<torch::Tensor, 5> source_frames;  // [N, 3, H, W]
  std::array<torch::Tensor, 5> source_masks;   // [N, 1, H, W]
  torch::Tensor reference_frame;
  torch::Tensor reference_mask;
};

struct StepOptions {
  bool use_memory = true;
  bool blend_previous = true;
  // Test hooks for the final blend.
  std::optional<double> final_mask_override;
  bool zero_final_flow = false;
};

struct StepOutput {
  torch::Tensor output;      // Y_t, [N, 3, H, W]
  torch::Tensor raw_output;  // decoder output before the final blend
  torch::Tensor flow;        // full-resolution flow of the feedback stream, [N, 2, H, W]
  std::array<torch::Tensor, 4> comp_masks;  // scales 1/8, 1/4, 1/2, 1
  FeatureFlows feedback_flows;              // feature flows of the feedback stream
  ModelState new_state;
};

struct ParamGroup {
  std::string name;
  int64_t count = 0;
};

/// (1 - m) * reference + m * source, with m broadcast over channels.
torch::Tensor blend(const torch::Tensor& reference, const torch::Tensor& source,
                    const torch::Tensor& m);

class VINetImpl : public torch::nn::Module {
 public:
  explicit VINetImpl(ArchConfig config = {});

  const ArchConfig& config() const { return config_; }

  /// `which` selects the shared source tower or the reference tower. Input frames are
  /// [N, 3, H, W] and masks [N, 1, H, W]; hole pixels are zeroed before encoding.
  Pyramid encode(const torch::Tensor& frame, const torch::Tensor& mask, bool reference);

  /// Coarse-to-fine feature flow from source to reference pyramids at 1/8, 1/4, 1/2.
  FeatureFlows estimate_feature_flow(const Pyramid& src, const Pyramid& ref);

  /// Scale index 0..2 for 1/8, 1/4, 1/2.
  torch::Tensor aggregate(const std::vector<torch::Tensor>& warped_sources, int scale_index);

  /// Eq.-style composition at scale index 0..3 (1/8, 1/4, 1/2, 1). Returns (F_c, m).
  std::pair<torch::Tensor, torch::Tensor> compose(const torch::Tensor& aggregated,
                                                  const torch::Tensor& reference,
                                                  int scale_index,
                                                  std::optional<double> mask_override = {});

  StepOutput step(const StepInputs& inputs, const ModelState& state,
                  const StepOptions& options = {});

  /// Parameter counts per group in a fixed order; sums to the total.
  std::vector<ParamGroup> count_parameters() const;
  int64_t total_parameters() const;

  /// Parameters of the temporal memory layer.
  std::vector<torch::Tensor> memory_parameters() const;

  Encoder source_encoder{nullptr};
  Encoder reference_encoder{nullptr};
  std::array<FlowNet, 4> flow_nets{FlowNet{nullptr}, FlowNet{nullptr}, FlowNet{nullptr},
                                   FlowNet{nullptr}};
  std::array<MaskNet, 4> mask_nets{MaskNet{nullptr}, MaskNet{nullptr}, MaskNet{nullptr},
                                   MaskNet{nullptr}};
  std::array<Aggregator, 3> aggregators{Aggregator{nullptr}, Aggregator{nullptr},
                                        Aggregator{nullptr}};
  ConvLSTM memory{nullptr};
  Decoder decoder{nullptr};

 private:
  torch::Tensor prepare_input(const torch::Tensor& frame, const torch::Tensor& mask) const;

  ArchConfig config_;
};
TORCH_MODULE(VINet);

/// Group names in count_parameters() order.
const std::vector<std::string>& parameter_group_names();

}  // namespace vinet
