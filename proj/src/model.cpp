#include "vinet/model.hpp"

#include <algorithm>
#include <sstream>

#include "vinet/error.hpp"
#include "vinet/warp.hpp"

namespace vinet {

namespace {

namespace F = torch::nn::functional;

constexpr double kLeak = 0.2;
const std::array<const char*, 4> kScaleSuffix = {"1_8", "1_4", "1_2", "1"};

torch::nn::Conv2d conv3x3(int64_t in, int64_t out, int64_t stride = 1) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

std::string join3(const std::array<double, 3>& v) {
  std::ostringstream os;
  os.precision(17);
  os << v[0] << ',' << v[1] << ',' << v[2];
  return os.str();
}

std::array<double, 3> split3(const std::string& s) {
  std::array<double, 3> out{};
  std::istringstream is(s);
  char sep = 0;
  if (!(is >> out[0] >> sep >> out[1] >> sep >> out[2])) {
    throw ContractError("expected three comma-separated values, got '" + s + "'");
  }
  return out;
}

torch::Tensor upsample_nearest_2x(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kNearest));
}

// [5 * N, ...] stream-major batch -> five [N, ...] tensors.
std::vector<torch::Tensor> split_streams(const torch::Tensor& t) { return t.chunk(5, 0); }

}  // namespace

std::map<std::string, std::string> ArchConfig::to_map() const {
  std::map<std::string, std::string> kv;
  for (int i = 0; i < 4; ++i) kv["width" + std::to_string(i + 1)] = std::to_string(widths[i]);
  kv["share_reference_encoder"] = share_reference_encoder ? "1" : "0";
  kv["input_shift"] = join3(input_shift);
  kv["input_scale"] = join3(input_scale);
  return kv;
}

ArchConfig ArchConfig::from_map(const std::map<std::string, std::string>& kv) {
  ArchConfig c;
  for (int i = 0; i < 4; ++i) {
    const auto key = "width" + std::to_string(i + 1);
    auto it = kv.find(key);
    if (it == kv.end()) continue;
    try {
      size_t pos = 0;
      c.widths[i] = std::stoll(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      throw ContractError("config key '" + key + "' expects an integer, got '" + it->second + "'");
    }
    require(c.widths[i] >= 1, "config key '" + key + "' must be positive");
  }
  if (auto it = kv.find("share_reference_encoder"); it != kv.end()) {
    c.share_reference_encoder = it->second == "1" || it->second == "true";
  }
  if (auto it = kv.find("input_shift"); it != kv.end()) c.input_shift = split3(it->second);
  if (auto it = kv.find("input_scale"); it != kv.end()) c.input_scale = split3(it->second);
  return c;
}

ConvActImpl::ConvActImpl(int64_t in, int64_t out, int64_t stride, bool activate)
    : conv_(register_module("conv", conv3x3(in, out, stride))), activate_(activate) {
  // He initialization keeps activation variance stable through the leaky ReLU stack.
  torch::NoGradGuard no_grad;
  if (activate) {
    torch::nn::init::kaiming_normal_(conv_->weight, kLeak, torch::kFanIn, torch::kLeakyReLU);
  } else {
    torch::nn::init::kaiming_normal_(conv_->weight, 0.0, torch::kFanIn, torch::kLinear);
  }
}

torch::Tensor ConvActImpl::forward(const torch::Tensor& x) {
  auto y = conv_->forward(x);
  return activate_ ? F::leaky_relu(y, F::LeakyReLUFuncOptions().negative_slope(kLeak)) : y;
}

EncoderImpl::EncoderImpl(const std::array<int64_t, 4>& widths) {
  int64_t in = 4;
  for (int s = 0; s < 4; ++s) {
    torch::nn::Sequential stage(ConvAct(in, widths[s], s == 0 ? 1 : 2),
                                ConvAct(widths[s], widths[s]));
    stages_.push_back(register_module("stage" + std::to_string(s), stage));
    in = widths[s];
  }
}

Pyramid EncoderImpl::forward(const torch::Tensor& x) {
  Pyramid out;
  auto h = x;
  for (int s = 0; s < 4; ++s) {
    h = stages_[s]->forward(h);
    out[s] = h;
  }
  return out;
}

FlowNetImpl::FlowNetImpl(int64_t in, int64_t hidden) {
  const int64_t h2 = std::max<int64_t>(hidden / 2, 4);
  const int64_t h4 = std::max<int64_t>(hidden / 4, 4);
  auto last = conv3x3(h4, 2);
  {
    torch::NoGradGuard no_grad;
    last->weight.mul_(0.1);
    last->bias.zero_();
  }
  body_ = register_module(
      "body", torch::nn::Sequential(ConvAct(in, hidden), ConvAct(hidden, h2), ConvAct(h2, h4), last));
}

torch::Tensor FlowNetImpl::forward(const torch::Tensor& x) { return body_->forward(x); }

MaskNetImpl::MaskNetImpl(int64_t in) {
  const int64_t h2 = std::max<int64_t>(in / 2, 2);
  const int64_t h4 = std::max<int64_t>(in / 4, 2);
  body_ = register_module(
      "body", torch::nn::Sequential(ConvAct(in, h2), ConvAct(h2, h4), conv3x3(h4, 1)));
}

torch::Tensor MaskNetImpl::forward(const torch::Tensor& abs_diff) {
  return torch::sigmoid(body_->forward(abs_diff));
}

AggregatorImpl::AggregatorImpl(int64_t channels)
    : conv(register_module("conv", torch::nn::Conv3d(torch::nn::Conv3dOptions(channels, channels, {5, 3, 3})
                                                         .padding({0, 1, 1})))) {
  // Variance-preserving linear initialization over the 5x3x3 window.
  torch::NoGradGuard no_grad;
  torch::nn::init::kaiming_normal_(conv->weight, 0.0, torch::kFanIn, torch::kLinear);
}

torch::Tensor AggregatorImpl::forward(const std::vector<torch::Tensor>& streams) {
  require(streams.size() == 5, "aggregate: exactly five source streams are required, got " +
                                   std::to_string(streams.size()));
  for (const auto& s : streams) {
    if (s.sizes() != streams.front().sizes()) {
      throw DimensionMismatch("aggregate: source streams differ in shape");
    }
  }
  auto stacked = torch::stack(streams, 2);  // [N, C, 5, H, W]
  return conv->forward(stacked).squeeze(2);
}

torch::Tensor AggregatorImpl::forward_stacked(const torch::Tensor& stacked) {
  require(stacked.size(0) % 5 == 0, "aggregate: stacked batch must hold five streams");
  const int64_t n = stacked.size(0) / 5;
  auto x = stacked.view({5, n, stacked.size(1), stacked.size(2), stacked.size(3)})
               .permute({1, 2, 0, 3, 4});
  return conv->forward(x).squeeze(2);
}

ConvLSTMImpl::ConvLSTMImpl(int64_t in, int64_t hidden)
    : gates_(register_module("gates", conv3x3(in + hidden, 4 * hidden))), hidden_(hidden) {}

std::pair<torch::Tensor, torch::Tensor> ConvLSTMImpl::forward(const torch::Tensor& x,
                                                              const torch::Tensor& h,
                                                              const torch::Tensor& c) {
  auto g = gates_->forward(torch::cat({x, h}, 1)).chunk(4, 1);
  auto i = torch::sigmoid(g[0]);
  auto f = torch::sigmoid(g[1]);
  auto o = torch::sigmoid(g[2]);
  auto cand = torch::tanh(g[3]);
  auto c_next = f * c + i * cand;
  auto h_next = o * torch::tanh(c_next);
  return {h_next, c_next};
}

DecoderImpl::DecoderImpl(const std::array<int64_t, 4>& w)
    : up_quarter_(register_module("up_quarter", ConvAct(w[3], w[2]))),
      fuse_quarter_(register_module("fuse_quarter", ConvAct(2 * w[2], w[2]))),
      up_half_(register_module("up_half", ConvAct(w[2], w[1]))),
      fuse_half_(register_module("fuse_half", ConvAct(2 * w[1], w[1]))),
      up_full_(register_module("up_full", ConvAct(w[1], w[0]))),
      fuse_full_(register_module("fuse_full", ConvAct(w[0], w[0]))),
      out_(register_module("out", conv3x3(w[0], 3))) {}

std::pair<torch::Tensor, torch::Tensor> DecoderImpl::forward(const torch::Tensor& bottleneck,
                                                             const torch::Tensor& skip_quarter,
                                                             const torch::Tensor& skip_half) {
  auto x = up_quarter_->forward(upsample_nearest_2x(bottleneck));
  x = fuse_quarter_->forward(torch::cat({x, skip_quarter}, 1));
  x = up_half_->forward(upsample_nearest_2x(x));
  x = fuse_half_->forward(torch::cat({x, skip_half}, 1));
  x = up_full_->forward(upsample_nearest_2x(x));
  auto feat = fuse_full_->forward(x);
  return {feat, torch::sigmoid(out_->forward(feat))};
}

ModelState ModelState::initial(const torch::Tensor& prev_output, int64_t memory_channels) {
  require(prev_output.dim() == 4 && prev_output.size(1) == 3,
          "ModelState::initial: previous output must be [N, 3, H, W]");
  ModelState s;
  s.prev_output = prev_output;
  s.lstm_hidden = torch::zeros({prev_output.size(0), memory_channels, prev_output.size(2) / 8,
                                prev_output.size(3) / 8},
                               prev_output.options());
  s.lstm_cell = torch::zeros_like(s.lstm_hidden);
  return s;
}

torch::Tensor blend(const torch::Tensor& reference, const torch::Tensor& source,
                    const torch::Tensor& m) {
  if (reference.sizes() != source.sizes()) throw DimensionMismatch("blend: shape mismatch");
  return (1 - m) * reference + m * source;
}

const std::vector<std::string>& parameter_group_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n{"source_encoder", "reference_encoder"};
    for (auto s : kScaleSuffix) n.push_back(std::string("flow_") + s);
    for (auto s : kScaleSuffix) n.push_back(std::string("mask_") + s);
    for (int i = 0; i < 3; ++i) n.push_back(std::string("aggregate_") + kScaleSuffix[i]);
    n.push_back("convlstm");
    n.push_back("decoder");
    return n;
  }();
  return names;
}

VINetImpl::VINetImpl(ArchConfig config) : config_(config) {
  const auto& w = config_.widths;
  for (auto c : w) require(c >= 1, "ArchConfig: channel widths must be positive");
  source_encoder = register_module("source_encoder", Encoder(w));
  reference_encoder = config_.share_reference_encoder
                          ? source_encoder
                          : register_module("reference_encoder", Encoder(w));
  // Flow inputs: (src, ref) at 1/8; (warped src, ref, upsampled flow) at finer scales.
  const std::array<int64_t, 4> flow_in = {2 * w[3], 2 * w[2] + 2, 2 * w[1] + 2, 2 * w[0] + 2};
  const std::array<int64_t, 4> scale_width = {w[3], w[2], w[1], w[0]};
  for (int i = 0; i < 4; ++i) {
    flow_nets[i] = register_module(std::string("flow_") + kScaleSuffix[i],
                                   FlowNet(flow_in[i], std::max<int64_t>(scale_width[i] / 2, 8)));
    mask_nets[i] = register_module(std::string("mask_") + kScaleSuffix[i], MaskNet(scale_width[i]));
  }
  for (int i = 0; i < 3; ++i) {
    aggregators[i] =
        register_module(std::string("aggregate_") + kScaleSuffix[i], Aggregator(scale_width[i]));
  }
  memory = register_module("convlstm", ConvLSTM(w[3], w[3]));
  decoder = register_module("decoder", Decoder(w));
}

torch::Tensor VINetImpl::prepare_input(const torch::Tensor& frame, const torch::Tensor& mask) const {
  require(frame.dim() == 4 && frame.size(1) == 3, "encode: frame must be [N, 3, H, W]");
  require(mask.dim() == 4 && mask.size(1) == 1, "encode: mask must be [N, 1, H, W]");
  if (frame.size(0) != mask.size(0) || frame.size(2) != mask.size(2) ||
      frame.size(3) != mask.size(3)) {
    throw DimensionMismatch("encode: frame and mask sizes differ");
  }
  const int64_t h = frame.size(2);
  const int64_t w = frame.size(3);
  if (h < 16 || w < 16 || h % 8 != 0 || w % 8 != 0) {
    throw ContractError("encode: input size " + std::to_string(h) + "x" + std::to_string(w) +
                        " must be >= 16 and divisible by 8");
  }
  auto opts = frame.options();
  auto shift = torch::tensor(std::vector<double>(config_.input_shift.begin(), config_.input_shift.end()),
                             opts.dtype(torch::kFloat64))
                   .to(frame.scalar_type())
                   .view({1, 3, 1, 1});
  auto scale = torch::tensor(std::vector<double>(config_.input_scale.begin(), config_.input_scale.end()),
                             opts.dtype(torch::kFloat64))
                   .to(frame.scalar_type())
                   .view({1, 3, 1, 1});
  auto m = mask.to(frame.scalar_type());
  auto rgb = ((frame - shift) / scale) * (1 - m);
  return torch::cat({rgb, m}, 1);
}

Pyramid VINetImpl::encode(const torch::Tensor& frame, const torch::Tensor& mask, bool reference) {
  auto x = prepare_input(frame, mask);
  return reference ? reference_encoder->forward(x) : source_encoder->forward(x);
}

FeatureFlows VINetImpl::estimate_feature_flow(const Pyramid& src, const Pyramid& ref) {
  for (int s = 0; s < 4; ++s) {
    if (src[s].sizes() != ref[s].sizes()) {
      throw DimensionMismatch("estimate_feature_flow: source and reference pyramids differ");
    }
  }
  FeatureFlows out;
  out.residuals[0] = flow_nets[0]->forward(torch::cat({src[3], ref[3]}, 1));
  out.flows[0] = out.residuals[0];
  for (int i = 1; i < 3; ++i) {
    const int level = 3 - i;  // pyramid index of this scale
    auto up = upsample_flow_2x(out.flows[i - 1]);
    auto warped = bilinear_warp(src[level], up);
    out.residuals[i] = flow_nets[i]->forward(torch::cat({warped, ref[level], up}, 1));
    out.flows[i] = up + out.residuals[i];
  }
  return out;
}

torch::Tensor VINetImpl::aggregate(const std::vector<torch::Tensor>& warped_sources,
                                   int scale_index) {
  require(scale_index >= 0 && scale_index < 3, "aggregate: scale index must be 0..2");
  return aggregators[scale_index]->forward(warped_sources);
}

std::pair<torch::Tensor, torch::Tensor> VINetImpl::compose(const torch::Tensor& aggregated,
                                                           const torch::Tensor& reference,
                                                           int scale_index,
                                                           std::optional<double> mask_override) {
  require(scale_index >= 0 && scale_index < 4, "compose: scale index must be 0..3");
  if (aggregated.sizes() != reference.sizes()) {
    throw DimensionMismatch("compose: aggregated and reference features differ in shape");
  }
  torch::Tensor m;
  if (mask_override) {
    m = torch::full({aggregated.size(0), 1, aggregated.size(2), aggregated.size(3)},
                    *mask_override, aggregated.options());
  } else {
    m = mask_nets[scale_index]->forward((aggregated - reference).abs());
  }
  return {blend(reference, aggregated, m), m};
}

StepOutput VINetImpl::step(const StepInputs& in, const ModelState& state,
                           const StepOptions& options) {
  const auto dtype = decoder->parameters().front().scalar_type();
  auto ref_frame = in.reference_frame.to(dtype);
  auto ref_mask = in.reference_mask.to(dtype);
  const int64_t n = ref_frame.size(0);
  const int64_t h = ref_frame.size(2);
  const int64_t w = ref_frame.size(3);
  std::vector<torch::Tensor> frames;
  std::vector<torch::Tensor> masks;
  for (int s = 0; s < 5; ++s) {
    if (in.source_frames[s].sizes() != ref_frame.sizes() ||
        in.source_masks[s].sizes() != ref_mask.sizes()) {
      throw DimensionMismatch("step: source stream " + std::to_string(s) +
                              " does not match the reference shape");
    }
    frames.push_back(in.source_frames[s].to(dtype));
    masks.push_back(in.source_masks[s].to(dtype));
  }
  if (options.use_memory) {
    const std::vector<int64_t> expect = {n, config_.widths[3], h / 8, w / 8};
    if (!state.lstm_hidden.defined() || state.lstm_hidden.sizes() != expect ||
        !state.lstm_cell.defined() || state.lstm_cell.sizes() != expect) {
      throw ContractError("step: memory state dimensions do not match the input resolution");
    }
  }

  // (1) Encode: the five source streams share a tower and run as one stream-major batch.
  Pyramid src = encode(torch::cat(frames, 0), torch::cat(masks, 0), false);
  Pyramid ref = encode(ref_frame, ref_mask, true);
  Pyramid ref5;
  for (int s = 0; s < 4; ++s) ref5[s] = ref[s].repeat({5, 1, 1, 1});

  // (2) Feature flows at 1/8, 1/4, 1/2 and aligned source features.
  FeatureFlows flows = estimate_feature_flow(src, ref5);
  StepOutput out;
  torch::Tensor composite[3];
  for (int i = 0; i < 3; ++i) {
    const int level = 3 - i;
    auto warped = bilinear_warp(src[level], flows.flows[i]);
    // (3) Temporal aggregation and composition with the reference features.
    auto aggregated = aggregators[i]->forward_stacked(warped);
    auto [fc, m] = compose(aggregated, ref[level], i);
    composite[i] = fc;
    out.comp_masks[i] = m;
  }
  for (int i = 0; i < 3; ++i) {
    out.feedback_flows.flows[i] = split_streams(flows.flows[i])[4];
    out.feedback_flows.residuals[i] = split_streams(flows.residuals[i])[4];
  }

  // Full-resolution refinement for the feedback stream only.
  auto feedback_full = split_streams(src[0])[4];
  auto up = upsample_flow_2x(out.feedback_flows.flows[2]);
  auto warped_full = bilinear_warp(feedback_full, up);
  out.flow = up + flow_nets[3]->forward(torch::cat({warped_full, ref[0], up}, 1));
  if (options.zero_final_flow) out.flow = torch::zeros_like(out.flow);

  // (4) Temporal memory at 1/8.
  torch::Tensor bottleneck = composite[0];
  out.new_state = state;
  if (options.use_memory) {
    auto [h_next, c_next] = memory->forward(composite[0], state.lstm_hidden, state.lstm_cell);
    bottleneck = h_next;
    out.new_state.lstm_hidden = h_next;
    out.new_state.lstm_cell = c_next;
  }

  // (5) Decode with composite skips at 1/4 and 1/2.
  auto [finest, raw] = decoder->forward(bottleneck, composite[1], composite[2]);
  out.raw_output = raw;

  // (6) Blend with the warped previous frame.
  auto prev = frames[4];
  auto warped_prev = bilinear_warp(prev, out.flow);
  auto warped_feedback_feat = options.zero_final_flow ? feedback_full
                                                      : bilinear_warp(feedback_full, out.flow);
  if (options.final_mask_override) {
    out.comp_masks[3] = torch::full({n, 1, h, w}, *options.final_mask_override, raw.options());
  } else {
    out.comp_masks[3] = mask_nets[3]->forward((finest - warped_feedback_feat).abs());
  }
  out.output = options.blend_previous ? blend(raw, warped_prev, out.comp_masks[3]) : raw;
  out.new_state.prev_output = out.output;
  return out;
}

std::vector<ParamGroup> VINetImpl::count_parameters() const {
  std::vector<ParamGroup> groups;
  for (const auto& name : parameter_group_names()) groups.push_back({name, 0});
  for (const auto& item : named_parameters(/*recurse=*/true)) {
    const auto& key = item.key();
    const auto group = key.substr(0, key.find('.'));
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const ParamGroup& g) { return g.name == group; });
    if (it == groups.end()) throw std::logic_error("parameter outside every group: " + key);
    it->count += item.value().numel();
  }
  return groups;
}

int64_t VINetImpl::total_parameters() const {
  int64_t total = 0;
  for (const auto& p : parameters()) total += p.numel();
  return total;
}

std::vector<torch::Tensor> VINetImpl::memory_parameters() const { return memory->parameters(); }

}  // namespace vinet
