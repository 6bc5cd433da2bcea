#include "vinet/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "vinet/checkpoint.hpp"
#include "vinet/error.hpp"
#include "vinet/warp.hpp"

namespace vinet {

namespace fs = std::filesystem;

namespace {

std::string frame_name(int64_t t, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%05lld%s", static_cast<long long>(t), suffix);
  return buf;
}

uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  // splitmix64 finalizer
  uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

torch::Tensor load_flow_stack(const fs::path& dir, int64_t length, const char* suffix,
                              int64_t h, int64_t w) {
  std::vector<torch::Tensor> flows{torch::zeros({2, h, w})};
  for (int64_t t = 1; t < length; ++t) {
    auto flow = read_flow(dir / frame_name(t, suffix));
    if (flow.height() != h || flow.width() != w) flow = resize_flow(flow, h, w);
    flows.push_back(flow.tensor());
  }
  return torch::stack(flows);
}

torch::Tensor load_occ_stack(const fs::path& dir, int64_t length, const char* suffix,
                             int64_t h, int64_t w) {
  std::vector<torch::Tensor> masks{torch::ones({1, h, w})};
  for (int64_t t = 1; t < length; ++t) {
    auto path = dir / frame_name(t, suffix);
    torch::Tensor m = fs::exists(path) ? read_binary_png(path) : torch::ones({1, h, w});
    if (m.size(1) != h || m.size(2) != w) m = (resize_bilinear(m, h, w) >= 0.5).to(torch::kFloat32);
    masks.push_back(m);
  }
  return torch::stack(masks);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

torch::Tensor masked(const torch::Tensor& frame, const torch::Tensor& mask) {
  return frame * (1 - mask);
}

}  // namespace

std::vector<std::string> read_manifest(const fs::path& root) {
  std::ifstream in(root / "manifest.txt");
  if (!in) throw IoError("missing manifest: " + (root / "manifest.txt").string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    line.erase(line.find_last_not_of(" \t\r") + 1);
    if (!line.empty() && line[0] != '#') names.push_back(line);
  }
  return names;
}

Dataset Dataset::load(const fs::path& root, bool require_flows,
                      std::optional<std::pair<int64_t, int64_t>> size) {
  std::vector<ClipData> clips;
  for (const auto& name : read_manifest(root)) {
    const fs::path dir = root / name;
    ClipData c;
    c.name = name;
    Clip clip = load_clip(dir / "frames");
    const int64_t h = size ? size->first : clip.height();
    const int64_t w = size ? size->second : clip.width();
    if (clip.height() != h || clip.width() != w) {
      std::vector<Frame> resized;
      for (const auto& f : clip.frames()) resized.push_back(resize_frame(f, h, w));
      clip = Clip(std::move(resized));
    }
    c.frames = clip.stacked();
    const int64_t length = c.length();
    const fs::path flow_dir = dir / "flow";
    const bool flows_present = length == 1 || fs::exists(flow_dir / frame_name(length - 1, "_bwd.flo"));
    if (flows_present) {
      c.flows_prev = load_flow_stack(flow_dir, length, "_bwd.flo", h, w);
      c.flows_first = load_flow_stack(flow_dir, length, "_to1.flo", h, w);
      c.occl_prev = load_occ_stack(dir / "occ", length, "_bwd.png", h, w);
      c.occl_first = load_occ_stack(dir / "occ", length, "_to1.png", h, w);
    } else if (require_flows) {
      throw IoError("missing flow cache for clip '" + name + "'; run cache-flow first");
    }
    if (fs::is_directory(dir / "seg")) {
      auto seg = load_mask_seq(dir / "seg");
      if (static_cast<int64_t>(seg.size()) != length) {
        throw ContractError("segmentation of clip '" + name + "' has a different frame count");
      }
      auto stacked = seg.stacked();
      if (stacked.size(2) != h || stacked.size(3) != w) {
        stacked = (resize_bilinear(stacked, h, w) >= 0.5).to(torch::kFloat32);
      }
      c.segmentation = stacked;
    }
    clips.push_back(std::move(c));
  }
  if (clips.empty()) throw ContractError("dataset at " + root.string() + " lists no clips");
  return Dataset(std::move(clips));
}

std::array<int64_t, 5> neighbor_indices(int64_t t, int64_t length, int64_t stride) {
  require(length >= 1, "neighbor_indices: empty clip");
  std::array<int64_t, 5> out{};
  for (int i = 0; i < 5; ++i) out[i] = std::clamp<int64_t>(t + (i - 2) * stride, 0, length - 1);
  return out;
}

std::vector<int64_t> TrainSample::targets(int64_t recurrence, int64_t length) const {
  std::vector<int64_t> out;
  for (int64_t k = 0; k < recurrence; ++k) out.push_back(std::min(start + k, length - 1));
  return out;
}

std::vector<TrainSample> sample_batch(const Dataset& dataset, const SamplingOptions& options,
                                      uint64_t seed) {
  if (dataset.empty()) throw ContractError("sample_batch: empty dataset");
  require(options.batch_size >= 1 && options.recurrence >= 1, "sample_batch: invalid options");
  require(!options.mask_kinds.empty(), "sample_batch: no mask kinds configured");
  std::mt19937_64 rng(seed);
  std::vector<TrainSample> batch;
  for (int64_t b = 0; b < options.batch_size; ++b) {
    TrainSample s;
    s.clip_index = std::uniform_int_distribution<size_t>(0, dataset.size() - 1)(rng);
    const auto& clip = dataset[s.clip_index];
    const int64_t length = clip.length();
    s.start = std::uniform_int_distribution<int64_t>(
        0, std::max<int64_t>(0, length - options.recurrence))(rng);
    std::vector<MaskKind> kinds;
    for (auto k : options.mask_kinds) {
      if (k != MaskKind::Object || clip.segmentation.defined()) kinds.push_back(k);
    }
    if (kinds.empty()) kinds.push_back(MaskKind::RandomSquare);
    s.mask_kind = kinds[std::uniform_int_distribution<size_t>(0, kinds.size() - 1)(rng)];
    s.mask_seed = rng();
    const int64_t h = clip.frames.size(2);
    const int64_t w = clip.frames.size(3);
    if (s.mask_kind == MaskKind::Object) {
      s.masks = dilate_masks(MaskSeq::from_tensor(clip.segmentation), options.object_dilation)
                    .stacked();
    } else {
      MaskSpec spec;
      spec.kind = s.mask_kind;
      spec.seed = s.mask_seed;
      s.masks = generate_masks(spec, length, h, w).stacked();
    }
    batch.push_back(std::move(s));
  }
  return batch;
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& cfg) {
  cfg.check_known({"stage", "preset", "lr", "beta1", "beta2", "lambda_r", "lambda_f", "lambda_w",
                   "batch_size", "iterations", "seed", "height", "width", "width1", "width2",
                   "width3", "width4", "share_reference_encoder", "input_shift", "input_scale",
                   "checkpoint_every", "log_every", "recurrence", "stride", "detach_feedback",
                   "hole_weight", "object_dilation", "mask_kinds"});
  TrainConfig c;
  const auto preset = cfg.get_string("preset", "desk");
  if (preset == "full") {
    c.height = 256;
    c.width = 256;
  } else if (preset != "desk") {
    throw ContractError("unknown preset '" + preset + "' (expected desk or full)");
  }
  c.stage = static_cast<int>(cfg.get_int("stage", c.stage));
  c.learning_rate = cfg.get_double("lr", c.learning_rate);
  c.beta1 = cfg.get_double("beta1", c.beta1);
  c.beta2 = cfg.get_double("beta2", c.beta2);
  c.weights.recon = cfg.get_double("lambda_r", c.weights.recon);
  c.weights.flow = cfg.get_double("lambda_f", c.weights.flow);
  c.weights.warp = cfg.get_double("lambda_w", c.weights.warp);
  c.batch_size = cfg.get_int("batch_size", c.batch_size);
  c.iterations = cfg.get_int("iterations", c.iterations);
  c.seed = static_cast<uint64_t>(cfg.get_int("seed", static_cast<long long>(c.seed)));
  c.height = cfg.get_int("height", c.height);
  c.width = cfg.get_int("width", c.width);
  c.arch = ArchConfig::from_map(cfg.values());
  c.checkpoint_every = cfg.get_int("checkpoint_every", c.checkpoint_every);
  c.log_every = cfg.get_int("log_every", c.log_every);
  c.recurrence = cfg.get_int("recurrence", c.recurrence);
  c.stride = cfg.get_int("stride", c.stride);
  c.detach_feedback = cfg.get_bool("detach_feedback", c.detach_feedback);
  c.hole_weight = cfg.get_double("hole_weight", c.hole_weight);
  c.object_dilation = static_cast<int>(cfg.get_int("object_dilation", c.object_dilation));
  if (cfg.has("mask_kinds")) {
    c.mask_kinds.clear();
    for (const auto& k : split_list(cfg.get_string("mask_kinds", ""))) {
      c.mask_kinds.push_back(parse_mask_kind(k));
    }
  }

  require(c.stage == 1 || c.stage == 2, "stage must be 1 or 2");
  require(c.learning_rate > 0, "lr must be positive");
  require(c.batch_size >= 1, "batch_size must be >= 1");
  require(c.iterations >= 0, "iterations must be >= 0");
  require(is_dyadic_size(c.height, c.width), "resolution must be >= 16 and divisible by 8");
  require(c.recurrence >= 2 || c.stage == 1, "stage 2 needs a recurrence of at least 2");
  require(c.stride >= 1, "stride must be >= 1");
  require(c.weights.recon >= 0 && c.weights.flow >= 0 && c.weights.warp >= 0,
          "loss weights must be non-negative");
  require(!c.mask_kinds.empty(), "mask_kinds must not be empty");
  return c;
}

KeyValueConfig TrainConfig::to_config() const {
  KeyValueConfig kv(arch.to_map());
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  kv.set("stage", std::to_string(stage));
  kv.set("lr", num(learning_rate));
  kv.set("beta1", num(beta1));
  kv.set("beta2", num(beta2));
  kv.set("lambda_r", num(weights.recon));
  kv.set("lambda_f", num(weights.flow));
  kv.set("lambda_w", num(weights.warp));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("iterations", std::to_string(iterations));
  kv.set("seed", std::to_string(seed));
  kv.set("height", std::to_string(height));
  kv.set("width", std::to_string(width));
  kv.set("checkpoint_every", std::to_string(checkpoint_every));
  kv.set("log_every", std::to_string(log_every));
  kv.set("recurrence", std::to_string(recurrence));
  kv.set("stride", std::to_string(stride));
  kv.set("detach_feedback", detach_feedback ? "1" : "0");
  kv.set("hole_weight", num(hole_weight));
  kv.set("object_dilation", std::to_string(object_dilation));
  std::string kinds;
  for (auto k : mask_kinds) kinds += (kinds.empty() ? "" : ",") + to_string(k);
  kv.set("mask_kinds", kinds);
  return kv;
}

SamplingOptions TrainConfig::sampling() const {
  SamplingOptions s;
  s.batch_size = batch_size;
  s.recurrence = recurrence;
  s.mask_kinds = mask_kinds;
  s.object_dilation = object_dilation;
  return s;
}

StepOptions recurrent_mode() {
  StepOptions o;
  o.use_memory = true;
  o.blend_previous = true;
  return o;
}

StepOptions per_frame_mode() {
  StepOptions o;
  o.use_memory = false;
  o.blend_previous = false;
  return o;
}

WindowResult run_window(VINet& model, const Dataset& dataset,
                        const std::vector<TrainSample>& batch, const TrainConfig& config) {
  require(!batch.empty(), "run_window: empty batch");
  const auto dtype = model->decoder->parameters().front().scalar_type();
  const int64_t r = config.recurrence;
  const int64_t b = static_cast<int64_t>(batch.size());

  // Per target position k: stacked inputs over the batch.
  struct Slot {
    std::array<std::vector<torch::Tensor>, 5> src_f, src_m;
    std::vector<torch::Tensor> ref_f, ref_m, gt, prev_gt;
    std::vector<torch::Tensor> flow_prev, occl_prev, flow_first, occl_first, first_frame;
  };
  std::vector<Slot> slots(r);
  std::vector<torch::Tensor> initial_prev;
  for (const auto& s : batch) {
    const auto& clip = dataset[s.clip_index];
    const int64_t length = clip.length();
    if (config.stage == 2) {
      require(length >= r, "run_window: stage 2 needs clips of at least " + std::to_string(r) +
                               " frames (clip '" + clip.name + "')");
      require(clip.has_flows(), "run_window: stage 2 needs cached flows for clip '" + clip.name + "'");
    }
    const auto targets = s.targets(r, length);
    const int64_t before = std::max<int64_t>(targets[0] - 1, 0);
    initial_prev.push_back(masked(clip.frames[before], s.masks[before]));
    for (int64_t k = 0; k < r; ++k) {
      const int64_t t = targets[k];
      const auto nb = neighbor_indices(t, length, config.stride);
      const int64_t prev = std::max<int64_t>(t - 1, 0);
      auto& slot = slots[k];
      const std::array<int64_t, 5> src_idx = {nb[0], nb[1], nb[3], nb[4], prev};
      for (int i = 0; i < 5; ++i) {
        slot.src_f[i].push_back(clip.frames[src_idx[i]]);
        slot.src_m[i].push_back(s.masks[src_idx[i]]);
      }
      slot.ref_f.push_back(clip.frames[t]);
      slot.ref_m.push_back(s.masks[t]);
      slot.gt.push_back(clip.frames[t]);
      if (config.stage == 2) {
        slot.flow_prev.push_back(clip.flows_prev[t]);
        slot.occl_prev.push_back(clip.occl_prev[t]);
        slot.flow_first.push_back(clip.flows_first[t]);
        slot.occl_first.push_back(clip.occl_first[t]);
        slot.first_frame.push_back(clip.frames[0]);
      }
    }
  }
  auto stack = [&](const std::vector<torch::Tensor>& v) { return torch::stack(v).to(dtype); };

  WindowResult result;
  if (config.stage == 1) {
    // Every target is independent: run them as one batch ordered [k][b].
    StepInputs in;
    std::vector<torch::Tensor> f[5], m[5], rf, rm, gt;
    for (int64_t k = 0; k < r; ++k) {
      for (int i = 0; i < 5; ++i) {
        f[i].push_back(stack(slots[k].src_f[i]));
        m[i].push_back(stack(slots[k].src_m[i]));
      }
      rf.push_back(stack(slots[k].ref_f));
      rm.push_back(stack(slots[k].ref_m));
      gt.push_back(stack(slots[k].gt));
    }
    for (int i = 0; i < 5; ++i) {
      in.source_frames[i] = torch::cat(f[i]);
      in.source_masks[i] = torch::cat(m[i]);
    }
    in.reference_frame = torch::cat(rf);
    in.reference_mask = torch::cat(rm);
    auto state = ModelState::initial(in.source_frames[4], config.arch.widths[3]);
    auto out = model->step(in, state, per_frame_mode());
    auto recon = recon_loss(out.output, torch::cat(gt), in.reference_mask, config.hole_weight);
    result.terms.recon_l1 = recon.l1;
    result.terms.recon_ssim = recon.ssim_term;
    result.outputs = out.output.chunk(r, 0);
    return result;
  }

  auto state = ModelState::initial(stack(initial_prev), config.arch.widths[3]);
  std::vector<torch::Tensor> preds, pred_flows, gts;
  torch::Tensor l1_sum, ssim_sum;
  for (int64_t k = 0; k < r; ++k) {
    StepInputs in;
    for (int i = 0; i < 4; ++i) {
      in.source_frames[i] = stack(slots[k].src_f[i]);
      in.source_masks[i] = stack(slots[k].src_m[i]);
    }
    in.source_frames[4] = state.prev_output;
    in.source_masks[4] = torch::zeros({b, 1, state.prev_output.size(2), state.prev_output.size(3)},
                                      state.prev_output.options());
    in.reference_frame = stack(slots[k].ref_f);
    in.reference_mask = stack(slots[k].ref_m);
    auto out = model->step(in, state, recurrent_mode());
    auto gt = stack(slots[k].gt);
    auto recon = recon_loss(out.output, gt, in.reference_mask, config.hole_weight);
    l1_sum = l1_sum.defined() ? l1_sum + recon.l1 : recon.l1;
    ssim_sum = ssim_sum.defined() ? ssim_sum + recon.ssim_term : recon.ssim_term;
    preds.push_back(out.output);
    pred_flows.push_back(out.flow);
    gts.push_back(gt);
    state = out.new_state;
    if (config.detach_feedback) state.prev_output = state.prev_output.detach();
  }
  result.terms.recon_l1 = l1_sum / static_cast<double>(r);
  result.terms.recon_ssim = ssim_sum / static_cast<double>(r);

  std::vector<torch::Tensor> gt_flows, occl, flows_first, occl_first;
  for (int64_t k = 1; k < r; ++k) {
    gt_flows.push_back(stack(slots[k].flow_prev));
    occl.push_back(stack(slots[k].occl_prev));
    flows_first.push_back(stack(slots[k].flow_first));
    occl_first.push_back(stack(slots[k].occl_first));
  }
  auto flow_terms = flow_loss(std::vector<torch::Tensor>(pred_flows.begin() + 1, pred_flows.end()),
                              gt_flows, gts);
  result.terms.flow_epe = flow_terms.epe;
  result.terms.flow_warp = flow_terms.warp;
  auto warp_terms = warping_loss(preds, gts, gt_flows, occl, flows_first, occl_first,
                                 stack(slots[0].first_frame));
  result.terms.warp_short = warp_terms.short_term;
  result.terms.warp_long = warp_terms.long_term;
  result.outputs = preds;
  return result;
}

namespace {

void dump_diverged_batch(const fs::path& out_dir, int64_t iteration, const Dataset& dataset,
                         const std::vector<TrainSample>& batch, const LossReport& report) {
  std::ofstream dump(out_dir / "nan_dump.txt");
  dump << "iteration " << iteration << "\n" << LossReport::csv_header() << "\n"
       << report.csv_row(iteration) << "\n";
  for (const auto& s : batch) {
    dump << "clip=" << dataset[s.clip_index].name << " start=" << s.start
         << " mask_kind=" << to_string(s.mask_kind) << " mask_seed=" << s.mask_seed << "\n";
  }
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& dataset,
                  const std::optional<fs::path>& checkpoint_in, const fs::path& out_dir,
                  const ProgressFn& progress) {
  require(config.stage == 1 || config.stage == 2, "train: stage must be 1 or 2");
  if (config.stage == 2 && !checkpoint_in) {
    throw ContractError("train: stage 2 requires a stage-1 checkpoint (--ckpt)");
  }
  if (dataset.empty()) throw ContractError("train: empty dataset");

  torch::manual_seed(config.seed);
  VINet model(config.arch);
  CheckpointMeta meta{config.arch, config.stage, 0};
  if (checkpoint_in) {
    auto loaded = load_checkpoint(model, *checkpoint_in);
    meta.iteration = loaded.stage == config.stage ? loaded.iteration : 0;
  }
  model->train();

  fs::create_directories(out_dir);
  TrainResult result;
  result.checkpoint = out_dir / "checkpoint.bin";
  result.loss_csv = out_dir / "loss.csv";
  std::ofstream csv(result.loss_csv, std::ios::trunc);
  if (!csv) throw IoError("cannot write " + result.loss_csv.string());
  csv << LossReport::csv_header() << "\n";

  torch::optim::Adam optimizer(
      model->parameters(),
      torch::optim::AdamOptions(config.learning_rate).betas({config.beta1, config.beta2}));

  const auto sampling = config.sampling();
  for (int64_t it = 1; it <= config.iterations; ++it) {
    auto batch = sample_batch(dataset, sampling, mix_seed(config.seed, static_cast<uint64_t>(it)));
    optimizer.zero_grad();
    auto window = run_window(model, dataset, batch, config);
    auto loss = total_loss(window.terms, config.weights);
    auto report = make_report(window.terms, config.weights);
    if (!std::isfinite(report.total)) {
      dump_diverged_batch(out_dir, it, dataset, batch, report);
      throw TrainingDiverged("non-finite loss at iteration " + std::to_string(it) + "; batch dumped to " +
                             (out_dir / "nan_dump.txt").string());
    }
    loss.backward();
    optimizer.step();
    csv << report.csv_row(it) << "\n";
    result.last = report;
    meta.iteration += 1;
    if (progress && (it % std::max<int64_t>(config.log_every, 1) == 0 || it == config.iterations)) {
      progress(it, report);
    }
    if (config.checkpoint_every > 0 && it % config.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "ckpt_%06lld.bin", static_cast<long long>(it));
      save_checkpoint(model, meta, out_dir / name);
    }
  }
  csv.flush();
  save_checkpoint(model, meta, result.checkpoint);
  result.iterations = config.iterations;
  return result;
}

InferResult infer(VINet& model, const Clip& clip, const MaskSeq& masks, bool recurrent,
                  int64_t stride) {
  check_aligned(clip, masks);
  torch::NoGradGuard no_grad;
  model->eval();
  const auto dtype = model->decoder->parameters().front().scalar_type();
  auto frames = clip.stacked().to(dtype);
  auto holes = masks.stacked().to(dtype);
  const int64_t length = frames.size(0);
  const int64_t h = frames.size(2);
  const int64_t w = frames.size(3);
  const int64_t memory_channels = model->config().widths[3];

  auto state = ModelState::initial(masked(frames[0], holes[0]).unsqueeze(0), memory_channels);
  const auto options = recurrent ? recurrent_mode() : per_frame_mode();
  auto zero_mask = torch::zeros({1, 1, h, w}, frames.options());

  std::vector<Frame> outputs;
  std::vector<FlowField> flows;
  std::vector<torch::Tensor> final_masks;
  for (int64_t t = 0; t < length; ++t) {
    const auto nb = neighbor_indices(t, length, stride);
    const std::array<int64_t, 4> idx = {nb[0], nb[1], nb[3], nb[4]};
    StepInputs in;
    for (int i = 0; i < 4; ++i) {
      in.source_frames[i] = frames[idx[i]].unsqueeze(0);
      in.source_masks[i] = holes[idx[i]].unsqueeze(0);
    }
    if (recurrent) {
      in.source_frames[4] = state.prev_output;
      in.source_masks[4] = zero_mask;
    } else {
      const int64_t prev = std::max<int64_t>(t - 1, 0);
      in.source_frames[4] = frames[prev].unsqueeze(0);
      in.source_masks[4] = holes[prev].unsqueeze(0);
    }
    in.reference_frame = frames[t].unsqueeze(0);
    in.reference_mask = holes[t].unsqueeze(0);
    auto out = model->step(in, state, options);
    if (recurrent) state = out.new_state;
    outputs.emplace_back(out.output[0].clamp(0.0, 1.0));
    flows.emplace_back(out.flow[0]);
    final_masks.push_back(out.comp_masks[3][0].to(torch::kFloat32));
  }
  InferResult result;
  result.frames = Clip(std::move(outputs));
  result.flows = std::move(flows);
  result.final_masks = torch::stack(final_masks);
  return result;
}

}  // namespace vinet
