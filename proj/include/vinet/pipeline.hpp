#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vinet/config.hpp"
#include "vinet/losses.hpp"
#include "vinet/maskgen.hpp"
#include "vinet/media.hpp"
#include "vinet/model.hpp"

namespace vinet {

/// One training clip held in memory. Per-pair tensors are indexed by target frame; entry 0
/// is a placeholder (zero flow, all-visible occlusion).
struct ClipData {
  std::string name;
  torch::Tensor frames;       // [T, 3, H, W]
  torch::Tensor flows_prev;   // [T, 2, H, W]  W_{t => t-1}
  torch::Tensor flows_first;  // [T, 2, H, W]  W_{t => 0}
  torch::Tensor occl_prev;    // [T, 1, H, W]
  torch::Tensor occl_first;   // [T, 1, H, W]
  torch::Tensor segmentation; // [T, 1, H, W]; undefined when the clip has none

  int64_t length() const { return frames.size(0); }
  bool has_flows() const { return flows_prev.defined(); }
};

/// Directory layout:
///   <root>/manifest.txt                clip directory names, one per line
///   <root>/<clip>/frames/%05d.png
///   <root>/<clip>/flow/%05d_bwd.flo    W_{t => t-1}, t >= 1
///   <root>/<clip>/flow/%05d_to1.flo    W_{t => first frame}
///   <root>/<clip>/occ/%05d_bwd.png     occlusion masks (255 = visible)
///   <root>/<clip>/occ/%05d_to1.png
///   <root>/<clip>/seg/%05d.png         optional object segmentation
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<ClipData> clips) : clips_(std::move(clips)) {}

  /// Loads every clip, resizing to (height, width) when given. With `require_flows`, missing
  /// flow caches are an error.
  static Dataset load(const std::filesystem::path& root, bool require_flows,
                      std::optional<std::pair<int64_t, int64_t>> size = std::nullopt);

  const std::vector<ClipData>& clips() const { return clips_; }
  const ClipData& operator[](size_t i) const { return clips_.at(i); }
  size_t size() const { return clips_.size(); }
  bool empty() const { return clips_.empty(); }

 private:
  std::vector<ClipData> clips_;
};

std::vector<std::string> read_manifest(const std::filesystem::path& root);

/// Temporal neighbours {t-2s, t-s, t, t+s, t+2s} (0-based) clamped to [0, length - 1].
std::array<int64_t, 5> neighbor_indices(int64_t t, int64_t length, int64_t stride = 3);

/// A recurrence window of `recurrence` consecutive targets in one clip plus its hole masks.
struct TrainSample {
  size_t clip_index = 0;
  int64_t start = 0;
  MaskKind mask_kind = MaskKind::RandomSquare;
  uint64_t mask_seed = 0;
  torch::Tensor masks;  // [T_clip, 1, H, W]

  std::vector<int64_t> targets(int64_t recurrence, int64_t length) const;
};

struct SamplingOptions {
  int64_t batch_size = 4;
  int64_t recurrence = 5;
  std::vector<MaskKind> mask_kinds{MaskKind::RandomSquare, MaskKind::FlyingSquare,
                                   MaskKind::Arbitrary, MaskKind::Object};
  int object_dilation = 5;
};

/// Uniform clip, uniform start index, and a mask kind drawn uniformly from the configured
/// kinds (object masks only for clips with segmentation). Deterministic in `seed`.
std::vector<TrainSample> sample_batch(const Dataset& dataset, const SamplingOptions& options,
                                      uint64_t seed);

struct TrainConfig {
  int stage = 1;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  LossWeights weights;
  int64_t batch_size = 4;
  int64_t iterations = 20000;
  uint64_t seed = 0;
  int64_t height = 64;
  int64_t width = 64;
  ArchConfig arch;
  int64_t checkpoint_every = 1000;
  int64_t log_every = 50;
  int64_t recurrence = 5;
  int64_t stride = 3;
  bool detach_feedback = false;
  double hole_weight = 0.0;
  int object_dilation = 5;
  std::vector<MaskKind> mask_kinds{MaskKind::RandomSquare, MaskKind::FlyingSquare,
                                   MaskKind::Arbitrary, MaskKind::Object};

  /// Overrides defaults from a flat key=value config; unknown keys are rejected.
  static TrainConfig from_config(const KeyValueConfig& cfg);
  KeyValueConfig to_config() const;
  SamplingOptions sampling() const;
};

/// Step options for the two operating modes.
StepOptions recurrent_mode();
StepOptions per_frame_mode();

struct WindowResult {
  LossTerms terms;
  std::vector<torch::Tensor> outputs;  // one [B, 3, H, W] per target
};

/// Forward pass and losses for one batch. Stage 1 runs every target independently (no
/// feedback, no memory, reconstruction loss only); stage 2 threads the state through the
/// window and adds the flow and warping losses.
WindowResult run_window(VINet& model, const Dataset& dataset,
                        const std::vector<TrainSample>& batch, const TrainConfig& config);

struct TrainResult {
  std::filesystem::path checkpoint;
  std::filesystem::path loss_csv;
  LossReport last;
  int64_t iterations = 0;
};

using ProgressFn = std::function<void(int64_t iteration, const LossReport&)>;

/// Writes <out_dir>/checkpoint.bin, periodic <out_dir>/ckpt_%06d.bin and <out_dir>/loss.csv.
TrainResult train(const TrainConfig& config, const Dataset& dataset,
                  const std::optional<std::filesystem::path>& checkpoint_in,
                  const std::filesystem::path& out_dir, const ProgressFn& progress = {});

struct InferResult {
  Clip frames;
  std::vector<FlowField> flows;     // full-resolution flow of the feedback stream per frame
  torch::Tensor final_masks;        // [T, 1, H, W] blend masks m_1
};

/// Sliding-window inference. In recurrent mode the previous output and the memory are
/// threaded through time starting from the masked first frame and zero memory; in per-frame
/// mode each frame is inpainted independently with the masked previous input as fifth source.
InferResult infer(VINet& model, const Clip& clip, const MaskSeq& masks, bool recurrent,
                  int64_t stride = 3);

}  // namespace vinet
