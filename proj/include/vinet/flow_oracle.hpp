#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "vinet/media.hpp"
#include "vinet/warp.hpp"

namespace vinet {

/// Source of pseudo-ground-truth backward flow. estimate(a, b) returns W such that
/// bilinear_warp(b, W) approximates a.
class FlowEstimator {
 public:
  virtual ~FlowEstimator() = default;
  virtual FlowField estimate(const Frame& frame_a, const Frame& frame_b) const = 0;
};

struct GradientFlowOptions {
  int levels = 3;
  int iterations = 10;
  int window = 7;               // side of the local least-squares window
  double regularization = 1e-4; // Tikhonov term on the per-pixel update
  double max_step = 1.0;        // per-iteration update clamp, pixels
};

/// Coarse-to-fine dense Lucas-Kanade: at every pyramid level the source frame is warped by
/// the current estimate and a windowed 2x2 least-squares system gives the update.
class GradientFlowEstimator final : public FlowEstimator {
 public:
  explicit GradientFlowEstimator(GradientFlowOptions options = {}) : options_(options) {}
  FlowField estimate(const Frame& frame_a, const Frame& frame_b) const override;

  /// Same algorithm on raw [1, 1, H, W] grayscale tensors (double precision internally).
  torch::Tensor estimate_gray(const torch::Tensor& gray_a, const torch::Tensor& gray_b) const;

 private:
  GradientFlowOptions options_;
};

/// Uses the default GradientFlowEstimator.
FlowField estimate_flow(const Frame& frame_a, const Frame& frame_b);

struct SynthSpec {
  int64_t height = 64;
  int64_t width = 64;
  int64_t frames = 16;
  double velocity_x = 1.0;  // pixels per frame
  double velocity_y = 0.0;
  double object_fraction = 0.5;  // side of the moving square relative to the canvas
};

/// A translating textured square over a static textured background, with exact flows.
/// Index k of the per-pair vectors describes target frame k + 1:
///   flows_prev[k]  = W_{k+1 => k},   flows_first[k] = W_{k+1 => 0}
/// and the occlusion masks mark pixels whose content is visible at the flow target.
struct SynthSequence {
  Clip clip;
  std::vector<FlowField> flows_prev;
  std::vector<FlowField> flows_first;
  std::vector<OcclusionMask> occl_prev;
  std::vector<OcclusionMask> occl_first;
  MaskSeq object_masks;  // coverage of the moving square per frame
};

SynthSequence synth_sequence(const SynthSpec& spec, uint64_t seed);

/// Smooth colour texture in [0.1, 0.9], [3, H, W].
torch::Tensor random_texture(int64_t height, int64_t width, uint64_t seed);

}  // namespace vinet
