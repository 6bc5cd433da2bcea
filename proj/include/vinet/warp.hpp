#pragma once

#include <torch/torch.h>

#include "vinet/media.hpp"

namespace vinet {

/// Binary map, float32 [1, H, W]; 1 marks a non-occluded (trackable) pixel.
class OcclusionMask {
 public:
  OcclusionMask() = default;
  explicit OcclusionMask(torch::Tensor pixels);

  static OcclusionMask ones(int64_t height, int64_t width);

  const torch::Tensor& tensor() const { return pixels_; }
  int64_t height() const { return pixels_.size(1); }
  int64_t width() const { return pixels_.size(2); }

 private:
  torch::Tensor pixels_;
};

struct ConsistencyThresholds {
  double alpha = 0.01;
  double beta = 0.5;
};

/// Backward warp: out(p) = bilinear sample of `source` at p + flow(p), clamped to the border.
///
/// `source` is [C, H, W] or [N, C, H, W]; `flow` is [2, H, W] or [N, 2, H, W] with (dx, dy)
/// in pixels. Differentiable with respect to both arguments through autograd.
torch::Tensor bilinear_warp(const torch::Tensor& source, const torch::Tensor& flow);

Frame bilinear_warp(const Frame& source, const FlowField& flow);

/// Doubles the spatial size with bilinear interpolation and doubles the displacements.
torch::Tensor upsample_flow_2x(const torch::Tensor& flow);
FlowField upsample_flow_2x(const FlowField& flow);

/// Forward-backward consistency check. Pixel p is occluded (0) when
/// |b(p) + f(p + b(p))|^2 > alpha * (|b(p)|^2 + |f(p + b(p))|^2) + beta.
torch::Tensor occlusion_mask(const torch::Tensor& flow_fwd, const torch::Tensor& flow_bwd,
                             const ConsistencyThresholds& thresholds = {});
OcclusionMask occlusion_mask(const FlowField& flow_fwd, const FlowField& flow_bwd,
                             const ConsistencyThresholds& thresholds = {});

}  // namespace vinet
