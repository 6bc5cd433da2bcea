#pragma once

#include <torch/torch.h>

#include <optional>
#include <string>
#include <vector>

namespace vinet {

constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

/// Mean SSIM over all valid 11x11 Gaussian (sigma 1.5) windows and channels.
/// Inputs are [C, H, W] or [N, C, H, W]; differentiable.
torch::Tensor ssim(const torch::Tensor& a, const torch::Tensor& b);

struct ReconTerms {
  torch::Tensor l1;
  torch::Tensor ssim_term;  // 1 - SSIM
};

/// L1 plus (1 - SSIM). A positive `hole_weight` adds that multiple of the in-hole mean
/// absolute error to the L1 term (`hole` is [N, 1, H, W]).
ReconTerms recon_loss(const torch::Tensor& pred, const torch::Tensor& target,
                      const torch::Tensor& hole = {}, double hole_weight = 0.0);

struct FlowTerms {
  torch::Tensor epe;   // mean over pairs of mean per-pixel |dx| + |dy|
  torch::Tensor warp;  // mean over pairs of mean |Y_t - warp(Y_{t-1}, pred)|
};

/// `pred_flows[k]` and `gt_flows[k]` align frame k + 1 to frame k of `gt_frames`.
FlowTerms flow_loss(const std::vector<torch::Tensor>& pred_flows,
                    const std::vector<torch::Tensor>& gt_flows,
                    const std::vector<torch::Tensor>& gt_frames);

struct WarpTerms {
  torch::Tensor short_term;
  torch::Tensor long_term;
};

/// Occlusion-masked temporal losses, averaged over the T - 1 target frames.
///
/// Index k of the flow/occlusion vectors belongs to target frame k + 1. The short-term term
/// compares preds[k + 1] with warp(gt_frames[k], consec[k]); the long-term term compares it
/// with warp(long_ref, to_ref[k]). `long_ref` defaults to gt_frames[0]. Samples whose
/// non-occluded set is empty contribute 0.
WarpTerms warping_loss(const std::vector<torch::Tensor>& preds,
                       const std::vector<torch::Tensor>& gt_frames,
                       const std::vector<torch::Tensor>& flows_consec,
                       const std::vector<torch::Tensor>& occl_consec,
                       const std::vector<torch::Tensor>& flows_to_ref,
                       const std::vector<torch::Tensor>& occl_to_ref,
                       const torch::Tensor& long_ref = {});

/// Mean over samples of sum(M * |a - b|) / (C * sum(M)); empty supports give 0.
torch::Tensor masked_l1(const torch::Tensor& a, const torch::Tensor& b, const torch::Tensor& m);

struct LossWeights {
  double recon = 1.0;
  double flow = 10.0;
  double warp = 1.0;
};

/// Per-term tensors; flow and warp terms stay undefined in stage 1.
struct LossTerms {
  torch::Tensor recon_l1;
  torch::Tensor recon_ssim;
  torch::Tensor flow_epe;
  torch::Tensor flow_warp;
  torch::Tensor warp_short;
  torch::Tensor warp_long;
};

struct LossReport {
  double total = 0;
  double recon_l1 = 0;
  double recon_ssim = 0;
  double flow_epe = 0;
  double flow_warp = 0;
  double warp_short = 0;
  double warp_long = 0;

  static std::string csv_header();
  std::string csv_row(long step) const;
};

/// lambda_R * (l1 + ssim) + lambda_F * (epe + flow_warp) + lambda_W * (short + long).
torch::Tensor total_loss(const LossTerms& terms, const LossWeights& weights = {});
LossReport make_report(const LossTerms& terms, const LossWeights& weights = {});

}  // namespace vinet
