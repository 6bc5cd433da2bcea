#include "vinet/losses.hpp"

#include <cmath>
#include <cstdio>

#include "vinet/error.hpp"
#include "vinet/warp.hpp"

namespace vinet {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

torch::Tensor gaussian_window(int64_t channels, const torch::TensorOptions& opts) {
  std::vector<double> g(kWindow);
  double sum = 0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    g[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    sum += g[i];
  }
  auto g1 = torch::tensor(g, torch::kFloat64) / sum;
  auto g2 = torch::outer(g1, g1).to(opts.dtype());
  return g2.expand({channels, 1, kWindow, kWindow}).contiguous();
}

torch::Tensor batched(const torch::Tensor& t) { return t.dim() == 3 ? t.unsqueeze(0) : t; }

double value_of(const torch::Tensor& t) { return t.defined() ? t.item<double>() : 0.0; }

torch::Tensor add_defined(const torch::Tensor& a, const torch::Tensor& b) {
  if (!a.defined()) return b;
  if (!b.defined()) return a;
  return a + b;
}

}  // namespace

torch::Tensor ssim(const torch::Tensor& a, const torch::Tensor& b) {
  auto x = batched(a);
  auto y = batched(b).to(x.scalar_type());
  require(x.sizes() == y.sizes(), "ssim: inputs differ in shape");
  require(x.size(2) >= kWindow && x.size(3) >= kWindow, "ssim: images smaller than the window");
  const int64_t c = x.size(1);
  auto window = gaussian_window(c, x.options());
  auto filt = [&](const torch::Tensor& t) {
    return torch::nn::functional::conv2d(
        t, window, torch::nn::functional::Conv2dFuncOptions().groups(c));
  };
  auto mu_x = filt(x);
  auto mu_y = filt(y);
  auto mu_xx = mu_x * mu_x;
  auto mu_yy = mu_y * mu_y;
  auto mu_xy = mu_x * mu_y;
  auto var_x = filt(x * x) - mu_xx;
  auto var_y = filt(y * y) - mu_yy;
  auto cov = filt(x * y) - mu_xy;
  auto map = ((2 * mu_xy + kSsimC1) * (2 * cov + kSsimC2)) /
             ((mu_xx + mu_yy + kSsimC1) * (var_x + var_y + kSsimC2));
  return map.mean();
}

ReconTerms recon_loss(const torch::Tensor& pred, const torch::Tensor& target,
                      const torch::Tensor& hole, double hole_weight) {
  if (pred.sizes() != target.sizes()) throw DimensionMismatch("recon_loss: shape mismatch");
  require(hole_weight >= 0.0, "recon_loss: hole_weight must be non-negative");
  ReconTerms out;
  auto diff = (pred - target).abs();
  out.l1 = diff.mean();
  if (hole_weight > 0.0 && hole.defined()) {
    out.l1 = out.l1 + hole_weight * masked_l1(batched(pred), batched(target), batched(hole));
  }
  out.ssim_term = 1.0 - ssim(pred, target);
  return out;
}

torch::Tensor masked_l1(const torch::Tensor& a, const torch::Tensor& b, const torch::Tensor& m) {
  auto x = batched(a);
  auto y = batched(b);
  auto mask = batched(m).to(x.scalar_type());
  const int64_t n = x.size(0);
  auto per_sample_num = (mask * (x - y).abs()).reshape({n, -1}).sum(1);
  auto support = mask.reshape({n, -1}).sum(1) * static_cast<double>(x.size(1));
  auto safe = torch::where(support > 0, support, torch::ones_like(support));
  auto per_sample = torch::where(support > 0, per_sample_num / safe, torch::zeros_like(safe));
  return per_sample.mean();
}

FlowTerms flow_loss(const std::vector<torch::Tensor>& pred_flows,
                    const std::vector<torch::Tensor>& gt_flows,
                    const std::vector<torch::Tensor>& gt_frames) {
  if (pred_flows.size() != gt_flows.size() || gt_frames.size() != pred_flows.size() + 1) {
    throw DimensionMismatch("flow_loss: need T - 1 predicted and ground-truth flows for T frames");
  }
  require(!pred_flows.empty(), "flow_loss: at least two frames are required");
  FlowTerms out;
  for (size_t k = 0; k < pred_flows.size(); ++k) {
    auto pred = batched(pred_flows[k]);
    auto gt = batched(gt_flows[k]).to(pred.scalar_type());
    if (pred.sizes() != gt.sizes()) throw DimensionMismatch("flow_loss: flow shape mismatch");
    auto epe = (pred - gt).abs().sum(1).mean();
    auto warped = bilinear_warp(batched(gt_frames[k]), pred);
    auto werr = (batched(gt_frames[k + 1]) - warped).abs().mean();
    out.epe = add_defined(out.epe, epe);
    out.warp = add_defined(out.warp, werr);
  }
  const double inv = 1.0 / static_cast<double>(pred_flows.size());
  out.epe = out.epe * inv;
  out.warp = out.warp * inv;
  return out;
}

WarpTerms warping_loss(const std::vector<torch::Tensor>& preds,
                       const std::vector<torch::Tensor>& gt_frames,
                       const std::vector<torch::Tensor>& flows_consec,
                       const std::vector<torch::Tensor>& occl_consec,
                       const std::vector<torch::Tensor>& flows_to_ref,
                       const std::vector<torch::Tensor>& occl_to_ref,
                       const torch::Tensor& long_ref) {
  const size_t t = preds.size();
  require(t >= 2, "warping_loss: at least two frames are required");
  if (gt_frames.size() != t || flows_consec.size() != t - 1 || occl_consec.size() != t - 1 ||
      flows_to_ref.size() != t - 1 || occl_to_ref.size() != t - 1) {
    throw DimensionMismatch("warping_loss: sequence lengths are inconsistent");
  }
  const torch::Tensor ref = long_ref.defined() ? batched(long_ref) : batched(gt_frames[0]);
  WarpTerms out;
  for (size_t k = 0; k + 1 < t; ++k) {
    auto pred = batched(preds[k + 1]);
    auto short_ref = bilinear_warp(batched(gt_frames[k]), batched(flows_consec[k]));
    auto long_warped = bilinear_warp(ref, batched(flows_to_ref[k]));
    out.short_term = add_defined(out.short_term, masked_l1(pred, short_ref, occl_consec[k]));
    out.long_term = add_defined(out.long_term, masked_l1(pred, long_warped, occl_to_ref[k]));
  }
  const double inv = 1.0 / static_cast<double>(t - 1);
  out.short_term = out.short_term * inv;
  out.long_term = out.long_term * inv;
  return out;
}

torch::Tensor total_loss(const LossTerms& terms, const LossWeights& weights) {
  require(weights.recon >= 0 && weights.flow >= 0 && weights.warp >= 0,
          "total_loss: weights must be non-negative");
  require(terms.recon_l1.defined() || terms.recon_ssim.defined(),
          "total_loss: reconstruction terms are required");
  torch::Tensor total = weights.recon * add_defined(terms.recon_l1, terms.recon_ssim);
  auto flow = add_defined(terms.flow_epe, terms.flow_warp);
  if (flow.defined()) total = total + weights.flow * flow;
  auto warp = add_defined(terms.warp_short, terms.warp_long);
  if (warp.defined()) total = total + weights.warp * warp;
  return total;
}

LossReport make_report(const LossTerms& terms, const LossWeights& weights) {
  LossReport r;
  r.total = total_loss(terms, weights).item<double>();
  r.recon_l1 = value_of(terms.recon_l1);
  r.recon_ssim = value_of(terms.recon_ssim);
  r.flow_epe = value_of(terms.flow_epe);
  r.flow_warp = value_of(terms.flow_warp);
  r.warp_short = value_of(terms.warp_short);
  r.warp_long = value_of(terms.warp_long);
  return r;
}

std::string LossReport::csv_header() {
  return "step,total,recon_l1,recon_ssim,flow_epe,flow_warp,warp_short,warp_long";
}

std::string LossReport::csv_row(long step) const {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%ld,%.8g,%.8g,%.8g,%.8g,%.8g,%.8g,%.8g", step, total,
                recon_l1, recon_ssim, flow_epe, flow_warp, warp_short, warp_long);
  return buf;
}

}  // namespace vinet
