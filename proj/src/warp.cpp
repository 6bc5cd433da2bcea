#include "vinet/warp.hpp"

#include "vinet/error.hpp"

namespace vinet {

namespace {

// Promotes [C, H, W] to [1, C, H, W]; returns whether the input was unbatched.
bool to_batched(torch::Tensor& t) {
  if (t.dim() == 3) {
    t = t.unsqueeze(0);
    return true;
  }
  return false;
}

}  // namespace

OcclusionMask::OcclusionMask(torch::Tensor pixels) {
  if (pixels.dim() == 2) pixels = pixels.unsqueeze(0);
  require(pixels.dim() == 3 && pixels.size(0) == 1, "OcclusionMask: expected [1, H, W]");
  pixels = pixels.detach().to(torch::kCPU, torch::kFloat32).contiguous().clone();
  require(torch::logical_or(pixels == 0, pixels == 1).all().item<bool>(),
          "OcclusionMask: values must be exactly 0 or 1");
  pixels_ = std::move(pixels);
}

OcclusionMask OcclusionMask::ones(int64_t height, int64_t width) {
  return OcclusionMask(torch::ones({1, height, width}));
}

torch::Tensor bilinear_warp(const torch::Tensor& source, const torch::Tensor& flow) {
  torch::Tensor src = source;
  torch::Tensor fl = flow;
  const bool unbatched = to_batched(src);
  to_batched(fl);
  require(src.dim() == 4 && fl.dim() == 4 && fl.size(1) == 2,
          "bilinear_warp: expected source [N,C,H,W] and flow [N,2,H,W]");
  if (src.size(2) != fl.size(2) || src.size(3) != fl.size(3)) {
    throw DimensionMismatch("bilinear_warp: flow is " + std::to_string(fl.size(2)) + "x" +
                            std::to_string(fl.size(3)) + " but source is " +
                            std::to_string(src.size(2)) + "x" + std::to_string(src.size(3)));
  }
  if (fl.size(0) != src.size(0)) {
    require(fl.size(0) == 1, "bilinear_warp: batch sizes of source and flow differ");
    fl = fl.expand({src.size(0), 2, fl.size(2), fl.size(3)});
  }
  fl = fl.to(src.scalar_type());

  const int64_t n = src.size(0);
  const int64_t c = src.size(1);
  const int64_t h = src.size(2);
  const int64_t w = src.size(3);
  auto opts = src.options().requires_grad(false);

  auto gx = torch::arange(w, opts).view({1, 1, w});
  auto gy = torch::arange(h, opts).view({1, h, 1});
  // Clamping the sample location gives clamp-to-edge semantics with zero flow gradient outside.
  auto x = (gx + fl.select(1, 0)).clamp(0, static_cast<double>(w - 1));
  auto y = (gy + fl.select(1, 1)).clamp(0, static_cast<double>(h - 1));

  auto x0 = x.detach().floor();
  auto y0 = y.detach().floor();
  auto wx = x - x0;
  auto wy = y - y0;
  auto x0i = x0.to(torch::kLong);
  auto y0i = y0.to(torch::kLong);
  auto x1i = (x0i + 1).clamp_max(w - 1);
  auto y1i = (y0i + 1).clamp_max(h - 1);

  auto flat = src.reshape({n, c, h * w});
  auto gather = [&](const torch::Tensor& yi, const torch::Tensor& xi) {
    auto idx = (yi * w + xi).reshape({n, 1, h * w}).expand({n, c, h * w});
    return flat.gather(2, idx).view({n, c, h, w});
  };

  auto wx4 = wx.unsqueeze(1);
  auto wy4 = wy.unsqueeze(1);
  auto top = gather(y0i, x0i) * (1 - wx4) + gather(y0i, x1i) * wx4;
  auto bottom = gather(y1i, x0i) * (1 - wx4) + gather(y1i, x1i) * wx4;
  auto out = top * (1 - wy4) + bottom * wy4;
  return unbatched ? out.squeeze(0) : out;
}

Frame bilinear_warp(const Frame& source, const FlowField& flow) {
  return Frame(bilinear_warp(source.tensor(), flow.tensor()).clamp(0.0, 1.0));
}

torch::Tensor upsample_flow_2x(const torch::Tensor& flow) {
  torch::Tensor fl = flow;
  const bool unbatched = to_batched(fl);
  require(fl.size(1) == 2, "upsample_flow_2x: expected a 2-channel flow");
  namespace F = torch::nn::functional;
  auto up = F::interpolate(fl, F::InterpolateFuncOptions()
                                   .scale_factor(std::vector<double>{2.0, 2.0})
                                   .mode(torch::kBilinear)
                                   .align_corners(false)) *
            2.0;
  return unbatched ? up.squeeze(0) : up;
}

FlowField upsample_flow_2x(const FlowField& flow) {
  return FlowField(upsample_flow_2x(flow.tensor()));
}

torch::Tensor occlusion_mask(const torch::Tensor& flow_fwd, const torch::Tensor& flow_bwd,
                             const ConsistencyThresholds& thresholds) {
  if (flow_fwd.sizes() != flow_bwd.sizes()) {
    throw DimensionMismatch("occlusion_mask: forward and backward flows differ in shape");
  }
  torch::NoGradGuard no_grad;
  auto fwd_at_target = bilinear_warp(flow_fwd, flow_bwd);
  const int64_t ch = flow_bwd.dim() - 3;
  auto residual = (flow_bwd + fwd_at_target).pow(2).sum(ch, true);
  auto magnitude = flow_bwd.pow(2).sum(ch, true) + fwd_at_target.pow(2).sum(ch, true);
  auto occluded = residual > thresholds.alpha * magnitude + thresholds.beta;
  return occluded.logical_not().to(flow_bwd.scalar_type());
}

OcclusionMask occlusion_mask(const FlowField& flow_fwd, const FlowField& flow_bwd,
                             const ConsistencyThresholds& thresholds) {
  if (flow_fwd.height() != flow_bwd.height() || flow_fwd.width() != flow_bwd.width()) {
    throw DimensionMismatch("occlusion_mask: forward and backward flows differ in size");
  }
  return OcclusionMask(occlusion_mask(flow_fwd.tensor(), flow_bwd.tensor(), thresholds));
}

}  // namespace vinet
