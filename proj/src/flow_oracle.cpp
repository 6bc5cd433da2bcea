#include "vinet/flow_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "vinet/error.hpp"

namespace vinet {

namespace {

namespace F = torch::nn::functional;

torch::Tensor to_gray(const Frame& f) {
  auto rgb = f.tensor().to(torch::kFloat64);
  auto gray = 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
  return gray.view({1, 1, f.height(), f.width()});
}

torch::Tensor box_mean(const torch::Tensor& t, int window) {
  return F::avg_pool2d(t, F::AvgPool2dFuncOptions(window).stride(1).padding(window / 2)
                              .count_include_pad(false));
}

// Central differences with replicated borders.
std::pair<torch::Tensor, torch::Tensor> gradients(const torch::Tensor& img) {
  auto padded = F::pad(img, F::PadFuncOptions({1, 1, 1, 1}).mode(torch::kReplicate));
  const int64_t h = img.size(2);
  const int64_t w = img.size(3);
  using torch::indexing::Slice;
  auto gx = 0.5 * (padded.index({Slice(), Slice(), Slice(1, h + 1), Slice(2, w + 2)}) -
                   padded.index({Slice(), Slice(), Slice(1, h + 1), Slice(0, w)}));
  auto gy = 0.5 * (padded.index({Slice(), Slice(), Slice(2, h + 2), Slice(1, w + 1)}) -
                   padded.index({Slice(), Slice(), Slice(0, h), Slice(1, w + 1)}));
  return {gx, gy};
}

// 1 where p + flow(p) lies inside the canvas.
torch::Tensor inside_mask(const torch::Tensor& flow) {
  const int64_t h = flow.size(2);
  const int64_t w = flow.size(3);
  auto xs = torch::arange(w, flow.options()).view({1, 1, w}) + flow.select(1, 0);
  auto ys = torch::arange(h, flow.options()).view({1, h, 1}) + flow.select(1, 1);
  auto ok = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1);
  return ok.unsqueeze(1).to(flow.scalar_type());
}

}  // namespace

torch::Tensor GradientFlowEstimator::estimate_gray(const torch::Tensor& gray_a,
                                                   const torch::Tensor& gray_b) const {
  if (gray_a.sizes() != gray_b.sizes()) {
    throw DimensionMismatch("estimate_flow: frames differ in size");
  }
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> pyr_a{gray_a.to(torch::kFloat64)};
  std::vector<torch::Tensor> pyr_b{gray_b.to(torch::kFloat64)};
  for (int l = 1; l < options_.levels; ++l) {
    const auto& a = pyr_a.back();
    if (a.size(2) < 8 || a.size(3) < 8 || a.size(2) % 2 || a.size(3) % 2) break;
    pyr_a.push_back(F::avg_pool2d(a, F::AvgPool2dFuncOptions(2)));
    pyr_b.push_back(F::avg_pool2d(pyr_b.back(), F::AvgPool2dFuncOptions(2)));
  }

  torch::Tensor flow;
  for (int level = static_cast<int>(pyr_a.size()) - 1; level >= 0; --level) {
    const auto& a = pyr_a[level];
    const auto& b = pyr_b[level];
    if (!flow.defined()) {
      flow = torch::zeros({1, 2, a.size(2), a.size(3)}, a.options());
    } else {
      flow = upsample_flow_2x(flow);
    }
    for (int it = 0; it < options_.iterations; ++it) {
      auto warped = bilinear_warp(b, flow);
      auto [gx_w, gy_w] = gradients(warped);
      auto [gx_a, gy_a] = gradients(a);
      // Samples clamped at the border carry no information about the displacement.
      auto valid = inside_mask(flow);
      auto ix = 0.5 * (gx_w + gx_a) * valid;
      auto iy = 0.5 * (gy_w + gy_a) * valid;
      auto it_diff = (warped - a) * valid;
      const int win = options_.window;
      auto sxx = box_mean(ix * ix, win) + options_.regularization;
      auto syy = box_mean(iy * iy, win) + options_.regularization;
      auto sxy = box_mean(ix * iy, win);
      auto sxt = box_mean(ix * it_diff, win);
      auto syt = box_mean(iy * it_diff, win);
      auto det = sxx * syy - sxy * sxy;
      auto du = -(syy * sxt - sxy * syt) / det;
      auto dv = -(sxx * syt - sxy * sxt) / det;
      auto step = torch::cat({du, dv}, 1).clamp(-options_.max_step, options_.max_step);
      // The increment is modelled as constant over a window; smoothing it keeps neighbouring
      // updates from amplifying each other in weakly textured areas.
      flow = flow + box_mean(step, win);
    }
  }
  return flow;
}

FlowField GradientFlowEstimator::estimate(const Frame& frame_a, const Frame& frame_b) const {
  if (frame_a.height() != frame_b.height() || frame_a.width() != frame_b.width()) {
    throw DimensionMismatch("estimate_flow: frames differ in size");
  }
  auto flow = estimate_gray(to_gray(frame_a), to_gray(frame_b));
  return FlowField(flow.squeeze(0).to(torch::kFloat32));
}

FlowField estimate_flow(const Frame& frame_a, const Frame& frame_b) {
  static const GradientFlowEstimator estimator;
  return estimator.estimate(frame_a, frame_b);
}

torch::Tensor random_texture(int64_t height, int64_t width, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> uni(0.f, 1.f);
  auto noise = [&](int64_t h, int64_t w) {
    auto t = torch::empty({1, 3, h, w});
    auto acc = t.accessor<float, 4>();
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) acc[0][c][y][x] = uni(rng);
    return t;
  };
  auto octave = [&](int64_t div) {
    const int64_t h = std::max<int64_t>(2, height / div + 2);
    const int64_t w = std::max<int64_t>(2, width / div + 2);
    return F::interpolate(noise(h, w), F::InterpolateFuncOptions()
                                           .size(std::vector<int64_t>{height, width})
                                           .mode(torch::kBicubic)
                                           .align_corners(false));
  };
  auto tex = 0.6 * octave(8) + 0.3 * octave(4) + 0.1 * octave(2);
  // Stretch to use the available range, then keep away from the clipping limits.
  auto lo = tex.min();
  auto hi = tex.max();
  tex = (tex - lo) / (hi - lo + 1e-6);
  return (0.1 + 0.8 * tex).squeeze(0).contiguous();
}

SynthSequence synth_sequence(const SynthSpec& spec, uint64_t seed) {
  require(is_dyadic_size(spec.height, spec.width),
          "synth_sequence: canvas must be >= 16 and divisible by 8");
  require(spec.frames >= 1, "synth_sequence: at least one frame");
  require(std::abs(spec.velocity_x) <= spec.width / 2.0 &&
              std::abs(spec.velocity_y) <= spec.height / 2.0,
          "synth_sequence: velocity exceeds half the canvas per frame");
  require(spec.object_fraction > 0.0 && spec.object_fraction <= 1.0,
          "synth_sequence: object_fraction must be in (0, 1]");

  const int64_t h = spec.height;
  const int64_t w = spec.width;
  const int64_t oh = std::max<int64_t>(1, std::llround(h * spec.object_fraction));
  const int64_t ow = std::max<int64_t>(1, std::llround(w * spec.object_fraction));
  const double vx = spec.velocity_x;
  const double vy = spec.velocity_y;
  const double span = static_cast<double>(spec.frames - 1);
  // Integer start keeps integer velocities on the pixel lattice.
  const double start_x = std::round((w - ow) / 2.0 - span * vx / 2.0);
  const double start_y = std::round((h - oh) / 2.0 - span * vy / 2.0);

  auto background = random_texture(h, w, seed * 2 + 1);
  auto foreground = random_texture(oh, ow, seed * 2 + 2);
  auto bg = background.accessor<float, 3>();
  auto fg = foreground.accessor<float, 3>();

  auto pos_x = [&](int64_t t) { return start_x + t * vx; };
  auto pos_y = [&](int64_t t) { return start_y + t * vy; };
  auto covered = [&](int64_t t, double px, double py) {
    const double u = px - pos_x(t);
    const double v = py - pos_y(t);
    return u >= 0.0 && u < static_cast<double>(ow) && v >= 0.0 && v < static_cast<double>(oh);
  };
  auto inside = [&](double px, double py) {
    return px >= 0.0 && px <= static_cast<double>(w - 1) && py >= 0.0 &&
           py <= static_cast<double>(h - 1);
  };
  auto sample_fg = [&](int64_t c, double u, double v) {
    u = std::clamp(u, 0.0, static_cast<double>(ow - 1));
    v = std::clamp(v, 0.0, static_cast<double>(oh - 1));
    const auto x0 = static_cast<int64_t>(std::floor(u));
    const auto y0 = static_cast<int64_t>(std::floor(v));
    const int64_t x1 = std::min(x0 + 1, ow - 1);
    const int64_t y1 = std::min(y0 + 1, oh - 1);
    const double ax = u - x0;
    const double ay = v - y0;
    return (1 - ay) * ((1 - ax) * fg[c][y0][x0] + ax * fg[c][y0][x1]) +
           ay * ((1 - ax) * fg[c][y1][x0] + ax * fg[c][y1][x1]);
  };

  SynthSequence out;
  std::vector<Frame> frames;
  std::vector<Mask> objects;
  for (int64_t t = 0; t < spec.frames; ++t) {
    auto img = torch::empty({3, h, w});
    auto obj = torch::zeros({1, h, w});
    auto ia = img.accessor<float, 3>();
    auto oa = obj.accessor<float, 3>();
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        const bool on = covered(t, x, y);
        oa[0][y][x] = on ? 1.f : 0.f;
        for (int64_t c = 0; c < 3; ++c) {
          ia[c][y][x] = on ? static_cast<float>(sample_fg(c, x - pos_x(t), y - pos_y(t)))
                           : bg[c][y][x];
        }
      }
    }
    frames.emplace_back(img);
    objects.emplace_back(obj);
  }

  // Flow and visibility from frame t to frame `ref`.
  auto pair_fields = [&](int64_t t, int64_t ref) {
    auto flow = torch::zeros({2, h, w});
    auto vis = torch::zeros({1, h, w});
    auto fa = flow.accessor<float, 3>();
    auto va = vis.accessor<float, 3>();
    const double dx = -(t - ref) * vx;
    const double dy = -(t - ref) * vy;
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        const bool on = covered(t, x, y);
        const double sx = on ? x + dx : x;
        const double sy = on ? y + dy : y;
        fa[0][y][x] = on ? static_cast<float>(dx) : 0.f;
        fa[1][y][x] = on ? static_cast<float>(dy) : 0.f;
        // Background is visible at the reference only where the square did not cover it.
        const bool visible = inside(sx, sy) && (on || !covered(ref, x, y));
        va[0][y][x] = visible ? 1.f : 0.f;
      }
    }
    return std::pair{FlowField(flow), OcclusionMask(vis)};
  };

  for (int64_t t = 1; t < spec.frames; ++t) {
    auto [fp, op] = pair_fields(t, t - 1);
    auto [ff, of] = pair_fields(t, 0);
    out.flows_prev.push_back(std::move(fp));
    out.occl_prev.push_back(std::move(op));
    out.flows_first.push_back(std::move(ff));
    out.occl_first.push_back(std::move(of));
  }
  out.clip = Clip(std::move(frames));
  out.object_masks = MaskSeq(std::move(objects));
  return out;
}

}  // namespace vinet
