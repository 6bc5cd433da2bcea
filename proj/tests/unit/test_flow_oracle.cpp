#include <gtest/gtest.h>

#include "vinet/error.hpp"
#include "vinet/flow_oracle.hpp"

using namespace vinet;

namespace {

Frame shifted(const torch::Tensor& tex, int64_t dx) {
  // Content moves right by dx: out(x) = tex(x - dx), edge-replicated.
  const int64_t w = tex.size(2);
  auto idx = (torch::arange(w) - dx).clamp(0, w - 1);
  return Frame(tex.index_select(2, idx));
}

}  // namespace

TEST(FlowOracle, IdenticalFramesGiveNearZeroFlow) {
  auto tex = random_texture(64, 64, 3);
  auto flow = estimate_flow(Frame(tex), Frame(tex));
  EXPECT_LT(flow.tensor().norm(2, 0).mean().item<float>(), 0.1f);
}

TEST(FlowOracle, RecoversTwoPixelTranslation) {
  auto tex = random_texture(64, 64, 9);
  Frame a = shifted(tex, 2);  // a(x) = b(x - 2)
  Frame b(tex);
  auto flow = estimate_flow(a, b).tensor();
  auto interior = flow[0].slice(0, 8, 56).slice(1, 8, 56);
  EXPECT_NEAR(interior.mean().item<float>(), -2.0, 0.5);
  EXPECT_LT(flow[1].slice(0, 8, 56).slice(1, 8, 56).abs().mean().item<float>(), 0.5);
}

TEST(FlowOracle, ConstantFramesStayFinite) {
  auto flow = estimate_flow(Frame::filled(32, 32, 0.3f), Frame::filled(32, 32, 0.7f));
  EXPECT_TRUE(torch::isfinite(flow.tensor()).all().item<bool>());
}

TEST(FlowOracle, StaticSynthSequence) {
  SynthSpec spec;
  spec.frames = 4;
  spec.velocity_x = 0;
  auto seq = synth_sequence(spec, 1);
  for (size_t t = 1; t < 4; ++t) EXPECT_TRUE(torch::equal(seq.clip[t].tensor(), seq.clip[0].tensor()));
  for (const auto& f : seq.flows_prev) EXPECT_EQ(f.tensor().abs().max().item<float>(), 0.f);
}

TEST(FlowOracle, TranslatingSynthFlowIsAnalytic) {
  SynthSpec spec;
  spec.frames = 3;
  auto seq = synth_sequence(spec, 2);
  ASSERT_EQ(seq.flows_prev.size(), 2u);
  for (size_t k = 0; k < 2; ++k) {
    auto obj = seq.object_masks[k + 1].tensor()[0] > 0.5;
    auto dx = seq.flows_prev[k].tensor()[0];
    EXPECT_EQ(dx.masked_select(obj).ne(-1.f).sum().item<int64_t>(), 0);
    EXPECT_EQ(dx.masked_select(~obj).ne(0.f).sum().item<int64_t>(), 0);
    EXPECT_EQ(seq.flows_prev[k].tensor()[1].abs().max().item<float>(), 0.f);
  }
  EXPECT_EQ(seq.flows_first[1].tensor()[0].min().item<float>(), -2.f);
}

TEST(FlowOracle, SynthWarpIsExactOnVisiblePixels) {
  SynthSpec spec;
  spec.frames = 6;
  spec.velocity_x = 2;
  spec.velocity_y = -1;
  auto seq = synth_sequence(spec, 4);
  for (size_t k = 0; k + 1 < seq.clip.size(); ++k) {
    auto warped = bilinear_warp(seq.clip[k], seq.flows_prev[k]).tensor();
    auto err = (warped - seq.clip[k + 1].tensor()).abs() * seq.occl_prev[k].tensor();
    EXPECT_LT(err.max().item<float>(), 1e-6);
    auto warped0 = bilinear_warp(seq.clip[0], seq.flows_first[k]).tensor();
    auto err0 = (warped0 - seq.clip[k + 1].tensor()).abs() * seq.occl_first[k].tensor();
    EXPECT_LT(err0.max().item<float>(), 1e-6);
  }
}

TEST(FlowOracle, SynthIsDeterministic) {
  SynthSpec spec;
  auto a = synth_sequence(spec, 42);
  auto b = synth_sequence(spec, 42);
  EXPECT_TRUE(torch::equal(a.clip.stacked(), b.clip.stacked()));
  auto c = synth_sequence(spec, 43);
  EXPECT_FALSE(torch::equal(a.clip.stacked(), c.clip.stacked()));
}

TEST(FlowOracle, SynthContracts) {
  SynthSpec spec;
  spec.width = 50;
  EXPECT_THROW(synth_sequence(spec, 0), ContractError);
  spec.width = 64;
  spec.velocity_x = 40;
  EXPECT_THROW(synth_sequence(spec, 0), ContractError);
}
