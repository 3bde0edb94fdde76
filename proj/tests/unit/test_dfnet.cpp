#include <gtest/gtest.h>

#include <cmath>

#include <torch/torch.h>

#include "dualfocus/dfnet.hpp"
#include "dualfocus/tensor_bridge.hpp"

using namespace dualfocus;
using namespace dualfocus::dfnet;

namespace {

NetInput random_input(int batch, int h, int w, std::uint64_t seed) {
  torch::manual_seed(seed);
  NetInput in;
  in.w_image = torch::rand({batch, 3, h, w});
  in.uw_warped = torch::rand({batch, 3, h, w});
  in.occlusion = (torch::rand({batch, 1, h, w}) > 0.8).to(torch::kFloat32);
  in.ref_defocus = 6.0 * torch::rand({batch, 1, h, w});
  in.tgt_defocus = 6.0 * torch::rand({batch, 1, h, w});
  in.radial = radial_mask_tensor(w, h, 0, 0, w, h).unsqueeze(0).expand({batch, 1, h, w}).contiguous();
  return in;
}

bool same(const torch::Tensor& a, const torch::Tensor& b) { return torch::equal(a.contiguous(), b.contiguous()); }

}  // namespace

TEST(RadialMask, CenterCornerAndCropOffset) {
  const Image full = radial_mask(9, 7, 0, 0, 9, 7);
  EXPECT_EQ(full.at(0, 3, 4), 0.0f);
  EXPECT_FLOAT_EQ(full.at(0, 0, 0), 1.0f);
  EXPECT_FLOAT_EQ(full.at(0, 6, 8), 1.0f);
  const Image crop = radial_mask(1024, 768, 0, 0, 256, 256);
  EXPECT_FLOAT_EQ(crop.at(0, 0, 0), 1.0f);
  // Interior pixel: distance to (511.5, 383.5) over the half diagonal.
  const double expected = std::hypot(100.0 - 511.5, 50.0 - 383.5) / std::hypot(511.5, 383.5);
  EXPECT_NEAR(crop.at(0, 50, 100), expected, 1e-6);
  const Image shifted = radial_mask(1024, 768, 300, 200, 256, 256);
  EXPECT_FALSE(shifted == crop);
  EXPECT_THROW(radial_mask(64, 64, 40, 0, 32, 32), std::out_of_range);
  const auto t = radial_mask_tensor(1024, 768, 300, 200, 256, 256);
  EXPECT_EQ(to_image(t), shifted);
}

TEST(ModelConfig, ChannelAccounting) {
  ModelConfig cfg;
  EXPECT_EQ(cfg.w_input_channels(), 6);
  EXPECT_EQ(cfg.uw_input_channels(), 6);
  cfg.use_radial_mask = false;
  EXPECT_EQ(cfg.w_input_channels(), 5);
  EXPECT_EQ(cfg.uw_input_channels(), 5);
  cfg.use_occlusion_input = false;
  EXPECT_EQ(cfg.uw_input_channels(), 4);
}

TEST(ModelConfig, DefaultAsppTable) {
  const auto aspp = ModelConfig::default_aspp();
  EXPECT_EQ(aspp[0].rates, (std::vector<int>{1, 3, 5}));
  EXPECT_EQ(aspp[1].rates, (std::vector<int>{1, 3, 6, 12}));
  EXPECT_EQ(aspp[2].rates, (std::vector<int>{1, 3, 6, 12, 15}));
  EXPECT_EQ(aspp[3].rates, (std::vector<int>{1, 3, 6, 12, 15, 18}));
  EXPECT_EQ(aspp[3].channels, (std::vector<int>{16, 32, 32, 2}));
  const auto tiny = ModelConfig::tiny();
  for (int s = 0; s < 4; ++s) EXPECT_EQ(tiny.aspp_channels(s).back(), 2);
}

TEST(ModelConfig, ValidationAndJson) {
  ModelConfig cfg = ModelConfig::tiny();
  cfg.seed = 17;
  cfg.use_occlusion_input = false;
  const auto back = ModelConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
  auto bad = cfg;
  bad.aspp[2].channels.back() = 3;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.n_scales = 3;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.base_channels = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(DetailFusionNet, ShapesAtFourScales) {
  auto model = build_model(ModelConfig::tiny());
  torch::NoGradGuard ng;
  const auto out = model->forward(random_input(2, 64, 96, 1));
  ASSERT_EQ(out.blended.size(), 4u);
  for (int s = 0; s < 4; ++s) {
    const int f = 8 >> s;
    for (const auto* list : {&out.refined_w, &out.refined_uw, &out.blended}) {
      EXPECT_EQ((*list)[s].sizes(), torch::IntArrayRef({2, 3, 64 / f, 96 / f}));
    }
    EXPECT_EQ(out.masks[s].sizes(), torch::IntArrayRef({2, 2, 64 / f, 96 / f}));
  }
}

TEST(DetailFusionNet, MasksConvexAndBlendConsistent) {
  auto model = build_model(ModelConfig::tiny());
  torch::NoGradGuard ng;
  const auto out = model->forward(random_input(1, 32, 32, 2));
  for (int s = 0; s < 4; ++s) {
    const auto& m = out.masks[s];
    EXPECT_LT((m.sum(1) - 1.0).abs().max().item<double>(), 1e-6);
    EXPECT_GE(m.min().item<double>(), 0.0);
    const auto mixed = m.narrow(1, 0, 1) * out.refined_w[s] + m.narrow(1, 1, 1) * out.refined_uw[s];
    EXPECT_LT((mixed - out.blended[s]).abs().max().item<double>(), 1e-6);
    const auto lo = torch::minimum(out.refined_w[s], out.refined_uw[s]);
    const auto hi = torch::maximum(out.refined_w[s], out.refined_uw[s]);
    EXPECT_GE((out.blended[s] - lo).min().item<double>(), -1e-6);
    EXPECT_LE((out.blended[s] - hi).max().item<double>(), 1e-6);
  }
}

TEST(DetailFusionNet, UntrainedModelLeansOnW) {
  auto model = build_model(ModelConfig::tiny());
  torch::NoGradGuard ng;
  const auto out = model->forward(random_input(1, 32, 32, 3));
  const double mean_w = out.masks[0].narrow(1, 0, 1).mean().item<double>();
  EXPECT_NEAR(mean_w, 0.8, 0.1);
  for (const auto& t : out.blended) EXPECT_TRUE(torch::isfinite(t).all().item<bool>());
}

TEST(DetailFusionNet, PathIsolation) {
  auto model = build_model(ModelConfig::tiny());
  torch::NoGradGuard ng;
  const auto in = random_input(1, 32, 32, 4);
  auto no_uw = in;
  no_uw.uw_warped = torch::zeros_like(in.uw_warped);
  no_uw.occlusion = torch::zeros_like(in.occlusion);
  auto no_w = in;
  no_w.w_image = torch::zeros_like(in.w_image);
  no_w.ref_defocus = torch::zeros_like(in.ref_defocus);
  const auto a = model->forward(in);
  const auto b = model->forward(no_uw);
  const auto c = model->forward(no_w);
  for (int s = 0; s < 4; ++s) {
    EXPECT_TRUE(same(a.refined_w[s], b.refined_w[s]));
    EXPECT_TRUE(same(a.refined_uw[s], c.refined_uw[s]));
    EXPECT_FALSE(same(a.refined_uw[s], b.refined_uw[s]));
  }
}

TEST(DetailFusionNet, DeterministicInitialization) {
  auto a = build_model(ModelConfig::tiny());
  auto b = build_model(ModelConfig::tiny());
  EXPECT_EQ(parameter_count(a), parameter_count(b));
  const auto pa = a->named_parameters();
  const auto pb = b->named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].key(), pb[i].key());
    EXPECT_TRUE(same(pa[i].value(), pb[i].value())) << pa[i].key();
  }
  auto cfg = ModelConfig::tiny();
  cfg.seed = 99;
  auto c = build_model(cfg);
  EXPECT_FALSE(same(a->named_parameters()[0].value(), c->named_parameters()[0].value()));
}

TEST(DetailFusionNet, RadialMaskChangesInputWidth) {
  auto cfg = ModelConfig::tiny();
  cfg.use_radial_mask = false;
  auto with = build_model(ModelConfig::tiny());
  auto without = build_model(cfg);
  EXPECT_LT(parameter_count(without), parameter_count(with));
}

TEST(DetailFusionNet, SinglePathVariants) {
  for (Variant v : {Variant::w_only, Variant::uw_only}) {
    auto cfg = ModelConfig::tiny();
    cfg.variant = v;
    auto model = build_model(cfg);
    torch::NoGradGuard ng;
    const auto in = random_input(1, 32, 32, 5);
    const auto out = model->forward(in);
    const int active = v == Variant::w_only ? 0 : 1;
    for (int s = 0; s < 4; ++s) {
      EXPECT_EQ(out.masks[s].narrow(1, active, 1).min().item<double>(), 1.0);
      const auto& path = active == 0 ? out.refined_w[s] : out.refined_uw[s];
      EXPECT_TRUE(same(path, out.blended[s]));
    }
    auto other = in;
    if (v == Variant::w_only) {
      other.uw_warped = torch::rand_like(in.uw_warped);
    } else {
      other.w_image = torch::rand_like(in.w_image);
    }
    EXPECT_TRUE(same(model->forward(other).blended[3], out.blended[3]));
  }
  EXPECT_EQ(variant_from_string(to_string(Variant::uw_only)), Variant::uw_only);
  EXPECT_THROW(variant_from_string("both"), std::invalid_argument);
}

TEST(DetailFusionNet, RejectsBadInput) {
  auto model = build_model(ModelConfig::tiny());
  torch::NoGradGuard ng;
  EXPECT_THROW(model->forward(random_input(1, 36, 32, 6)), std::invalid_argument);
  auto in = random_input(1, 32, 32, 6);
  in.occlusion = torch::zeros({1, 2, 32, 32});
  EXPECT_THROW(model->forward(in), std::invalid_argument);
}

TEST(Inspect, MatchesForwardAndPanelLayout) {
  auto model = build_model(ModelConfig::tiny());
  const auto in = random_input(1, 32, 40, 7);
  const auto parts = inspect(model, in);
  torch::NoGradGuard ng;
  const auto out = model->forward(in);
  EXPECT_EQ(parts.refined_w, to_image(out.refined_w[3]));
  EXPECT_EQ(parts.refined_uw, to_image(out.refined_uw[3]));
  EXPECT_EQ(parts.mask_w, to_image(out.masks[3].narrow(1, 0, 1)));
  EXPECT_EQ(parts.mask_uw, to_image(out.masks[3].narrow(1, 1, 1)));
  const Image panel = intermediates_panel(parts);
  EXPECT_EQ(panel.width(), 4 * 40);
  EXPECT_EQ(panel.height(), 32);
  EXPECT_EQ(panel.channels(), 3);
}
