#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>

#include <torch/torch.h>

#include "dualfocus/checkpoint.hpp"
#include "dualfocus/tensor_bridge.hpp"
#include "dualfocus/train.hpp"
#include "support.hpp"

using namespace dualfocus;
using dualfocus::fixtures::TempDir;

namespace {

train::TrainConfig quick_config(int steps1, int steps2) {
  train::TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.crop = 32;
  cfg.steps1 = steps1;
  cfg.steps2 = steps2;
  cfg.lr_phase1 = 1e-3;
  cfg.lr_phase2 = 1e-4;
  cfg.seed = 11;
  cfg.log_every = 1;
  return cfg;
}

// Shared small dataset, built once per test binary.
const std::vector<dataset::StoredScene>& scenes() {
  static TempDir dir("dualfocus_train");
  static const auto loaded = [] {
    fixtures::small_dataset(dir.path(), 2, 4, 48);
    return dataset::load_dataset(dir.path());
  }();
  return loaded;
}

}  // namespace

TEST(SamplePair, UniformOverOrderedDistinctPairs) {
  std::mt19937_64 rng(1);
  const int n = 5;
  const int draws = 40000;
  std::map<std::pair<int, int>, int> counts;
  for (int i = 0; i < draws; ++i) {
    const auto p = train::sample_pair(n, rng);
    ASSERT_NE(p.first, p.second);
    ASSERT_GE(std::min(p.first, p.second), 0);
    ASSERT_LT(std::max(p.first, p.second), n);
    ++counts[p];
  }
  ASSERT_EQ(counts.size(), std::size_t(n * (n - 1)));
  const double expected = double(draws) / (n * (n - 1));
  double chi2 = 0.0;
  for (const auto& [k, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 19 degrees of freedom; the 0.999 quantile is 43.8.
  EXPECT_LT(chi2, 43.8);
}

TEST(SamplePair, TwoSlicesAndErrors) {
  std::mt19937_64 rng(2);
  int forward = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto p = train::sample_pair(2, rng);
    EXPECT_EQ(p.first + p.second, 1);
    forward += p.first == 0;
  }
  EXPECT_GT(forward, 400);
  EXPECT_LT(forward, 600);
  EXPECT_THROW(train::sample_pair(1, rng), std::invalid_argument);
}

TEST(Batch, CropsAreDeterministicAndConsistent) {
  std::vector<train::SceneTensors> data;
  for (const auto& s : scenes()) data.push_back(train::prepare_scene(s));
  std::mt19937_64 a(3), b(3);
  const auto ba = train::crop_batch(data, 4, 32, a);
  const auto bb = train::crop_batch(data, 4, 32, b);
  ASSERT_EQ(ba.crops.size(), 4u);
  EXPECT_TRUE(torch::equal(ba.target, bb.target));
  EXPECT_TRUE(torch::equal(ba.input.w_image, bb.input.w_image));
  EXPECT_EQ(ba.target.sizes(), torch::IntArrayRef({4, 3, 32, 32}));
  for (std::size_t i = 0; i < ba.crops.size(); ++i) {
    const auto& c = ba.crops[i];
    EXPECT_NE(c.ref, c.tgt);
    const auto& s = scenes()[c.scene];
    const Image expected_target = s.w_slices[c.tgt].crop(c.x0, c.y0, 32, 32);
    EXPECT_EQ(to_image(ba.target[i]), expected_target);
    const Image expected_radial = dfnet::radial_mask(s.width(), s.height(), c.x0, c.y0, 32, 32);
    EXPECT_EQ(to_image(ba.input.radial[i]), expected_radial);
    EXPECT_EQ(to_image(ba.input.ref_defocus[i]), s.defocus(c.ref).radius_px.crop(c.x0, c.y0, 32, 32));
  }
}

TEST(Batch, RadialMaskFollowsCropOffset) {
  std::vector<train::SceneTensors> data = {train::prepare_scene(scenes()[0])};
  const auto left = train::assemble_batch(data, {{0, 0, 1, 0, 0}}, 16);
  const auto right = train::assemble_batch(data, {{0, 0, 1, 32, 32}}, 16);
  EXPECT_FALSE(torch::equal(left.input.radial, right.input.radial));
  EXPECT_FLOAT_EQ(left.input.radial[0][0][0][0].item<float>(), 1.0f);
  EXPECT_FLOAT_EQ(right.input.radial[0][0][15][15].item<float>(), 1.0f);
  EXPECT_THROW(train::assemble_batch(data, {{0, 0, 1, 40, 0}}, 16), std::out_of_range);
}

TEST(Train, ZeroStepsReturnsInitialModel) {
  auto cfg = quick_config(0, 0);
  const auto r = train::train(scenes(), cfg);
  EXPECT_TRUE(r.history.empty());
  auto init = dfnet::build_model(cfg.model);
  auto model = r.model;
  EXPECT_TRUE(checkpoint::same_weights(model, init));
}

TEST(Train, SameSeedSameCurveAndWeights) {
  auto cfg = quick_config(4, 2);
  const auto a = train::train(scenes(), cfg);
  const auto b = train::train(scenes(), cfg);
  ASSERT_EQ(a.history.size(), 6u);
  for (std::size_t i = 0; i < a.history.size(); ++i) EXPECT_EQ(a.history[i].terms.total, b.history[i].terms.total);
  EXPECT_EQ(a.checkpoint_id, b.checkpoint_id);
  cfg.seed = 12;
  const auto c = train::train(scenes(), cfg);
  EXPECT_NE(a.history[0].terms.total, c.history[0].terms.total);
}

TEST(Train, LearningRateDropsOnceAtPhaseBoundary) {
  const auto r = train::train(scenes(), quick_config(3, 2));
  int changes = 0;
  for (std::size_t i = 1; i < r.history.size(); ++i) changes += r.history[i].lr != r.history[i - 1].lr;
  EXPECT_EQ(changes, 1);
  EXPECT_EQ(r.history[2].lr, 1e-3);
  EXPECT_EQ(r.history[3].lr, 1e-4);
}

TEST(Train, OverfitsSingleScene) {
  std::vector<dataset::StoredScene> one = {scenes()[0]};
  auto cfg = quick_config(200, 0);
  cfg.batch_size = 4;
  cfg.crop = 48;
  const auto r = train::train(one, cfg);
  auto window_mean = [&](std::size_t from) {
    double s = 0.0;
    for (std::size_t i = from; i < from + 10; ++i) s += r.history[i].terms.total;
    return s / 10.0;
  };
  const double first = window_mean(0);
  const double last = window_mean(r.history.size() - 10);
  EXPECT_LT(last, 0.5 * first) << "first " << first << " last " << last;
}

TEST(Train, NonFiniteLossAborts) {
  auto bad = scenes();
  for (auto& s : bad) {
    for (auto& slice : s.w_slices) slice.data()[0] = std::nanf("");
  }
  auto cfg = quick_config(3, 0);
  cfg.crop = 48;
  EXPECT_THROW(train::train(bad, cfg), std::runtime_error);
}

TEST(Train, WritesCsvLogAndCheckpoint) {
  TempDir dir;
  std::ostringstream csv;
  auto cfg = quick_config(3, 2);
  cfg.log_every = 2;
  int callbacks = 0;
  const auto r = train::train(scenes(), cfg, dir / "m.ckpt", &csv, [&](const train::LogRow&) { ++callbacks; });
  EXPECT_EQ(callbacks, 5);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "step,lr,l1_pixel,l1_grad,ssim,perceptual,total");
  std::vector<int> steps;
  while (std::getline(lines, line)) steps.push_back(std::stoi(line.substr(0, line.find(','))));
  EXPECT_EQ(steps, (std::vector<int>{0, 2, 4}));
  const auto loaded = checkpoint::load(dir / "m.ckpt");
  EXPECT_EQ(loaded.id, r.checkpoint_id);
  EXPECT_EQ(loaded.extra.at("train").at("seed"), 11);
}

TEST(Train, ConfigValidationAndAblations) {
  auto cfg = quick_config(1, 1);
  EXPECT_EQ(train::TrainConfig::from_json(cfg.to_json()).to_json(), cfg.to_json());
  auto bad = cfg;
  bad.crop = 30;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.lr_phase2 = 0.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  EXPECT_THROW(train::train(std::vector<dataset::StoredScene>{}, cfg), std::invalid_argument);
  EXPECT_EQ(train::apply_ablation(cfg.model, train::Ablation::w_only).variant, dfnet::Variant::w_only);
  EXPECT_EQ(train::apply_ablation(cfg.model, train::Ablation::uw_only).variant, dfnet::Variant::uw_only);
  EXPECT_FALSE(train::apply_ablation(cfg.model, train::Ablation::no_occlusion).use_occlusion_input);
  EXPECT_EQ(train::ablation_from_string(train::to_string(train::Ablation::no_occlusion)), train::Ablation::no_occlusion);
}
