#include <gtest/gtest.h>

#include <torch/torch.h>

#include "dualfocus/inference.hpp"
#include "dualfocus/tensor_bridge.hpp"
#include "support.hpp"

using namespace dualfocus;
using namespace dualfocus::inference;

TEST(Tiles, StartOffsets) {
  EXPECT_EQ(tile_starts(100, 512, 32), (std::vector<int>{0}));
  EXPECT_EQ(tile_starts(512, 512, 32), (std::vector<int>{0}));
  EXPECT_EQ(tile_starts(1000, 512, 32), (std::vector<int>{0, 244, 488}));
  EXPECT_EQ(tile_starts(200, 64, 16), (std::vector<int>{0, 45, 90, 136}));
  for (int len : {65, 130, 257, 1023}) {
    const auto s = tile_starts(len, 64, 16);
    EXPECT_EQ(s.front(), 0);
    EXPECT_EQ(s.back() + 64, len);
    for (std::size_t i = 1; i < s.size(); ++i) EXPECT_GE(s[i - 1] + 64 - s[i], 16);
  }
}

TEST(Tiles, BlendReconstructsPixelwiseFunctions) {
  const Planes p = fixtures::random_planes(150, 97, 1);
  int calls = 0;
  const Image out = run_tiled(p, {64, 16}, [&](const Planes& t, int, int) {
    ++calls;
    return t.w;
  });
  EXPECT_EQ(calls, 3 * 2);
  EXPECT_LT(fixtures::max_abs_diff(out, p.w), 1e-6);
}

TEST(Tiles, OffsetsMatchCropPosition) {
  const Planes p = fixtures::random_planes(130, 70, 2);
  run_tiled(p, {64, 8}, [&](const Planes& t, int x0, int y0) {
    EXPECT_EQ(t.w, p.w.crop(x0, y0, t.width(), t.height()));
    return t.w;
  });
}

TEST(Tiles, ConfigValidation) {
  EXPECT_THROW((TileConfig{60, 8}).validate(), std::invalid_argument);
  EXPECT_THROW((TileConfig{64, 32}).validate(), std::invalid_argument);
  EXPECT_NO_THROW((TileConfig{64, 0}).validate());
  Planes p = fixtures::random_planes(16, 16, 3);
  p.occlusion = Image(16, 15, 1);
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(MakeInput, ReplicatePadsToMultipleOfEight) {
  const Planes p = fixtures::random_planes(21, 13, 4);
  const auto in = make_input(p, 0, 0, 21, 13);
  EXPECT_EQ(in.w_image.sizes(), torch::IntArrayRef({1, 3, 16, 24}));
  EXPECT_EQ(in.radial.sizes(), torch::IntArrayRef({1, 1, 16, 24}));
  EXPECT_EQ(to_image(in.w_image.slice(2, 0, 13).slice(3, 0, 21)), p.w);
  EXPECT_EQ(in.w_image[0][1][15][23].item<float>(), p.w.at(1, 12, 20));
  EXPECT_EQ(in.tgt_defocus[0][0][5][22].item<float>(), p.tgt_defocus.at(0, 5, 20));
  EXPECT_EQ(to_image(in.radial.slice(2, 0, 13).slice(3, 0, 21)), dfnet::radial_mask(21, 13, 0, 0, 21, 13));
}

TEST(Predict, TiledMatchesUntiled) {
  auto model = dfnet::build_model(dfnet::ModelConfig::tiny());
  model->eval();
  const Planes p = fixtures::random_planes(200, 152, 5);
  const Image whole = predict(model, p, {512, 32});
  const Image tiled = predict(model, p, {128, 32});
  EXPECT_EQ(whole.width(), 200);
  EXPECT_EQ(whole.height(), 152);
  const double diff = fixtures::max_abs_diff(whole, tiled);
  RecordProperty("max_abs_diff", std::to_string(diff));
  EXPECT_LE(diff, 2.0 / 255.0);
  for (float v : whole.data()) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
}

TEST(Predict, SingleTileIsExactAndDeterministic) {
  auto model = dfnet::build_model(dfnet::ModelConfig::tiny());
  model->eval();
  const Planes p = fixtures::random_planes(64, 48, 6);
  const Image a = predict(model, p);
  const Image b = predict(model, p, {64, 16});
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, predict(model, p));
}
