#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "dualfocus/align.hpp"
#include "dualfocus/dfnet.hpp"
#include "dualfocus/loss.hpp"
#include "dualfocus/metrics.hpp"
#include "dualfocus/synthcam.hpp"

using namespace dualfocus;

namespace {

synthcam::SceneRGBD bench_scene(int size) {
  optics::CameraIntrinsics cam = optics::CameraIntrinsics::centered(6.8, 4.0, 0.006, size, size);
  synthcam::SceneConfig cfg;
  cfg.n_layers = 3;
  return synthcam::generate_scene(11, cfg, cam);
}

dfnet::NetInput random_input(int batch, int size) {
  torch::manual_seed(3);
  auto plane = [&](int c) { return torch::rand({batch, c, size, size}); };
  return {plane(3), plane(3), (plane(1) > 0.9f).to(torch::kFloat32), plane(1) * 8, plane(1) * 8, plane(1)};
}

}  // namespace

static void BM_RenderDefocused(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const auto scene = bench_scene(size);
  const auto cam = optics::CameraIntrinsics::centered(6.8, 4.0, 0.006, size, size);
  for (auto _ : state) {
    benchmark::DoNotOptimize(synthcam::render_defocused(scene, cam, optics::LensState{800.0}));
  }
}
BENCHMARK(BM_RenderDefocused)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_EstimateWarp(benchmark::State& state) {
  const auto scene = bench_scene(256);
  const Image shifted = metrics::apply_alignment(scene.aif, 1.0, 3.0, -2.0);
  for (auto _ : state) benchmark::DoNotOptimize(align::estimate_warp(scene.aif, shifted));
}
BENCHMARK(BM_EstimateWarp)->Unit(benchmark::kMillisecond);

static void BM_FovAlign(benchmark::State& state) {
  const auto scene = bench_scene(256);
  const Image moved = metrics::apply_alignment(scene.aif, 1.02, 2.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::fov_align(moved, scene.aif));
}
BENCHMARK(BM_FovAlign)->Unit(benchmark::kMillisecond);

static void BM_Forward(benchmark::State& state) {
  auto model = dfnet::build_model(dfnet::ModelConfig::tiny());
  const auto input = random_input(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  torch::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(model->forward(input));
}
BENCHMARK(BM_Forward)->Args({1, 256})->Args({4, 128})->Unit(benchmark::kMillisecond);

static void BM_Loss(benchmark::State& state) {
  const auto input = random_input(4, 128);
  loss::RandomPyramid perceptual;
  std::vector<torch::Tensor> outs;
  for (int f : {8, 4, 2, 1}) outs.push_back(loss::area_downsample(input.uw_warped, f));
  for (auto _ : state) benchmark::DoNotOptimize(loss::loss_total(outs, input.w_image, &perceptual));
}
BENCHMARK(BM_Loss)->Unit(benchmark::kMillisecond);

static void BM_TrainStep(benchmark::State& state) {
  auto config = dfnet::ModelConfig::tiny();
  config.variant = static_cast<dfnet::Variant>(state.range(1));
  auto model = dfnet::build_model(config);
  const auto input = random_input(static_cast<int>(state.range(0)), 128);
  loss::RandomPyramid perceptual;
  torch::optim::Adam opt(model->parameters(), torch::optim::AdamOptions(1e-4));
  for (auto _ : state) {
    const auto out = model->forward(input);
    auto l = loss::loss_total(out.blended, input.w_image, &perceptual);
    opt.zero_grad();
    l.total.backward();
    opt.step();
  }
}
BENCHMARK(BM_TrainStep)->Args({2, 0})->Args({4, 0})->Args({2, 1})->Args({2, 2})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
