#include "dualfocus/loss.hpp"

#include <torch/torch.h>

#include <cmath>
#include <random>
#include <stdexcept>

namespace dualfocus::loss {
namespace F = torch::nn::functional;

RandomPyramid::RandomPyramid(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int channels[] = {3, 8, 16, 16};
  for (int stage = 0; stage < 3; ++stage) {
    const int in = channels[stage];
    const int out = channels[stage + 1];
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / (in * 9)));
    auto w = torch::empty({out, in, 3, 3}, torch::kFloat64);
    auto acc = w.data_ptr<double>();
    for (int64_t i = 0; i < w.numel(); ++i) acc[i] = normal(rng);
    weights_.push_back(w);
    biases_.push_back(torch::zeros({out}, torch::kFloat64));
  }
}

std::vector<torch::Tensor> RandomPyramid::features(const torch::Tensor& x) const {
  std::vector<torch::Tensor> out;
  torch::Tensor h = x;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    const auto w = weights_[i].to(x.options());
    const auto b = biases_[i].to(x.options());
    h = torch::relu(F::conv2d(h, w, F::Conv2dFuncOptions().bias(b).stride(2).padding(1)));
    out.push_back(h);
  }
  return out;
}

std::shared_ptr<PerceptualBackend> make_backend(const std::string& name) {
  if (name == "random") return std::make_shared<RandomPyramid>();
  if (name == "none") return nullptr;
  throw std::invalid_argument("unknown perceptual backend: " + name);
}

torch::Tensor l1(const torch::Tensor& a, const torch::Tensor& b) { return (a - b).abs().mean(); }

torch::Tensor gradients(const torch::Tensor& x) {
  const auto w = x.size(3);
  const auto h = x.size(2);
  auto dx = F::pad(x.slice(3, 1, w) - x.slice(3, 0, w - 1), F::PadFuncOptions({0, 1, 0, 0}));
  auto dy = F::pad(x.slice(2, 1, h) - x.slice(2, 0, h - 1), F::PadFuncOptions({0, 0, 0, 1}));
  return torch::cat({dx, dy}, 1);
}

torch::Tensor ssim(const torch::Tensor& a, const torch::Tensor& b, const metrics::SsimParams& params) {
  if (a.sizes() != b.sizes()) throw std::invalid_argument("ssim: shape mismatch");
  const int half = params.window / 2;
  const auto c = a.size(1);
  auto taps = torch::empty({params.window}, torch::kFloat64);
  for (int i = 0; i < params.window; ++i) {
    const double d = i - half;
    taps[i] = std::exp(-d * d / (2.0 * params.sigma * params.sigma));
  }
  taps = (taps / taps.sum()).to(a.options());
  const auto kx = taps.view({1, 1, 1, params.window}).expand({c, 1, 1, params.window}).contiguous();
  const auto ky = taps.view({1, 1, params.window, 1}).expand({c, 1, params.window, 1}).contiguous();
  auto blur = [&](const torch::Tensor& t) {
    auto h = F::conv2d(F::pad(t, F::PadFuncOptions({half, half, 0, 0}).mode(torch::kReplicate)), kx,
                       F::Conv2dFuncOptions().groups(c));
    return F::conv2d(F::pad(h, F::PadFuncOptions({0, 0, half, half}).mode(torch::kReplicate)), ky,
                     F::Conv2dFuncOptions().groups(c));
  };
  const double c1 = std::pow(params.k1 * params.data_range, 2);
  const double c2 = std::pow(params.k2 * params.data_range, 2);
  const auto mx = blur(a);
  const auto my = blur(b);
  const auto vx = blur(a * a) - mx * mx;
  const auto vy = blur(b * b) - my * my;
  const auto cov = blur(a * b) - mx * my;
  const auto map = ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
  return map.mean();
}

torch::Tensor area_downsample(const torch::Tensor& x, int factor) {
  if (factor == 1) return x;
  return F::avg_pool2d(x, F::AvgPool2dFuncOptions(factor).stride(factor));
}

LossBreakdown loss_total(const std::vector<torch::Tensor>& outputs, const torch::Tensor& target,
                         const PerceptualBackend* perceptual, const LossWeights& weights) {
  LossBreakdown out;
  torch::Tensor total = torch::zeros({}, target.options());
  for (const auto& pred : outputs) {
    const int factor = static_cast<int>(target.size(2) / pred.size(2));
    if (pred.size(2) * factor != target.size(2) || pred.size(3) * factor != target.size(3)) {
      throw std::invalid_argument("loss_total: output scale does not divide the target");
    }
    const auto tgt = area_downsample(target, factor);
    if (pred.sizes() != tgt.sizes()) throw std::invalid_argument("loss_total: output/target shape mismatch");

    const auto t_pix = l1(pred, tgt);
    const auto t_grad = l1(gradients(pred), gradients(tgt));
    const auto t_ssim = 1.0 - ssim(pred, tgt);
    torch::Tensor t_perc = torch::zeros({}, target.options());
    if (perceptual != nullptr) {
      const auto fp = perceptual->features(pred);
      const auto ft = perceptual->features(tgt);
      for (std::size_t i = 0; i < fp.size(); ++i) t_perc = t_perc + l1(fp[i], ft[i]);
    }
    const auto scale_total = weights.l1_pixel * t_pix + weights.l1_grad * t_grad + weights.ssim * t_ssim +
                             weights.perceptual * t_perc;
    total = total + scale_total;

    Terms terms{t_pix.item<double>(), t_grad.item<double>(), t_ssim.item<double>(), t_perc.item<double>(),
                scale_total.item<double>()};
    out.summed.l1_pixel += terms.l1_pixel;
    out.summed.l1_grad += terms.l1_grad;
    out.summed.ssim += terms.ssim;
    out.summed.perceptual += terms.perceptual;
    out.summed.total += terms.total;
    out.per_scale.push_back(terms);
  }
  out.total = total;
  return out;
}

}  // namespace dualfocus::loss
