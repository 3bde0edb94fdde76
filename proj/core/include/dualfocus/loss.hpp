#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <torch/types.h>

#include "dualfocus/metrics.hpp"

namespace dualfocus::loss {

/// Feature extractor for the perceptual term. Implementations must be
/// differentiable in their input and hold their weights fixed.
class PerceptualBackend {
 public:
  virtual ~PerceptualBackend() = default;
  virtual std::string name() const = 0;
  virtual std::vector<torch::Tensor> features(const torch::Tensor& x) const = 0;
};

/// Three stride-2 3x3 conv + ReLU stages (3 -> 8 -> 16 -> 16 channels) with
/// fixed random He-scaled weights drawn from `seed`.
class RandomPyramid final : public PerceptualBackend {
 public:
  explicit RandomPyramid(std::uint64_t seed = 20240917);
  std::string name() const override { return "random-pyramid"; }
  std::vector<torch::Tensor> features(const torch::Tensor& x) const override;

 private:
  std::vector<torch::Tensor> weights_;
  std::vector<torch::Tensor> biases_;
};

/// "random" is the only built-in backend; "none" disables the term.
std::shared_ptr<PerceptualBackend> make_backend(const std::string& name);

struct LossWeights {
  double l1_pixel = 1.0;
  double l1_grad = 1.0;
  double ssim = 1.0;
  double perceptual = 1.0;
};

struct Terms {
  double l1_pixel = 0.0;
  double l1_grad = 0.0;
  double ssim = 0.0;  // 1 - SSIM
  double perceptual = 0.0;
  double total = 0.0;
};

struct LossBreakdown {
  std::vector<Terms> per_scale;  // index 0 = 1/8 scale
  Terms summed;
  torch::Tensor total;  // differentiable scalar
};

/// Mean absolute difference.
torch::Tensor l1(const torch::Tensor& a, const torch::Tensor& b);

/// Forward differences along x and y with a replicate boundary (the last
/// difference is 0); returns [B, 2C, H, W] with dx channels first.
torch::Tensor gradients(const torch::Tensor& x);

/// Mean SSIM over pixels, channels and batch; clamp-to-edge Gaussian windows.
torch::Tensor ssim(const torch::Tensor& a, const torch::Tensor& b, const metrics::SsimParams& params = {});

/// Box-filter downsample by an integer factor.
torch::Tensor area_downsample(const torch::Tensor& x, int factor);

/// Sum over scales of L1 + gradient L1 + (1 - SSIM) + perceptual. `outputs`
/// are the blended predictions coarse to fine; the target is full resolution
/// and is area-downsampled to every scale.
LossBreakdown loss_total(const std::vector<torch::Tensor>& outputs, const torch::Tensor& target,
                         const PerceptualBackend* perceptual, const LossWeights& weights = {});

}  // namespace dualfocus::loss
