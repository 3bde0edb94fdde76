#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/nn/module.h>
#include <torch/nn/modules/container/modulelist.h>
#include <torch/nn/modules/conv.h>
#include <torch/nn/pimpl.h>
#include <torch/types.h>

#include <json.hpp>

#include "dualfocus/image.hpp"

namespace dualfocus::dfnet {

/// Which branches a model carries. The single-path variants exist for the
/// input ablations; their masks are fixed one-hot.
enum class Variant { full, w_only, uw_only };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

/// One blending block: a stage per channel entry, each stage running one
/// atrous 3x3 branch per rate. Channel counts are given at the reference
/// width (base_channels = 16) and scaled with base_channels; the last entry
/// is the two mask logits and is never scaled.
struct AsppSpec {
  std::vector<int> rates;
  std::vector<int> channels;
};

struct ModelConfig {
  int base_channels = 16;
  int n_scales = 4;
  /// Residual blocks applied at the coarsest scale of each refinement path.
  int refine_blocks = 1;
  /// Side of the per-pixel kernels predicted by the refinement heads.
  int kernel_size = 3;
  /// Defocus planes are divided by this before entering the network.
  double defocus_scale_px = 8.0;
  /// Index 0 is the 1/8 scale block, index 3 full resolution.
  std::array<AsppSpec, 4> aspp = default_aspp();
  bool use_occlusion_input = true;
  bool use_radial_mask = true;
  Variant variant = Variant::full;
  std::uint64_t seed = 0;

  void validate() const;
  int w_input_channels() const;
  int uw_input_channels() const;
  int fusion_input_channels(int scale_index) const;
  /// Scaled channel list actually instantiated for block `scale_index`.
  std::vector<int> aspp_channels(int scale_index) const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  static std::array<AsppSpec, 4> default_aspp();
  /// Small configuration used for desk-scale training and gradient checks.
  static ModelConfig tiny();
};

/// Batched network input; every plane is [B, C, H, W] with H and W divisible by 8.
struct NetInput {
  torch::Tensor w_image;      // 3
  torch::Tensor uw_warped;    // 3
  torch::Tensor occlusion;    // 1, 1 = unreliable UW
  torch::Tensor ref_defocus;  // 1, px
  torch::Tensor tgt_defocus;  // 1, px
  torch::Tensor radial;       // 1, in [0,1]

  int64_t batch() const { return w_image.size(0); }
  int64_t height() const { return w_image.size(2); }
  int64_t width() const { return w_image.size(3); }
  void validate() const;
  NetInput to(torch::ScalarType dtype) const;
};

/// Per-scale outputs, index 0 = 1/8 resolution ... 3 = full resolution.
struct MultiScaleOutput {
  std::vector<torch::Tensor> refined_w;
  std::vector<torch::Tensor> refined_uw;
  std::vector<torch::Tensor> masks;  // 2 channels: W weight, UW weight
  std::vector<torch::Tensor> blended;
};

/// Distance of every crop pixel from the full-image center, normalized so
/// the full-image corner pixels are 1. The center is ((W-1)/2, (H-1)/2).
/// Throws std::out_of_range when the crop leaves the full image.
Image radial_mask(int full_width, int full_height, int crop_x, int crop_y, int crop_width, int crop_height);

/// Same formula without the bounds check, for padded inference tiles.
torch::Tensor radial_mask_tensor(int full_width, int full_height, int crop_x, int crop_y, int crop_width,
                                 int crop_height);

/// W- or UW-side refinement: a small encoder-decoder whose heads predict a
/// per-pixel kernel and a residual at each scale; the kernel filters the
/// path's image at that scale.
class RefinePathImpl : public torch::nn::Module {
 public:
  RefinePathImpl(int in_channels, int base_channels, int refine_blocks, int kernel_size);

  /// `x` carries the path's image in its first three channels.
  std::vector<torch::Tensor> forward(const torch::Tensor& x);

 private:
  int kernel_size_;
  torch::nn::Conv2d enc1_{nullptr}, enc2_{nullptr}, enc3_{nullptr}, enc4_{nullptr};
  torch::nn::ModuleList res_blocks_;
  torch::nn::Conv2d dec3_{nullptr}, dec2_{nullptr}, dec1_{nullptr};
  std::array<torch::nn::Conv2d, 4> heads_{nullptr, nullptr, nullptr, nullptr};
};
TORCH_MODULE(RefinePath);

/// Blending block for one scale: sequence of multi-rate atrous stages.
class AsppBlockImpl : public torch::nn::Module {
 public:
  AsppBlockImpl(int in_channels, const std::vector<int>& rates, const std::vector<int>& channels);

  /// Returns two-channel mask logits.
  torch::Tensor forward(const torch::Tensor& x);

  /// Sets the final projection bias (used to bias the first block towards W).
  void set_output_bias(double w_logit, double uw_logit);

 private:
  std::vector<torch::nn::ModuleList> branches_;
  std::vector<torch::nn::Conv2d> projections_;
};
TORCH_MODULE(AsppBlock);

class DetailFusionNetImpl : public torch::nn::Module {
 public:
  explicit DetailFusionNetImpl(ModelConfig config);

  MultiScaleOutput forward(const NetInput& input);

  const ModelConfig& config() const { return config_; }

 private:
  torch::Tensor w_path_input(const NetInput& in) const;
  torch::Tensor uw_path_input(const NetInput& in) const;

  ModelConfig config_;
  RefinePath w_path_{nullptr};
  RefinePath uw_path_{nullptr};
  std::vector<AsppBlock> fusion_;
};
TORCH_MODULE(DetailFusionNet);

/// Builds a model with seed-deterministic initialization.
DetailFusionNet build_model(const ModelConfig& config);

int64_t parameter_count(const DetailFusionNet& model);

/// Full-resolution intermediates for a single-sample input.
struct Intermediates {
  Image refined_w;
  Image refined_uw;
  Image mask_w;
  Image mask_uw;
};

Intermediates inspect(DetailFusionNet& model, const NetInput& input);

/// Side-by-side panel: refined W | refined UW | mask W | mask UW.
Image intermediates_panel(const Intermediates& parts);

}  // namespace dualfocus::dfnet
