#include "dualfocus/dfnet.hpp"

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dualfocus/tensor_bridge.hpp"

namespace dualfocus::dfnet {
namespace F = torch::nn::functional;
namespace {

torch::nn::Conv2d conv3x3(int in, int out, int stride = 1, int dilation = 1) {
  return torch::nn::Conv2d(
      torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(dilation).dilation(dilation));
}

torch::nn::Conv2d conv1x1(int in, int out) { return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1)); }

torch::Tensor upsample2(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

torch::Tensor downsample(const torch::Tensor& x, int factor) {
  if (factor == 1) return x;
  return F::avg_pool2d(x, F::AvgPool2dFuncOptions(factor).stride(factor));
}

// Filters every channel of `img` with its own per-pixel k x k kernel.
torch::Tensor dynamic_filter(const torch::Tensor& img, const torch::Tensor& kernels, int k) {
  const int pad = k / 2;
  const auto b = img.size(0);
  const auto c = img.size(1);
  const auto h = img.size(2);
  const auto w = img.size(3);
  auto padded = F::pad(img, F::PadFuncOptions({pad, pad, pad, pad}).mode(torch::kReplicate));
  auto patches = F::unfold(padded, F::UnfoldFuncOptions({k, k})).view({b, c, k * k, h, w});
  return (patches * kernels.unsqueeze(1)).sum(2);
}

void scale_parameters(torch::nn::Conv2d& conv, double weight_gain) {
  torch::NoGradGuard guard;
  conv->weight.mul_(weight_gain);
  if (conv->bias.defined()) conv->bias.zero_();
}

int scaled_channels(int reference, int base) {
  return std::max(2, static_cast<int>(std::lround(reference * base / 16.0)));
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::w_only: return "w-only";
    case Variant::uw_only: return "uw-only";
  }
  return "full";
}

Variant variant_from_string(const std::string& name) {
  if (name == "full") return Variant::full;
  if (name == "w-only") return Variant::w_only;
  if (name == "uw-only") return Variant::uw_only;
  throw std::invalid_argument("unknown model variant: " + name);
}

std::array<AsppSpec, 4> ModelConfig::default_aspp() {
  return {AsppSpec{{1, 3, 5}, {16, 32, 2}}, AsppSpec{{1, 3, 6, 12}, {16, 32, 2}},
          AsppSpec{{1, 3, 6, 12, 15}, {16, 32, 2}}, AsppSpec{{1, 3, 6, 12, 15, 18}, {16, 32, 32, 2}}};
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.base_channels = 4;
  return c;
}

void ModelConfig::validate() const {
  if (base_channels < 1) throw std::invalid_argument("model: base_channels must be >= 1");
  if (n_scales != 4) throw std::invalid_argument("model: n_scales must be 4");
  if (refine_blocks < 0) throw std::invalid_argument("model: refine_blocks must be >= 0");
  if (kernel_size < 1 || kernel_size % 2 == 0) throw std::invalid_argument("model: kernel_size must be odd");
  if (!(defocus_scale_px > 0.0)) throw std::invalid_argument("model: defocus_scale_px must be > 0");
  for (const auto& spec : aspp) {
    if (spec.rates.empty() || spec.channels.empty()) throw std::invalid_argument("model: empty aspp spec");
    if (spec.channels.back() != 2) throw std::invalid_argument("model: aspp blocks must end in 2 channels");
    for (int r : spec.rates) {
      if (r < 1) throw std::invalid_argument("model: atrous rates must be >= 1");
    }
    for (int c : spec.channels) {
      if (c < 1) throw std::invalid_argument("model: aspp channels must be >= 1");
    }
  }
}

int ModelConfig::w_input_channels() const { return 3 + 1 + 1 + (use_radial_mask ? 1 : 0); }

int ModelConfig::uw_input_channels() const {
  return 3 + (use_occlusion_input ? 1 : 0) + 1 + (use_radial_mask ? 1 : 0);
}

int ModelConfig::fusion_input_channels(int scale_index) const {
  return 3 + 3 + (use_occlusion_input ? 1 : 0) + 1 + (use_radial_mask ? 1 : 0) + (scale_index > 0 ? 2 : 0);
}

std::vector<int> ModelConfig::aspp_channels(int scale_index) const {
  const auto& ref = aspp.at(static_cast<std::size_t>(scale_index)).channels;
  std::vector<int> out;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    out.push_back(i + 1 == ref.size() ? ref[i] : scaled_channels(ref[i], base_channels));
  }
  return out;
}

nlohmann::json ModelConfig::to_json() const {
  nlohmann::json aspp_json = nlohmann::json::array();
  for (const auto& s : aspp) aspp_json.push_back({{"rates", s.rates}, {"channels", s.channels}});
  return {{"base_channels", base_channels},
          {"n_scales", n_scales},
          {"refine_blocks", refine_blocks},
          {"kernel_size", kernel_size},
          {"defocus_scale_px", defocus_scale_px},
          {"aspp", aspp_json},
          {"use_occlusion_input", use_occlusion_input},
          {"use_radial_mask", use_radial_mask},
          {"variant", to_string(variant)},
          {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.base_channels = j.at("base_channels").get<int>();
  c.n_scales = j.at("n_scales").get<int>();
  c.refine_blocks = j.at("refine_blocks").get<int>();
  c.kernel_size = j.at("kernel_size").get<int>();
  c.defocus_scale_px = j.at("defocus_scale_px").get<double>();
  const auto& aspp_json = j.at("aspp");
  if (aspp_json.size() != 4) throw std::invalid_argument("model: aspp must list 4 blocks");
  for (std::size_t i = 0; i < 4; ++i) {
    c.aspp[i].rates = aspp_json[i].at("rates").get<std::vector<int>>();
    c.aspp[i].channels = aspp_json[i].at("channels").get<std::vector<int>>();
  }
  c.use_occlusion_input = j.at("use_occlusion_input").get<bool>();
  c.use_radial_mask = j.at("use_radial_mask").get<bool>();
  c.variant = variant_from_string(j.at("variant").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

void NetInput::validate() const {
  const torch::Tensor* planes[] = {&w_image, &uw_warped, &occlusion, &ref_defocus, &tgt_defocus, &radial};
  const int64_t expected_channels[] = {3, 3, 1, 1, 1, 1};
  for (int i = 0; i < 6; ++i) {
    const auto& t = *planes[i];
    if (!t.defined() || t.dim() != 4) throw std::invalid_argument("NetInput: planes must be [B,C,H,W]");
    if (t.size(1) != expected_channels[i]) throw std::invalid_argument("NetInput: wrong channel count");
    if (t.size(0) != w_image.size(0) || t.size(2) != w_image.size(2) || t.size(3) != w_image.size(3)) {
      throw std::invalid_argument("NetInput: planes disagree on batch or spatial size");
    }
  }
  if (height() % 8 != 0 || width() % 8 != 0) {
    throw std::invalid_argument("NetInput: height and width must be divisible by 8");
  }
}

NetInput NetInput::to(torch::ScalarType dtype) const {
  return {w_image.to(dtype),     uw_warped.to(dtype),   occlusion.to(dtype),
          ref_defocus.to(dtype), tgt_defocus.to(dtype), radial.to(dtype)};
}

torch::Tensor radial_mask_tensor(int full_width, int full_height, int crop_x, int crop_y, int crop_width,
                                 int crop_height) {
  const double cx = (full_width - 1) / 2.0;
  const double cy = (full_height - 1) / 2.0;
  const double norm = std::max(std::hypot(cx, cy), 1e-12);
  auto out = torch::empty({1, crop_height, crop_width}, torch::kFloat32);
  auto acc = out.accessor<float, 3>();
  for (int y = 0; y < crop_height; ++y) {
    for (int x = 0; x < crop_width; ++x) {
      acc[0][y][x] = static_cast<float>(std::hypot(crop_x + x - cx, crop_y + y - cy) / norm);
    }
  }
  return out;
}

Image radial_mask(int full_width, int full_height, int crop_x, int crop_y, int crop_width, int crop_height) {
  if (full_width <= 0 || full_height <= 0 || crop_width <= 0 || crop_height <= 0 || crop_x < 0 || crop_y < 0 ||
      crop_x + crop_width > full_width || crop_y + crop_height > full_height) {
    throw std::out_of_range("radial_mask: crop outside the full image");
  }
  return to_image(radial_mask_tensor(full_width, full_height, crop_x, crop_y, crop_width, crop_height));
}

RefinePathImpl::RefinePathImpl(int in_channels, int base_channels, int refine_blocks, int kernel_size)
    : kernel_size_(kernel_size) {
  const int c = base_channels;
  enc1_ = register_module("enc1", conv3x3(in_channels, c));
  enc2_ = register_module("enc2", conv3x3(c, 2 * c, 2));
  enc3_ = register_module("enc3", conv3x3(2 * c, 2 * c, 2));
  enc4_ = register_module("enc4", conv3x3(2 * c, 4 * c, 2));
  res_blocks_ = register_module("res_blocks", torch::nn::ModuleList());
  for (int i = 0; i < refine_blocks; ++i) {
    res_blocks_->push_back(conv3x3(4 * c, 4 * c));
    res_blocks_->push_back(conv3x3(4 * c, 4 * c));
  }
  dec3_ = register_module("dec3", conv3x3(4 * c + 2 * c, 2 * c));
  dec2_ = register_module("dec2", conv3x3(2 * c + 2 * c, c));
  dec1_ = register_module("dec1", conv3x3(c + c, c));
  const int head_out = kernel_size * kernel_size + 3;
  const int head_in[4] = {4 * c, 2 * c, c, c};
  for (int s = 0; s < 4; ++s) {
    heads_[static_cast<std::size_t>(s)] = register_module("head" + std::to_string(s), conv3x3(head_in[s], head_out));
    // Heads start near zero so every scale begins as an identity filter.
    scale_parameters(heads_[static_cast<std::size_t>(s)], 0.1);
  }
}

std::vector<torch::Tensor> RefinePathImpl::forward(const torch::Tensor& x) {
  const int k2 = kernel_size_ * kernel_size_;
  auto e1 = torch::relu(enc1_->forward(x));
  auto e2 = torch::relu(enc2_->forward(e1));
  auto e3 = torch::relu(enc3_->forward(e2));
  auto e4 = torch::relu(enc4_->forward(e3));
  for (std::size_t i = 0; i + 1 < res_blocks_->size(); i += 2) {
    auto first = res_blocks_->ptr<torch::nn::Conv2dImpl>(i);
    auto second = res_blocks_->ptr<torch::nn::Conv2dImpl>(i + 1);
    e4 = torch::relu(e4 + second->forward(torch::relu(first->forward(e4))));
  }
  auto d3 = torch::relu(dec3_->forward(torch::cat({upsample2(e4), e3}, 1)));
  auto d2 = torch::relu(dec2_->forward(torch::cat({upsample2(d3), e2}, 1)));
  auto d1 = torch::relu(dec1_->forward(torch::cat({upsample2(d2), e1}, 1)));

  const auto image = x.slice(1, 0, 3);
  auto identity = torch::zeros({1, k2, 1, 1}, x.options());
  identity.index_put_({0, k2 / 2, 0, 0}, 1.0);

  const torch::Tensor features[4] = {e4, d3, d2, d1};
  std::vector<torch::Tensor> refined;
  for (int s = 0; s < 4; ++s) {
    const auto head = heads_[static_cast<std::size_t>(s)]->forward(features[s]);
    const auto kernels = head.slice(1, 0, k2) + identity;
    const auto residual = head.slice(1, k2, k2 + 3);
    const auto base = downsample(image, 8 >> s);
    refined.push_back(dynamic_filter(base, kernels, kernel_size_) + residual);
  }
  return refined;
}

AsppBlockImpl::AsppBlockImpl(int in_channels, const std::vector<int>& rates, const std::vector<int>& channels) {
  int in = in_channels;
  for (std::size_t stage = 0; stage < channels.size(); ++stage) {
    auto list = register_module("stage" + std::to_string(stage), torch::nn::ModuleList());
    for (int r : rates) list->push_back(conv3x3(in, channels[stage], 1, r));
    branches_.push_back(list);
    auto proj = register_module("proj" + std::to_string(stage),
                                conv1x1(channels[stage] * static_cast<int>(rates.size()), channels[stage]));
    projections_.push_back(proj);
    in = channels[stage];
  }
  // Final stage starts small; the residual path carries the coarser mask.
  scale_parameters(projections_.back(), 0.1);
}

torch::Tensor AsppBlockImpl::forward(const torch::Tensor& x) {
  torch::Tensor h = x;
  for (std::size_t stage = 0; stage < branches_.size(); ++stage) {
    std::vector<torch::Tensor> outs;
    for (const auto& m : *branches_[stage]) outs.push_back(m->as<torch::nn::Conv2dImpl>()->forward(h));
    h = projections_[stage]->forward(torch::relu(torch::cat(outs, 1)));
    if (stage + 1 < branches_.size()) h = torch::relu(h);
  }
  return h;
}

void AsppBlockImpl::set_output_bias(double w_logit, double uw_logit) {
  torch::NoGradGuard guard;
  auto& bias = projections_.back()->bias;
  bias.index_put_({0}, w_logit);
  bias.index_put_({1}, uw_logit);
}

DetailFusionNetImpl::DetailFusionNetImpl(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  torch::manual_seed(config_.seed);
  if (config_.variant != Variant::uw_only) {
    w_path_ = register_module("w_path", RefinePath(config_.w_input_channels(), config_.base_channels,
                                                   config_.refine_blocks, config_.kernel_size));
  }
  if (config_.variant != Variant::w_only) {
    uw_path_ = register_module("uw_path", RefinePath(config_.uw_input_channels(), config_.base_channels,
                                                     config_.refine_blocks, config_.kernel_size));
  }
  if (config_.variant == Variant::full) {
    for (int s = 0; s < 4; ++s) {
      auto block = register_module("fusion" + std::to_string(s),
                                   AsppBlock(config_.fusion_input_channels(s),
                                             config_.aspp[static_cast<std::size_t>(s)].rates,
                                             config_.aspp_channels(s)));
      fusion_.push_back(block);
    }
    // Untrained model leans on W: softmax([ln 4, 0]) = (0.8, 0.2).
    fusion_.front()->set_output_bias(std::log(4.0), 0.0);
  }
  // Channels-last convolutions are markedly faster on CPU, most of all in backward.
  torch::NoGradGuard no_grad;
  for (auto& p : parameters()) {
    if (p.dim() == 4) p.set_data(p.contiguous(at::MemoryFormat::ChannelsLast));
  }
}

torch::Tensor DetailFusionNetImpl::w_path_input(const NetInput& in) const {
  const double s = config_.defocus_scale_px;
  std::vector<torch::Tensor> parts{in.w_image, in.ref_defocus / s, in.tgt_defocus / s};
  if (config_.use_radial_mask) parts.push_back(in.radial);
  return torch::cat(parts, 1).contiguous(at::MemoryFormat::ChannelsLast);
}

torch::Tensor DetailFusionNetImpl::uw_path_input(const NetInput& in) const {
  const double s = config_.defocus_scale_px;
  std::vector<torch::Tensor> parts{in.uw_warped};
  if (config_.use_occlusion_input) parts.push_back(in.occlusion);
  parts.push_back(in.tgt_defocus / s);
  if (config_.use_radial_mask) parts.push_back(in.radial);
  return torch::cat(parts, 1).contiguous(at::MemoryFormat::ChannelsLast);
}

MultiScaleOutput DetailFusionNetImpl::forward(const NetInput& input) {
  input.validate();
  MultiScaleOutput out;
  if (config_.variant == Variant::full) {
    out.refined_w = w_path_->forward(w_path_input(input));
    out.refined_uw = uw_path_->forward(uw_path_input(input));
  } else if (config_.variant == Variant::w_only) {
    out.refined_w = w_path_->forward(w_path_input(input));
    for (const auto& t : out.refined_w) out.refined_uw.push_back(torch::zeros_like(t));
  } else {
    out.refined_uw = uw_path_->forward(uw_path_input(input));
    for (const auto& t : out.refined_uw) out.refined_w.push_back(torch::zeros_like(t));
  }

  torch::Tensor prev_logits;
  for (int s = 0; s < 4; ++s) {
    const auto& rw = out.refined_w[static_cast<std::size_t>(s)];
    const auto& ruw = out.refined_uw[static_cast<std::size_t>(s)];
    torch::Tensor mask;
    if (config_.variant == Variant::full) {
      const int factor = 8 >> s;
      std::vector<torch::Tensor> parts{rw, ruw};
      if (config_.use_occlusion_input) parts.push_back(downsample(input.occlusion, factor));
      parts.push_back(downsample(input.tgt_defocus, factor) / config_.defocus_scale_px);
      if (config_.use_radial_mask) parts.push_back(downsample(input.radial, factor));
      torch::Tensor logits;
      if (s == 0) {
        logits = fusion_[0]->forward(torch::cat(parts, 1));
      } else {
        const auto up_logits = upsample2(prev_logits);
        parts.push_back(torch::softmax(up_logits, 1));
        logits = fusion_[static_cast<std::size_t>(s)]->forward(torch::cat(parts, 1)) + up_logits;
      }
      prev_logits = logits;
      mask = torch::softmax(logits, 1);
    } else {
      const auto ones = torch::ones_like(rw.slice(1, 0, 1));
      const auto zeros = torch::zeros_like(ones);
      mask = config_.variant == Variant::w_only ? torch::cat({ones, zeros}, 1) : torch::cat({zeros, ones}, 1);
    }
    out.masks.push_back(mask);
    out.blended.push_back(mask.slice(1, 0, 1) * rw + mask.slice(1, 1, 2) * ruw);
  }
  return out;
}

DetailFusionNet build_model(const ModelConfig& config) { return DetailFusionNet(config); }

int64_t parameter_count(const DetailFusionNet& model) {
  int64_t n = 0;
  for (const auto& p : model->parameters()) n += p.numel();
  return n;
}

Intermediates inspect(DetailFusionNet& model, const NetInput& input) {
  if (input.batch() != 1) throw std::invalid_argument("inspect: expects a single-sample batch");
  torch::NoGradGuard guard;
  const auto out = model->forward(input);
  Intermediates parts;
  parts.refined_w = to_image(out.refined_w.back());
  parts.refined_uw = to_image(out.refined_uw.back());
  parts.mask_w = to_image(out.masks.back().slice(1, 0, 1));
  parts.mask_uw = to_image(out.masks.back().slice(1, 1, 2));
  return parts;
}

Image intermediates_panel(const Intermediates& parts) {
  const int w = parts.refined_w.width();
  const int h = parts.refined_w.height();
  Image panel(4 * w, h, 3);
  const Image* tiles[4] = {&parts.refined_w, &parts.refined_uw, &parts.mask_w, &parts.mask_uw};
  for (int t = 0; t < 4; ++t) {
    for (int c = 0; c < 3; ++c) {
      const int src_c = tiles[t]->channels() == 1 ? 0 : c;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) panel.at(c, y, t * w + x) = std::clamp(tiles[t]->at(src_c, y, x), 0.0f, 1.0f);
      }
    }
  }
  return panel;
}

}  // namespace dualfocus::dfnet
