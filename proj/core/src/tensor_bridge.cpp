#include "dualfocus/tensor_bridge.hpp"

#include <torch/torch.h>

#include <algorithm>
#include <stdexcept>

namespace dualfocus {

torch::Tensor to_tensor(const Image& img) {
  auto t = torch::empty({img.channels(), img.height(), img.width()}, torch::kFloat32);
  std::ranges::copy(img.data(), t.data_ptr<float>());
  return t;
}

Image to_image(const torch::Tensor& t) {
  torch::Tensor src = t.detach();
  if (src.dim() == 4) {
    if (src.size(0) != 1) throw std::invalid_argument("to_image: batch dimension must be 1");
    src = src.squeeze(0);
  }
  if (src.dim() != 3) throw std::invalid_argument("to_image: expected [C,H,W]");
  src = src.to(torch::kCPU, torch::kFloat32).contiguous();
  Image img(static_cast<int>(src.size(2)), static_cast<int>(src.size(1)), static_cast<int>(src.size(0)));
  const float* p = src.data_ptr<float>();
  std::copy(p, p + img.size(), img.data().begin());
  return img;
}

}  // namespace dualfocus
