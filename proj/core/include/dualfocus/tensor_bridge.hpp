#pragma once

#include <torch/types.h>

#include "dualfocus/image.hpp"

namespace dualfocus {

/// [C,H,W] float32 tensor holding a copy of the image.
torch::Tensor to_tensor(const Image& img);

/// Copies a [C,H,W] or [1,C,H,W] tensor (any floating dtype) into an Image.
Image to_image(const torch::Tensor& t);

}  // namespace dualfocus
