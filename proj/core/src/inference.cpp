#include "dualfocus/inference.hpp"

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dualfocus/tensor_bridge.hpp"

namespace dualfocus::inference {
namespace F = torch::nn::functional;

void Planes::validate() const {
  if (w.channels() != 3 || uw_warped.channels() != 3) throw std::invalid_argument("planes: images must be RGB");
  if (occlusion.channels() != 1 || ref_defocus.channels() != 1 || tgt_defocus.channels() != 1) {
    throw std::invalid_argument("planes: occlusion and defocus planes must be single channel");
  }
  require_same_dims(w, uw_warped, "planes uw");
  require_same_dims(w, occlusion, "planes occlusion");
  require_same_dims(w, ref_defocus, "planes ref_defocus");
  require_same_dims(w, tgt_defocus, "planes tgt_defocus");
}

Planes Planes::crop(int x0, int y0, int width, int height) const {
  return {w.crop(x0, y0, width, height), uw_warped.crop(x0, y0, width, height), occlusion.crop(x0, y0, width, height),
          ref_defocus.crop(x0, y0, width, height), tgt_defocus.crop(x0, y0, width, height)};
}

void TileConfig::validate() const {
  if (max_tile < 8 || max_tile % 8 != 0) throw std::invalid_argument("tiles: max_tile must be a multiple of 8");
  if (overlap < 0 || overlap >= max_tile / 2) throw std::invalid_argument("tiles: overlap must be in [0, max_tile/2)");
}

std::vector<int> tile_starts(int length, int tile, int overlap) {
  if (tile >= length) return {0};
  // Fewest tiles whose neighbours share at least `overlap` pixels, spread evenly.
  const int stride = tile - overlap;
  const int n = (length - overlap + stride - 1) / stride;
  std::vector<int> starts;
  for (int i = 0; i < n; ++i) {
    starts.push_back(static_cast<int>(std::floor(static_cast<double>(i) * (length - tile) / (n - 1))));
  }
  return starts;
}

Image run_tiled(const Planes& planes, const TileConfig& config, const TileFn& fn) {
  planes.validate();
  config.validate();
  const int w = planes.width();
  const int h = planes.height();
  if (w <= config.max_tile && h <= config.max_tile) return fn(planes, 0, 0);

  const int tw = std::min(config.max_tile, w);
  const int th = std::min(config.max_tile, h);
  const auto xs = tile_starts(w, tw, config.overlap);
  const auto ys = tile_starts(h, th, config.overlap);

  // Ramp weight for position i inside a tile spanning [start, start + size).
  auto ramp = [&](int i, int start, int size, int length) {
    double weight = 1.0;
    if (start > 0 && config.overlap > 0) weight = std::min(weight, (i + 0.5) / config.overlap);
    if (start + size < length && config.overlap > 0) weight = std::min(weight, (size - i - 0.5) / config.overlap);
    return weight;
  };

  Image acc;
  std::vector<double> sums;
  std::vector<double> weights(static_cast<std::size_t>(w) * h, 0.0);
  for (int y0 : ys) {
    for (int x0 : xs) {
      const Image out = fn(planes.crop(x0, y0, tw, th), x0, y0);
      if (out.width() != tw || out.height() != th) throw std::runtime_error("run_tiled: tile output has wrong size");
      if (acc.empty()) {
        acc = Image(w, h, out.channels());
        sums.assign(acc.size(), 0.0);
      }
      for (int y = 0; y < th; ++y) {
        const double wy = ramp(y, y0, th, h);
        for (int x = 0; x < tw; ++x) {
          const double wt = wy * ramp(x, x0, tw, w);
          const std::size_t p = static_cast<std::size_t>(y0 + y) * w + (x0 + x);
          weights[p] += wt;
          for (int c = 0; c < out.channels(); ++c) sums[c * acc.pixel_count() + p] += wt * out.at(c, y, x);
        }
      }
    }
  }
  for (int c = 0; c < acc.channels(); ++c) {
    for (std::size_t p = 0; p < acc.pixel_count(); ++p) {
      acc.plane(c)[p] = static_cast<float>(sums[c * acc.pixel_count() + p] / weights[p]);
    }
  }
  return acc;
}

dfnet::NetInput make_input(const Planes& tile, int x0, int y0, int full_width, int full_height) {
  const int w = tile.width();
  const int h = tile.height();
  const int pw = (w + 7) / 8 * 8;
  const int ph = (h + 7) / 8 * 8;
  auto prep = [&](const Image& img) {
    auto t = to_tensor(img).unsqueeze(0);
    if (pw != w || ph != h) t = F::pad(t, F::PadFuncOptions({0, pw - w, 0, ph - h}).mode(torch::kReplicate));
    return t;
  };
  return {prep(tile.w),
          prep(tile.uw_warped),
          prep(tile.occlusion),
          prep(tile.ref_defocus),
          prep(tile.tgt_defocus),
          dfnet::radial_mask_tensor(full_width, full_height, x0, y0, pw, ph).unsqueeze(0)};
}

Image predict(dfnet::DetailFusionNet& model, const Planes& planes, const TileConfig& config) {
  const int full_w = planes.width();
  const int full_h = planes.height();
  auto run = [&](const Planes& tile, int x0, int y0) {
    torch::NoGradGuard guard;
    const auto input = make_input(tile, x0, y0, full_w, full_h);
    auto out = model->forward(input).blended.back();
    out = out.slice(2, 0, tile.height()).slice(3, 0, tile.width()).clamp(0.0, 1.0);
    return to_image(out);
  };
  return run_tiled(planes, config, run);
}

}  // namespace dualfocus::inference
