#include "dualfocus/image.hpp"

#include <algorithm>
#include <cmath>

namespace dualfocus {

Image::Image(int width, int height, int channels, float fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 0 || height < 0 || channels < 0) {
    throw std::invalid_argument("Image: negative dimension");
  }
  data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

float Image::at_clamped(int c, int y, int x) const {
  x = std::clamp(x, 0, width_ - 1);
  y = std::clamp(y, 0, height_ - 1);
  return data_[index(c, y, x)];
}

float Image::sample_bilinear(int c, double y, double x) const {
  x = std::clamp(x, 0.0, static_cast<double>(width_ - 1));
  y = std::clamp(y, 0.0, static_cast<double>(height_ - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, width_ - 1);
  const int y1 = std::min(y0 + 1, height_ - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = (1.0 - fx) * at(c, y0, x0) + fx * at(c, y0, x1);
  const double bottom = (1.0 - fx) * at(c, y1, x0) + fx * at(c, y1, x1);
  return static_cast<float>((1.0 - fy) * top + fy * bottom);
}

std::span<float> Image::plane(int c) {
  return std::span<float>(data_).subspan(static_cast<std::size_t>(c) * pixel_count(), pixel_count());
}

std::span<const float> Image::plane(int c) const {
  return std::span<const float>(data_).subspan(static_cast<std::size_t>(c) * pixel_count(),
                                               pixel_count());
}

Image Image::channel(int c) const {
  Image out(width_, height_, 1);
  std::ranges::copy(plane(c), out.data().begin());
  return out;
}

Image Image::crop(int x0, int y0, int width, int height) const {
  if (x0 < 0 || y0 < 0 || width <= 0 || height <= 0 || x0 + width > width_ ||
      y0 + height > height_) {
    throw std::out_of_range("Image::crop: window outside image");
  }
  Image out(width, height, channels_);
  for (int c = 0; c < channels_; ++c) {
    for (int y = 0; y < height; ++y) {
      const float* src = &data_[index(c, y0 + y, x0)];
      std::copy(src, src + width, &out.at(c, y, 0));
    }
  }
  return out;
}

void Image::fill(float value) { std::ranges::fill(data_, value); }

void Image::clamp(float lo, float hi) {
  for (float& v : data_) v = std::clamp(v, lo, hi);
}

void require_same_dims(const Image& a, const Image& b, const std::string& what) {
  if (!a.same_dims(b)) {
    throw std::invalid_argument(what + ": dimension mismatch (" + std::to_string(a.width()) + "x" +
                                std::to_string(a.height()) + " vs " + std::to_string(b.width()) +
                                "x" + std::to_string(b.height()) + ")");
  }
}

Image luminance(const Image& rgb) {
  if (rgb.channels() == 1) return rgb;
  if (rgb.channels() != 3) throw std::invalid_argument("luminance: expected 1 or 3 channels");
  Image out(rgb.width(), rgb.height(), 1);
  auto r = rgb.plane(0);
  auto g = rgb.plane(1);
  auto b = rgb.plane(2);
  auto y = out.plane(0);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = 0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i];
  return out;
}

Image downsample_area(const Image& img, int factor) {
  if (factor == 1) return img;
  if (factor < 1 || img.width() % factor != 0 || img.height() % factor != 0) {
    throw std::invalid_argument("downsample_area: dims not divisible by factor");
  }
  Image out(img.width() / factor, img.height() / factor, img.channels());
  const double norm = 1.0 / (factor * factor);
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) {
        double sum = 0.0;
        for (int dy = 0; dy < factor; ++dy) {
          for (int dx = 0; dx < factor; ++dx) sum += img.at(c, y * factor + dy, x * factor + dx);
        }
        out.at(c, y, x) = static_cast<float>(sum * norm);
      }
    }
  }
  return out;
}

Image concat_channels(std::span<const Image> parts) {
  if (parts.empty()) return {};
  int channels = 0;
  for (const auto& p : parts) {
    require_same_dims(parts.front(), p, "concat_channels");
    channels += p.channels();
  }
  Image out(parts.front().width(), parts.front().height(), channels);
  auto dst = out.data().begin();
  for (const auto& p : parts) dst = std::ranges::copy(p.data(), dst).out;
  return out;
}

}  // namespace dualfocus
