#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dualfocus {

/// Channel-planar float image (C x H x W, row-major inside each plane).
///
/// The planar layout matches the NCHW tensors used by the network, so
/// conversion in either direction is a single copy.
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, float fill = 0.0f);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  float at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  /// Clamp-to-edge read.
  float at_clamped(int c, int y, int x) const;

  /// Bilinear sample at continuous coordinates; coordinates are clamped to the
  /// image rectangle.
  float sample_bilinear(int c, double y, double x) const;

  std::span<float> plane(int c);
  std::span<const float> plane(int c) const;

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  bool same_shape(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }
  bool same_dims(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

  /// Extracts a single channel as a one-channel image.
  Image channel(int c) const;

  /// Copies a rectangular window. The window must lie inside the image.
  Image crop(int x0, int y0, int width, int height) const;

  void fill(float value);
  void clamp(float lo = 0.0f, float hi = 1.0f);

  friend bool operator==(const Image& a, const Image& b) {
    return a.same_shape(b) && a.data_ == b.data_;
  }

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

/// Throws std::invalid_argument naming `what` unless both images share width and height.
void require_same_dims(const Image& a, const Image& b, const std::string& what);

/// Rec. 601 luma of a 3-channel image (1-channel passes through).
Image luminance(const Image& rgb);

/// Box-filter downsample by an integer factor; dims must be divisible by it.
Image downsample_area(const Image& img, int factor);

/// Stacks single-channel or multi-channel images along the channel axis.
Image concat_channels(std::span<const Image> parts);

}  // namespace dualfocus
