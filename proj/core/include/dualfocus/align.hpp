#pragma once

#include "dualfocus/image.hpp"

namespace dualfocus::align {

/// Backward displacement field at target resolution: target pixel p reads
/// the source at p + (dx, dy). `validity` is a 1-channel confidence in
/// [0,1]; values <= 0.5 mean the displacement is not usable.
struct WarpField {
  Image displacement;  // 2 channels: dx, dy
  Image validity;      // 1 channel

  int width() const { return displacement.width(); }
  int height() const { return displacement.height(); }
  bool valid_at(int y, int x) const { return validity.at(0, y, x) > 0.5f; }

  static WarpField zeros(int width, int height);
  static WarpField constant(int width, int height, float dx, float dy);
};

struct WarpResult {
  Image image;
  Image valid;  // 1 where the sample came from inside the source and the field was valid
};

/// Bilinear backward warp of `source` into the field's grid. Samples that
/// fall outside the source or where the field is invalid are 0 and flagged.
WarpResult warp(const Image& source, const WarpField& field);

struct BlockMatchConfig {
  int levels = 4;
  int block = 16;
  int search = 4;
  /// Blocks whose luminance standard deviation is below this are treated as
  /// textureless.
  double min_texture_std = 0.01;
  /// Minimum zero-mean normalized cross correlation for a confident match.
  double min_correlation = 0.6;
};

/// Coarse-to-fine block matching. The result maps each pixel of `target`
/// to its position in `source` (use with warp(source, field)).
WarpField estimate_warp(const Image& source, const Image& target, const BlockMatchConfig& config = {});

/// Forward-backward consistency. `forward` lives on the target grid and
/// points into the source; `backward` lives on the source grid and points
/// back. A pixel is occluded when the round trip misses by more than
/// `threshold_px` or either field is invalid on the path.
Image estimate_occlusion(const WarpField& forward, const WarpField& backward, double threshold_px = 1.5);

}  // namespace dualfocus::align
