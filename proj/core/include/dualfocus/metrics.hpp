#pragma once

#include <limits>

#include "dualfocus/image.hpp"

namespace dualfocus::metrics {

/// Gaussian-window SSIM constants shared by the metric and the training loss.
struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

/// 10*log10(1/MSE). Identical inputs return +infinity.
double psnr(const Image& a, const Image& b);
double mse(const Image& a, const Image& b);

/// Mean SSIM over all pixels and channels; windows use clamp-to-edge padding.
double ssim(const Image& a, const Image& b, const SsimParams& params = {});

inline bool is_perfect_psnr(double value) { return value == std::numeric_limits<double>::infinity(); }

struct AlignSearch {
  double scale_min = 0.95;
  double scale_max = 1.05;
  int scale_steps = 21;
  double translation_range_px = 8.0;
  int translation_steps = 17;
};

struct AlignParams {
  double scale = 1.0;
  double tx = 0.0;
  double ty = 0.0;
  /// MSE over the shared interior window for the chosen and identity parameters.
  double mse = 0.0;
  double identity_mse = 0.0;
};

/// Resamples `img` scaled by `scale` about its center and shifted by (tx, ty).
Image apply_alignment(const Image& img, double scale, double tx, double ty);

struct AlignResult {
  AlignParams params;
  Image aligned;
};

/// Exhaustive grid search over scale x tx x ty minimizing MSE against `ref`
/// on an interior window every candidate covers. Ties keep the candidate
/// closest to identity.
AlignResult fov_align(const Image& img, const Image& ref, const AlignSearch& search = {});

}  // namespace dualfocus::metrics
