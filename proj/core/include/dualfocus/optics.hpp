#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "dualfocus/image.hpp"

namespace dualfocus::optics {

/// Thin-lens camera. Aperture is a diameter in mm; the f-number is derived
/// for display only.
struct CameraIntrinsics {
  double focal_length_mm = 6.8;
  double aperture_diameter_mm = 4.0;
  double pixel_pitch_mm_per_px = 0.006;
  int width_px = 256;
  int height_px = 256;
  std::array<double, 2> principal_point_px{127.5, 127.5};

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;

  double focal_length_px() const { return focal_length_mm / pixel_pitch_mm_per_px; }
  double f_number() const;

  /// Same camera with the principal point at the image center.
  static CameraIntrinsics centered(double focal_length_mm, double aperture_diameter_mm,
                                   double pixel_pitch_mm_per_px, int width_px, int height_px);
};

struct LensState {
  double focus_distance_mm = 1000.0;
};

/// Metric depth per pixel (1 channel). Non-positive or non-finite values are
/// treated as missing.
struct DepthMap {
  Image mm;

  int width() const { return mm.width(); }
  int height() const { return mm.height(); }
  static DepthMap constant(int width, int height, double depth_mm);
};

/// Absolute circle-of-confusion radius per pixel (1 channel, px) plus a
/// validity mask that is 0 where the depth was missing.
struct DefocusMap {
  Image radius_px;
  std::vector<std::uint8_t> valid;

  int width() const { return radius_px.width(); }
  int height() const { return radius_px.height(); }
  static DefocusMap zeros(int width, int height);
};

/// Sensor-side circle-of-confusion radius in mm for a point at `depth_mm`.
/// Throws std::domain_error when depth_mm <= 0 or the focus distance does
/// not exceed the focal length.
double coc_radius_mm(const CameraIntrinsics& cam, const LensState& lens, double depth_mm);

/// Per-pixel CoC radius in pixels. Missing depth maps to 0 and is flagged
/// invalid. Throws std::invalid_argument on a dimension mismatch.
DefocusMap defocus_map(const CameraIntrinsics& cam, const LensState& lens, const DepthMap& depth);

/// Focus distances uniformly spaced in diopters between near and far,
/// ascending in distance. `focal_length_mm` is the lower bound for `near_mm`.
std::vector<LensState> focus_sweep(double near_mm, double far_mm, int n_slices,
                                   double focal_length_mm = 0.0);

/// Camera + lens metadata in the shared JSON schema.
nlohmann::json to_json(const CameraIntrinsics& cam, const LensState& lens);
nlohmann::json to_json(const CameraIntrinsics& cam);
CameraIntrinsics camera_from_json(const nlohmann::json& j);
LensState lens_from_json(const nlohmann::json& j);

}  // namespace dualfocus::optics
