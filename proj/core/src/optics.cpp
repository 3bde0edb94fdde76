#include "dualfocus/optics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace dualfocus::optics {

void CameraIntrinsics::validate() const {
  if (!(focal_length_mm > 0.0)) throw std::invalid_argument("camera: focal_length_mm must be > 0");
  if (!(aperture_diameter_mm >= 0.0)) {
    throw std::invalid_argument("camera: aperture_diameter_mm must be >= 0");
  }
  if (!(pixel_pitch_mm_per_px > 0.0)) {
    throw std::invalid_argument("camera: pixel_pitch_mm_per_px must be > 0");
  }
  if (width_px <= 0 || height_px <= 0) throw std::invalid_argument("camera: image size must be positive");
  const auto [cx, cy] = principal_point_px;
  if (!(cx >= 0.0 && cx <= width_px - 1.0 && cy >= 0.0 && cy <= height_px - 1.0)) {
    throw std::invalid_argument("camera: principal point outside image");
  }
}

double CameraIntrinsics::f_number() const {
  if (aperture_diameter_mm == 0.0) return std::numeric_limits<double>::infinity();
  return focal_length_mm / aperture_diameter_mm;
}

CameraIntrinsics CameraIntrinsics::centered(double focal_length_mm, double aperture_diameter_mm,
                                            double pixel_pitch_mm_per_px, int width_px, int height_px) {
  CameraIntrinsics cam;
  cam.focal_length_mm = focal_length_mm;
  cam.aperture_diameter_mm = aperture_diameter_mm;
  cam.pixel_pitch_mm_per_px = pixel_pitch_mm_per_px;
  cam.width_px = width_px;
  cam.height_px = height_px;
  cam.principal_point_px = {(width_px - 1) / 2.0, (height_px - 1) / 2.0};
  return cam;
}

DepthMap DepthMap::constant(int width, int height, double depth_mm) {
  return DepthMap{Image(width, height, 1, static_cast<float>(depth_mm))};
}

DefocusMap DefocusMap::zeros(int width, int height) {
  return DefocusMap{Image(width, height, 1, 0.0f),
                    std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, 1)};
}

double coc_radius_mm(const CameraIntrinsics& cam, const LensState& lens, double depth_mm) {
  if (!(depth_mm > 0.0)) throw std::domain_error("coc_radius_mm: depth must be > 0");
  const double s1 = lens.focus_distance_mm;
  const double f = cam.focal_length_mm;
  if (!(s1 > f)) throw std::domain_error("coc_radius_mm: focus distance must exceed focal length");
  return cam.aperture_diameter_mm * (std::abs(depth_mm - s1) / depth_mm) * (f / (s1 - f));
}

DefocusMap defocus_map(const CameraIntrinsics& cam, const LensState& lens, const DepthMap& depth) {
  if (depth.width() != cam.width_px || depth.height() != cam.height_px) {
    throw std::invalid_argument("defocus_map: depth dims " + std::to_string(depth.width()) + "x" +
                                std::to_string(depth.height()) + " do not match camera " +
                                std::to_string(cam.width_px) + "x" + std::to_string(cam.height_px));
  }
  // Validates the focus distance once, independent of the depth content.
  (void)coc_radius_mm(cam, lens, lens.focus_distance_mm);

  DefocusMap out = DefocusMap::zeros(depth.width(), depth.height());
  auto src = depth.mm.plane(0);
  auto dst = out.radius_px.plane(0);
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double z = src[i];
    if (!(z > 0.0) || !std::isfinite(z)) {
      out.valid[i] = 0;
      dst[i] = 0.0f;
      continue;
    }
    dst[i] = static_cast<float>(coc_radius_mm(cam, lens, z) / cam.pixel_pitch_mm_per_px);
  }
  return out;
}

std::vector<LensState> focus_sweep(double near_mm, double far_mm, int n_slices, double focal_length_mm) {
  if (!(near_mm > focal_length_mm) || !(far_mm > near_mm) || n_slices < 2) {
    throw std::invalid_argument("focus_sweep: need focal_length < near < far and n_slices >= 2");
  }
  const double d_near = 1.0 / near_mm;
  const double d_far = 1.0 / far_mm;
  std::vector<LensState> out(static_cast<std::size_t>(n_slices));
  // Ascending distance == descending diopters.
  for (int i = 0; i < n_slices; ++i) {
    const double t = static_cast<double>(i) / (n_slices - 1);
    const double diopter = d_near + t * (d_far - d_near);
    out[static_cast<std::size_t>(i)].focus_distance_mm = 1.0 / diopter;
  }
  out.front().focus_distance_mm = near_mm;
  out.back().focus_distance_mm = far_mm;
  return out;
}

nlohmann::json to_json(const CameraIntrinsics& cam) {
  return {{"focal_length_mm", cam.focal_length_mm},
          {"aperture_diameter_mm", cam.aperture_diameter_mm},
          {"pixel_pitch_mm_per_px", cam.pixel_pitch_mm_per_px},
          {"width_px", cam.width_px},
          {"height_px", cam.height_px},
          {"principal_point_px", {cam.principal_point_px[0], cam.principal_point_px[1]}}};
}

nlohmann::json to_json(const CameraIntrinsics& cam, const LensState& lens) {
  auto j = to_json(cam);
  j["focus_distance_mm"] = lens.focus_distance_mm;
  return j;
}

CameraIntrinsics camera_from_json(const nlohmann::json& j) {
  CameraIntrinsics cam;
  cam.focal_length_mm = j.at("focal_length_mm").get<double>();
  cam.aperture_diameter_mm = j.at("aperture_diameter_mm").get<double>();
  cam.pixel_pitch_mm_per_px = j.at("pixel_pitch_mm_per_px").get<double>();
  cam.width_px = j.at("width_px").get<int>();
  cam.height_px = j.at("height_px").get<int>();
  const auto& pp = j.at("principal_point_px");
  cam.principal_point_px = {pp.at(0).get<double>(), pp.at(1).get<double>()};
  cam.validate();
  return cam;
}

LensState lens_from_json(const nlohmann::json& j) {
  return LensState{j.at("focus_distance_mm").get<double>()};
}

}  // namespace dualfocus::optics
