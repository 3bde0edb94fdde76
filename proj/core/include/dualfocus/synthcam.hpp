#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "dualfocus/align.hpp"
#include "dualfocus/image.hpp"
#include "dualfocus/optics.hpp"

namespace dualfocus::synthcam {

using optics::CameraIntrinsics;
using optics::DefocusMap;
using optics::DepthMap;
using optics::LensState;

enum class TextureKind { checker, noise, stripes, mixed };

TextureKind texture_kind_from_string(const std::string& name);
std::string to_string(TextureKind kind);

struct SceneConfig {
  int n_layers = 3;
  TextureKind texture_kind = TextureKind::mixed;
  double near_mm = 500.0;
  double far_mm = 3000.0;
  /// Supersampling factor per axis for color (depth is sampled at pixel centers).
  int supersample = 2;

  void validate() const;
};

/// Procedural texture defined in the layer's world plane (mm).
struct Texture {
  TextureKind kind = TextureKind::checker;
  std::array<float, 3> color_a{0.2f, 0.2f, 0.2f};
  std::array<float, 3> color_b{0.8f, 0.8f, 0.8f};
  double period_mm = 1.0;
  double angle_rad = 0.0;
  double phase = 0.0;
  std::uint64_t noise_seed = 0;
  /// Amplitude of a slow linear brightness ramp layered on top.
  double gradient_gain = 0.0;
  double gradient_angle_rad = 0.0;
  double gradient_extent_mm = 1.0;

  std::array<float, 3> eval(double x_mm, double y_mm) const;
};

struct Shape {
  enum class Kind { disc, rectangle };
  Kind kind = Kind::disc;
  double cx_mm = 0.0;
  double cy_mm = 0.0;
  double half_w_mm = 1.0;
  double half_h_mm = 1.0;
  double angle_rad = 0.0;

  bool contains(double x_mm, double y_mm) const;
};

/// A fronto-parallel textured plane. A layer without shapes is an infinite
/// background.
struct Layer {
  double depth_mm = 1000.0;
  std::vector<Shape> shapes;
  Texture texture;

  bool covers(double x_mm, double y_mm) const;
};

/// Layers sorted front to back (ascending depth); the last layer is the background.
struct SceneDescriptor {
  std::vector<Layer> layers;
};

struct RayHit {
  std::array<float, 3> rgb{};
  double depth_mm = 0.0;
  int layer = -1;
};

/// Casts the ray through pixel (u, v) of a camera whose center sits at
/// (center_x_mm, 0, 0) in the reference frame, looking down +Z.
RayHit trace(const SceneDescriptor& scene, const CameraIntrinsics& cam, double center_x_mm, double u, double v);

struct SceneRGBD {
  Image aif;  // 3 channels in [0,1]
  DepthMap depth;
  std::uint64_t seed = 0;
  SceneDescriptor descriptor;
};

/// Renders the descriptor's all-in-focus color and exact depth from a viewpoint.
SceneRGBD render_view(const SceneDescriptor& scene, const CameraIntrinsics& cam, double center_x_mm,
                      int supersample, std::uint64_t seed = 0);

/// Deterministic procedural scene framed for `view`.
SceneRGBD generate_scene(std::uint64_t seed, const SceneConfig& config, const CameraIntrinsics& view);

/// Normalized anti-aliased disc kernel, (2e+1)^2 taps with e = ceil(radius + 0.5).
/// Row-major, side length returned in `side`.
std::vector<double> disc_kernel(double radius_px, int& side);

struct RenderConfig {
  int slabs = 16;
};

struct Rendered {
  Image image;
  DefocusMap defocus;
};

/// Layered thin-lens rendering: depth is split into slabs uniform in
/// diopters, each slab's premultiplied color+alpha is blurred with a disc of
/// the slab's mean defocus radius (clamp-to-edge), slabs are composited
/// back to front and the result is normalized by accumulated coverage.
Rendered render_defocused(const SceneRGBD& scene, const CameraIntrinsics& cam, const LensState& lens,
                          const RenderConfig& config = {});

/// Affine color mismatch applied to the ultra-wide camera: out = M * rgb + offset.
struct ColorTransform {
  std::array<double, 9> matrix{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::array<double, 3> offset{0, 0, 0};

  static ColorTransform identity() { return {}; }
  /// Mild white-balance shift: per-channel gains around a warm tint, jittered by
  /// `jitter` (uniform in [-jitter, jitter]) from `seed`.
  static ColorTransform white_balance(double jitter, std::uint64_t seed);

  double determinant() const;
  Image apply(const Image& rgb) const;
};

struct CameraRig {
  CameraIntrinsics w_cam;
  CameraIntrinsics uw_cam;
  LensState uw_lens;
  double baseline_mm = 4.0;
  ColorTransform color;

  /// Checks: both cameras valid, same pixel grid, UW aperture below W's,
  /// UW field of view covering W's, invertible color transform, finite
  /// non-negative baseline.
  void validate() const;

  static CameraRig default_rig(int width, int height);
};

nlohmann::json to_json(const CameraRig& rig);
CameraRig rig_from_json(const nlohmann::json& j);

struct DualCapture {
  Image w_slice;
  Image uw_frame;            // UW viewpoint, after color transform
  align::WarpField true_warp;     // W grid -> UW pixel
  align::WarpField reverse_warp;  // UW grid -> W pixel
  Image occlusion_mask;      // 1 = occluded or out of UW view
  LensState lens_w;
  DefocusMap defocus_w;
  DefocusMap defocus_uw;     // on the W grid
};

/// Ultra-wide half of a capture. Independent of the W focus distance.
struct UwCapture {
  Image uw_frame;
  align::WarpField true_warp;
  align::WarpField reverse_warp;
  Image occlusion_mask;
  DefocusMap defocus_uw;
};

UwCapture render_uw_capture(const SceneRGBD& scene, const CameraRig& rig, const RenderConfig& config = {});

DualCapture render_dual_capture(const SceneRGBD& scene, const CameraRig& rig, const LensState& lens_w,
                                const RenderConfig& config = {});

struct FocusStack {
  std::vector<DualCapture> slices;  // ascending focus distance
  CameraRig rig;
  Image aif;
  DepthMap depth;
};

struct StackConfig {
  int n_slices = 10;
  double near_mm = 500.0;
  double far_mm = 3000.0;
};

/// One capture per focus-sweep slice; the fixed-focus UW frame is rendered once.
FocusStack generate_stack(const SceneRGBD& scene, const CameraRig& rig, const StackConfig& config,
                          const RenderConfig& render = {});

struct MergeConfig {
  int window = 7;
  /// Exponent applied to local sharpness before normalizing weights.
  double sharpness_power = 8.0;
};

/// Sharpness-weighted focus-stack merge (local Laplacian energy).
Image focus_stack_merge(std::span<const Image> slices, const MergeConfig& config = {});
Image focus_stack_merge(const FocusStack& stack, const MergeConfig& config = {});

}  // namespace dualfocus::synthcam
