#include "dualfocus/synthcam.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace dualfocus::synthcam {
namespace {

constexpr double kPi = std::numbers::pi;

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

double lattice_value(std::int64_t ix, std::int64_t iy, std::uint64_t seed) {
  const std::uint64_t h =
      mix64(seed ^ mix64(static_cast<std::uint64_t>(ix) * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(iy)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(double x, double y, std::uint64_t seed) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx);
  const auto iy = static_cast<std::int64_t>(fy);
  const double tx = smooth(x - fx);
  const double ty = smooth(y - fy);
  const double a = lattice_value(ix, iy, seed);
  const double b = lattice_value(ix + 1, iy, seed);
  const double c = lattice_value(ix, iy + 1, seed);
  const double d = lattice_value(ix + 1, iy + 1, seed);
  return (a + (b - a) * tx) * (1.0 - ty) + (c + (d - c) * tx) * ty;
}

double fractal_noise(double x, double y, std::uint64_t seed) {
  double sum = 0.0;
  double amp = 0.5;
  double norm = 0.0;
  for (int octave = 0; octave < 4; ++octave) {
    sum += amp * value_noise(x, y, seed + static_cast<std::uint64_t>(octave) * 7919);
    norm += amp;
    x *= 2.03;
    y *= 2.03;
    amp *= 0.5;
  }
  return sum / norm;
}

std::array<float, 3> random_color(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.08, 0.92);
  return {static_cast<float>(u(rng)), static_cast<float>(u(rng)), static_cast<float>(u(rng))};
}

Texture random_texture(TextureKind requested, double depth_mm, double focal_px, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Texture t;
  t.kind = requested;
  if (requested == TextureKind::mixed) {
    const int pick = std::uniform_int_distribution<int>(0, 2)(rng);
    t.kind = pick == 0 ? TextureKind::checker : (pick == 1 ? TextureKind::noise : TextureKind::stripes);
  }
  t.color_a = random_color(rng);
  t.color_b = random_color(rng);
  // Keep the two colors apart so edges carry contrast.
  double contrast = 0.0;
  for (int c = 0; c < 3; ++c) contrast += std::abs(t.color_a[c] - t.color_b[c]);
  if (contrast < 0.6) {
    for (int c = 0; c < 3; ++c) t.color_b[c] = std::clamp(1.0f - t.color_a[c], 0.05f, 0.95f);
  }
  double period_px = 0.0;
  switch (t.kind) {
    case TextureKind::checker: period_px = 6.0 + 10.0 * u01(rng); break;
    case TextureKind::stripes: period_px = 4.0 + 8.0 * u01(rng); break;
    default: period_px = 8.0 + 16.0 * u01(rng); break;
  }
  const double mm_per_px = depth_mm / focal_px;
  t.period_mm = period_px * mm_per_px;
  t.angle_rad = kPi * u01(rng);
  t.phase = u01(rng);
  t.noise_seed = rng();
  if (requested == TextureKind::mixed) {
    t.gradient_gain = 0.25 * u01(rng);
    t.gradient_angle_rad = 2.0 * kPi * u01(rng);
    t.gradient_extent_mm = 200.0 * mm_per_px;
  }
  return t;
}

// Writes one foreground layer's shapes, placed inside a horizontal band of the view.
std::vector<Shape> random_shapes(const CameraIntrinsics& view, double depth_mm, double band_lo, double band_hi,
                                 std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double mm_per_px = depth_mm / view.focal_length_px();
  const double band_w = (band_hi - band_lo) * view.width_px;
  const int count = 1 + static_cast<int>(u01(rng) * 2.0);
  std::vector<Shape> shapes;
  for (int i = 0; i < count; ++i) {
    Shape s;
    s.kind = u01(rng) < 0.5 ? Shape::Kind::disc : Shape::Kind::rectangle;
    const double u = view.width_px * (band_lo + (band_hi - band_lo) * (0.3 + 0.4 * u01(rng)));
    const double v = view.height_px * (0.2 + 0.6 * u01(rng));
    const double size_px = std::max(6.0, std::min(band_w * 0.45, view.height_px * 0.35) * (0.6 + 0.4 * u01(rng)));
    s.cx_mm = (u - view.principal_point_px[0]) * mm_per_px;
    s.cy_mm = (v - view.principal_point_px[1]) * mm_per_px;
    s.half_w_mm = size_px * mm_per_px;
    s.half_h_mm = size_px * (0.6 + 0.8 * u01(rng)) * mm_per_px;
    s.angle_rad = kPi * u01(rng);
    if (s.kind == Shape::Kind::disc) s.half_h_mm = s.half_w_mm;
    shapes.push_back(s);
  }
  return shapes;
}

}  // namespace

TextureKind texture_kind_from_string(const std::string& name) {
  if (name == "checker") return TextureKind::checker;
  if (name == "noise") return TextureKind::noise;
  if (name == "stripes") return TextureKind::stripes;
  if (name == "mixed") return TextureKind::mixed;
  throw std::invalid_argument("unknown texture kind: " + name);
}

std::string to_string(TextureKind kind) {
  switch (kind) {
    case TextureKind::checker: return "checker";
    case TextureKind::noise: return "noise";
    case TextureKind::stripes: return "stripes";
    case TextureKind::mixed: return "mixed";
  }
  return "mixed";
}

void SceneConfig::validate() const {
  if (n_layers < 1) throw std::invalid_argument("scene: n_layers must be >= 1");
  if (!(near_mm > 0.0) || !(far_mm > near_mm)) throw std::invalid_argument("scene: need 0 < near < far");
  if (supersample < 1) throw std::invalid_argument("scene: supersample must be >= 1");
}

std::array<float, 3> Texture::eval(double x_mm, double y_mm) const {
  const double ca = std::cos(angle_rad);
  const double sa = std::sin(angle_rad);
  const double s = (ca * x_mm + sa * y_mm) / period_mm + phase;
  const double t = (-sa * x_mm + ca * y_mm) / period_mm + phase;
  double mix = 0.0;
  switch (kind) {
    case TextureKind::checker: {
      const auto cell = static_cast<std::int64_t>(std::floor(s)) + static_cast<std::int64_t>(std::floor(t));
      mix = (cell & 1) ? 1.0 : 0.0;
      break;
    }
    case TextureKind::stripes: {
      const double frac = s - std::floor(s);
      mix = frac < 0.5 ? 0.0 : 1.0;
      // Fine noise keeps stripes from being perfectly 1-D.
      mix = 0.85 * mix + 0.15 * value_noise(2.0 * s, 2.0 * t, noise_seed);
      break;
    }
    case TextureKind::noise:
    case TextureKind::mixed: mix = fractal_noise(s, t, noise_seed); break;
  }
  std::array<float, 3> rgb{};
  double ramp = 0.0;
  if (gradient_gain != 0.0) {
    const double g = (std::cos(gradient_angle_rad) * x_mm + std::sin(gradient_angle_rad) * y_mm) / gradient_extent_mm;
    ramp = gradient_gain * std::clamp(g, -1.0, 1.0);
  }
  for (int c = 0; c < 3; ++c) {
    const double v = color_a[c] + (color_b[c] - color_a[c]) * mix + ramp;
    rgb[c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return rgb;
}

bool Shape::contains(double x_mm, double y_mm) const {
  const double dx = x_mm - cx_mm;
  const double dy = y_mm - cy_mm;
  const double ca = std::cos(angle_rad);
  const double sa = std::sin(angle_rad);
  const double lx = ca * dx + sa * dy;
  const double ly = -sa * dx + ca * dy;
  if (kind == Kind::disc) return lx * lx + ly * ly <= half_w_mm * half_w_mm;
  return std::abs(lx) <= half_w_mm && std::abs(ly) <= half_h_mm;
}

bool Layer::covers(double x_mm, double y_mm) const {
  if (shapes.empty()) return true;
  return std::ranges::any_of(shapes, [&](const Shape& s) { return s.contains(x_mm, y_mm); });
}

RayHit trace(const SceneDescriptor& scene, const CameraIntrinsics& cam, double center_x_mm, double u, double v) {
  const double f = cam.focal_length_px();
  const double rx = (u - cam.principal_point_px[0]) / f;
  const double ry = (v - cam.principal_point_px[1]) / f;
  for (std::size_t i = 0; i < scene.layers.size(); ++i) {
    const Layer& layer = scene.layers[i];
    const double x = center_x_mm + layer.depth_mm * rx;
    const double y = layer.depth_mm * ry;
    if (layer.covers(x, y)) return RayHit{layer.texture.eval(x, y), layer.depth_mm, static_cast<int>(i)};
  }
  return {};
}

SceneRGBD render_view(const SceneDescriptor& scene, const CameraIntrinsics& cam, double center_x_mm,
                      int supersample, std::uint64_t seed) {
  if (scene.layers.empty() || !scene.layers.back().shapes.empty()) {
    throw std::invalid_argument("render_view: scene needs a background layer");
  }
  SceneRGBD out;
  out.seed = seed;
  out.descriptor = scene;
  out.aif = Image(cam.width_px, cam.height_px, 3);
  out.depth.mm = Image(cam.width_px, cam.height_px, 1);
  const int ss = std::max(1, supersample);
  for (int y = 0; y < cam.height_px; ++y) {
    for (int x = 0; x < cam.width_px; ++x) {
      out.depth.mm.at(0, y, x) = static_cast<float>(trace(scene, cam, center_x_mm, x, y).depth_mm);
      std::array<double, 3> acc{};
      for (int sy = 0; sy < ss; ++sy) {
        for (int sx = 0; sx < ss; ++sx) {
          const double u = x + (sx + 0.5) / ss - 0.5;
          const double v = y + (sy + 0.5) / ss - 0.5;
          const RayHit hit = trace(scene, cam, center_x_mm, u, v);
          for (int c = 0; c < 3; ++c) acc[c] += hit.rgb[c];
        }
      }
      for (int c = 0; c < 3; ++c) out.aif.at(c, y, x) = static_cast<float>(acc[c] / (ss * ss));
    }
  }
  return out;
}

SceneRGBD generate_scene(std::uint64_t seed, const SceneConfig& config, const CameraIntrinsics& view) {
  config.validate();
  view.validate();
  std::mt19937_64 rng(mix64(seed + 0x5eed));
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  // One depth per layer, stratified in diopters so layers stay separated.
  const double d_near = 1.0 / config.near_mm;
  const double d_far = 1.0 / config.far_mm;
  std::vector<double> depths;
  for (int i = 0; i < config.n_layers; ++i) {
    const double lo = d_near + (d_far - d_near) * i / config.n_layers;
    const double hi = d_near + (d_far - d_near) * (i + 1) / config.n_layers;
    const double t = 0.2 + 0.6 * u01(rng);
    depths.push_back(1.0 / (lo + (hi - lo) * t));
  }
  std::ranges::sort(depths);

  SceneDescriptor scene;
  const double focal_px = view.focal_length_px();
  const int n_fg = config.n_layers - 1;
  for (int i = 0; i < config.n_layers; ++i) {
    Layer layer;
    layer.depth_mm = depths[static_cast<std::size_t>(i)];
    layer.texture = random_texture(config.texture_kind, layer.depth_mm, focal_px, rng);
    if (i < n_fg) {
      const double band_lo = static_cast<double>(i) / n_fg;
      const double band_hi = static_cast<double>(i + 1) / n_fg;
      layer.shapes = random_shapes(view, layer.depth_mm, band_lo, band_hi, rng);
    }
    scene.layers.push_back(std::move(layer));
  }
  return render_view(scene, view, 0.0, config.supersample, seed);
}

std::vector<double> disc_kernel(double radius_px, int& side) {
  const double r = std::max(0.0, radius_px);
  const int extent = static_cast<int>(std::ceil(r + 0.5));
  side = 2 * extent + 1;
  std::vector<double> k(static_cast<std::size_t>(side * side));
  double sum = 0.0;
  for (int dy = -extent; dy <= extent; ++dy) {
    for (int dx = -extent; dx <= extent; ++dx) {
      const double w = std::clamp(r + 0.5 - std::hypot(dx, dy), 0.0, 1.0);
      k[static_cast<std::size_t>((dy + extent) * side + dx + extent)] = w;
      sum += w;
    }
  }
  for (double& w : k) w /= sum;
  return k;
}

Rendered render_defocused(const SceneRGBD& scene, const CameraIntrinsics& cam, const LensState& lens,
                          const RenderConfig& config) {
  if (scene.aif.width() != cam.width_px || scene.aif.height() != cam.height_px || scene.aif.channels() != 3) {
    throw std::invalid_argument("render_defocused: scene dims do not match camera");
  }
  require_same_dims(scene.aif, scene.depth.mm, "render_defocused");
  Rendered out;
  out.defocus = optics::defocus_map(cam, lens, scene.depth);
  const int w = cam.width_px;
  const int h = cam.height_px;
  const auto radius = out.defocus.radius_px.plane(0);

  // Slab assignment in diopters over the valid depth range.
  auto depth = scene.depth.mm.plane(0);
  double d_min = std::numeric_limits<double>::infinity();
  double d_max = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (!out.defocus.valid[i]) continue;
    const double d = 1.0 / depth[i];
    d_min = std::min(d_min, d);
    d_max = std::max(d_max, d);
  }
  const int n_slabs = std::max(1, config.slabs);
  std::vector<int> slab_of(depth.size(), 0);
  if (std::isfinite(d_min) && d_max > d_min) {
    for (std::size_t i = 0; i < depth.size(); ++i) {
      const double d = out.defocus.valid[i] ? 1.0 / depth[i] : d_max;
      slab_of[i] = std::clamp(static_cast<int>((d - d_min) / (d_max - d_min) * n_slabs), 0, n_slabs - 1);
    }
  }

  std::vector<double> acc_color(static_cast<std::size_t>(3) * w * h, 0.0);
  std::vector<double> acc_alpha(static_cast<std::size_t>(w) * h, 0.0);
  std::vector<float> layer(static_cast<std::size_t>(4) * w * h);
  const std::size_t npx = static_cast<std::size_t>(w) * h;

  // Slab 0 holds the smallest diopters (farthest); composite far to near.
  for (int s = 0; s < n_slabs; ++s) {
    double r_sum = 0.0;
    std::size_t count = 0;
    int x_lo = w, x_hi = -1, y_lo = h, y_hi = -1;
    std::ranges::fill(layer, 0.0f);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (slab_of[i] != s) continue;
        r_sum += radius[i];
        ++count;
        for (int c = 0; c < 3; ++c) layer[c * npx + i] = scene.aif.at(c, y, x);
        layer[3 * npx + i] = 1.0f;
        x_lo = std::min(x_lo, x);
        x_hi = std::max(x_hi, x);
        y_lo = std::min(y_lo, y);
        y_hi = std::max(y_hi, y);
      }
    }
    if (count == 0) continue;
    int side = 0;
    const std::vector<double> kernel = disc_kernel(r_sum / static_cast<double>(count), side);
    const int extent = side / 2;
    x_lo = std::max(0, x_lo - extent);
    y_lo = std::max(0, y_lo - extent);
    x_hi = std::min(w - 1, x_hi + extent);
    y_hi = std::min(h - 1, y_hi + extent);

    for (int y = y_lo; y <= y_hi; ++y) {
      for (int x = x_lo; x <= x_hi; ++x) {
        double blurred[4] = {0, 0, 0, 0};
        for (int ky = 0; ky < side; ++ky) {
          const int sy = std::clamp(y + ky - extent, 0, h - 1);
          for (int kx = 0; kx < side; ++kx) {
            const double wk = kernel[static_cast<std::size_t>(ky * side + kx)];
            if (wk == 0.0) continue;
            const int sx = std::clamp(x + kx - extent, 0, w - 1);
            const std::size_t j = static_cast<std::size_t>(sy) * w + sx;
            if (layer[3 * npx + j] == 0.0f) continue;
            for (int c = 0; c < 4; ++c) blurred[c] += wk * layer[c * npx + j];
          }
        }
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const double a = blurred[3];
        for (int c = 0; c < 3; ++c) acc_color[c * npx + i] = blurred[c] + (1.0 - a) * acc_color[c * npx + i];
        acc_alpha[i] = a + (1.0 - a) * acc_alpha[i];
      }
    }
  }

  out.image = Image(w, h, 3);
  for (std::size_t i = 0; i < npx; ++i) {
    const double a = acc_alpha[i];
    for (int c = 0; c < 3; ++c) {
      const double v = a > 1e-9 ? acc_color[c * npx + i] / a : scene.aif.plane(c)[i];
      out.image.plane(c)[i] = static_cast<float>(v);
    }
  }
  return out;
}

ColorTransform ColorTransform::white_balance(double jitter, std::uint64_t seed) {
  std::mt19937_64 rng(mix64(seed + 0xc0102));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ColorTransform t;
  const double r_gain = 1.0 + 0.04 + jitter * u(rng);
  const double b_gain = 1.0 - 0.04 + jitter * u(rng);
  t.matrix = {r_gain, 0, 0, 0, 1, 0, 0, 0, b_gain};
  if (jitter == 0.0) t = identity();
  return t;
}

double ColorTransform::determinant() const {
  const auto& m = matrix;
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Image ColorTransform::apply(const Image& rgb) const {
  if (rgb.channels() != 3) throw std::invalid_argument("ColorTransform::apply: expected RGB");
  Image out(rgb.width(), rgb.height(), 3);
  for (std::size_t i = 0; i < rgb.pixel_count(); ++i) {
    const double r = rgb.plane(0)[i];
    const double g = rgb.plane(1)[i];
    const double b = rgb.plane(2)[i];
    for (int c = 0; c < 3; ++c) {
      const double v = matrix[c * 3] * r + matrix[c * 3 + 1] * g + matrix[c * 3 + 2] * b + offset[c];
      out.plane(c)[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

void CameraRig::validate() const {
  w_cam.validate();
  uw_cam.validate();
  if (w_cam.width_px != uw_cam.width_px || w_cam.height_px != uw_cam.height_px) {
    throw std::invalid_argument("rig: W and UW must share the pixel grid size");
  }
  if (!(uw_cam.aperture_diameter_mm < w_cam.aperture_diameter_mm) &&
      !(uw_cam.aperture_diameter_mm == 0.0 && w_cam.aperture_diameter_mm == 0.0)) {
    throw std::invalid_argument("rig: UW aperture must be smaller than W aperture");
  }
  const double w_half = w_cam.width_px * w_cam.pixel_pitch_mm_per_px / w_cam.focal_length_mm;
  const double uw_half = uw_cam.width_px * uw_cam.pixel_pitch_mm_per_px / uw_cam.focal_length_mm;
  if (uw_half < w_half * (1.0 - 1e-12)) throw std::invalid_argument("rig: UW field of view must cover W");
  if (!(uw_lens.focus_distance_mm > uw_cam.focal_length_mm)) {
    throw std::invalid_argument("rig: UW focus distance must exceed its focal length");
  }
  if (!std::isfinite(baseline_mm) || baseline_mm < 0.0) {
    throw std::invalid_argument("rig: degenerate baseline");
  }
  if (std::abs(color.determinant()) < 1e-9) throw std::invalid_argument("rig: color transform not invertible");
}

CameraRig CameraRig::default_rig(int width, int height) {
  CameraRig rig;
  rig.w_cam = CameraIntrinsics::centered(6.8, 4.0, 0.006, width, height);
  rig.uw_cam = CameraIntrinsics::centered(4.8, 0.8, 0.005, width, height);
  rig.uw_lens = LensState{1000.0};
  rig.baseline_mm = 4.0;
  rig.color = ColorTransform::white_balance(0.03, 0);
  return rig;
}

nlohmann::json to_json(const CameraRig& rig) {
  return {{"w_cam", optics::to_json(rig.w_cam)},
          {"uw_cam", optics::to_json(rig.uw_cam, rig.uw_lens)},
          {"baseline_mm", rig.baseline_mm},
          {"color_matrix", rig.color.matrix},
          {"color_offset", rig.color.offset}};
}

CameraRig rig_from_json(const nlohmann::json& j) {
  CameraRig rig;
  rig.w_cam = optics::camera_from_json(j.at("w_cam"));
  rig.uw_cam = optics::camera_from_json(j.at("uw_cam"));
  rig.uw_lens = optics::lens_from_json(j.at("uw_cam"));
  rig.baseline_mm = j.at("baseline_mm").get<double>();
  rig.color.matrix = j.at("color_matrix").get<std::array<double, 9>>();
  rig.color.offset = j.at("color_offset").get<std::array<double, 3>>();
  rig.validate();
  return rig;
}

UwCapture render_uw_capture(const SceneRGBD& scene, const CameraRig& rig, const RenderConfig& config) {
  rig.validate();
  const auto& wc = rig.w_cam;
  const auto& uc = rig.uw_cam;
  if (scene.aif.width() != wc.width_px || scene.aif.height() != wc.height_px) {
    throw std::invalid_argument("render_uw_capture: scene dims do not match W camera");
  }
  const int w = wc.width_px;
  const int h = wc.height_px;
  const double fw = wc.focal_length_px();
  const double fu = uc.focal_length_px();

  const int supersample = 2;
  SceneRGBD uw_view = render_view(scene.descriptor, uc, rig.baseline_mm, supersample, scene.seed);
  UwCapture out;
  out.uw_frame = rig.color.apply(render_defocused(uw_view, uc, rig.uw_lens, config).image);

  // W pixel -> UW pixel through exact depth, plus the z-buffer visibility test.
  out.true_warp = align::WarpField{Image(w, h, 2), Image(w, h, 1)};
  Image raw_occ(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double z = scene.depth.mm.at(0, y, x);
      const double X = (x - wc.principal_point_px[0]) * z / fw;
      const double Y = (y - wc.principal_point_px[1]) * z / fw;
      const double u = fu * (X - rig.baseline_mm) / z + uc.principal_point_px[0];
      const double v = fu * Y / z + uc.principal_point_px[1];
      out.true_warp.displacement.at(0, y, x) = static_cast<float>(u - x);
      out.true_warp.displacement.at(1, y, x) = static_cast<float>(v - y);
      const bool inside = u >= 0.0 && v >= 0.0 && u <= w - 1.0 && v <= h - 1.0;
      out.true_warp.validity.at(0, y, x) = inside ? 1.0f : 0.0f;
      bool occluded = !inside;
      if (inside) {
        const RayHit hit = trace(scene.descriptor, uc, rig.baseline_mm, u, v);
        // Depth maps are float32, so compare with a tolerance above float rounding.
        occluded = hit.depth_mm < z * (1.0 - 1e-6);
      }
      raw_occ.at(0, y, x) = occluded ? 1.0f : 0.0f;
    }
  }
  // One-pixel dilation covers anti-aliased rims next to occlusion boundaries.
  out.occlusion_mask = Image(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float m = 0.0f;
      for (int dy = -1; dy <= 1 && m == 0.0f; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (raw_occ.at_clamped(0, y + dy, x + dx) > 0.5f) {
            m = 1.0f;
            break;
          }
        }
      }
      out.occlusion_mask.at(0, y, x) = m;
    }
  }

  out.reverse_warp = align::WarpField{Image(w, h, 2), Image(w, h, 1)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double z = uw_view.depth.mm.at(0, y, x);
      const double X = (x - uc.principal_point_px[0]) * z / fu + rig.baseline_mm;
      const double Y = (y - uc.principal_point_px[1]) * z / fu;
      const double u = fw * X / z + wc.principal_point_px[0];
      const double v = fw * Y / z + wc.principal_point_px[1];
      out.reverse_warp.displacement.at(0, y, x) = static_cast<float>(u - x);
      out.reverse_warp.displacement.at(1, y, x) = static_cast<float>(v - y);
      const bool inside = u >= 0.0 && v >= 0.0 && u <= w - 1.0 && v <= h - 1.0;
      out.reverse_warp.validity.at(0, y, x) = inside ? 1.0f : 0.0f;
    }
  }

  out.defocus_uw = optics::defocus_map(
      optics::CameraIntrinsics::centered(uc.focal_length_mm, uc.aperture_diameter_mm, uc.pixel_pitch_mm_per_px, w, h),
      rig.uw_lens, scene.depth);
  return out;
}

namespace {

DualCapture assemble(const SceneRGBD& scene, const CameraRig& rig, const LensState& lens_w, const UwCapture& uw,
                     const RenderConfig& config) {
  Rendered w = render_defocused(scene, rig.w_cam, lens_w, config);
  DualCapture cap;
  cap.w_slice = std::move(w.image);
  cap.defocus_w = std::move(w.defocus);
  cap.uw_frame = uw.uw_frame;
  cap.true_warp = uw.true_warp;
  cap.reverse_warp = uw.reverse_warp;
  cap.occlusion_mask = uw.occlusion_mask;
  cap.defocus_uw = uw.defocus_uw;
  cap.lens_w = lens_w;
  return cap;
}

}  // namespace

DualCapture render_dual_capture(const SceneRGBD& scene, const CameraRig& rig, const LensState& lens_w,
                                const RenderConfig& config) {
  return assemble(scene, rig, lens_w, render_uw_capture(scene, rig, config), config);
}

FocusStack generate_stack(const SceneRGBD& scene, const CameraRig& rig, const StackConfig& config,
                          const RenderConfig& render) {
  if (config.n_slices < 2) throw std::invalid_argument("generate_stack: n_slices must be >= 2");
  const auto lenses = optics::focus_sweep(config.near_mm, config.far_mm, config.n_slices, rig.w_cam.focal_length_mm);
  const UwCapture uw = render_uw_capture(scene, rig, render);
  FocusStack stack;
  stack.rig = rig;
  stack.aif = scene.aif;
  stack.depth = scene.depth;
  for (const auto& lens : lenses) stack.slices.push_back(assemble(scene, rig, lens, uw, render));
  return stack;
}

Image focus_stack_merge(std::span<const Image> slices, const MergeConfig& config) {
  if (slices.empty()) throw std::invalid_argument("focus_stack_merge: empty stack");
  if (config.window < 1) throw std::invalid_argument("focus_stack_merge: window must be >= 1");
  const Image& first = slices.front();
  for (const auto& s : slices) {
    if (!s.same_shape(first)) throw std::invalid_argument("focus_stack_merge: slice shapes differ");
  }
  const int w = first.width();
  const int h = first.height();
  const int half = config.window / 2;

  std::vector<std::vector<double>> energy;
  for (const auto& slice : slices) {
    const Image y = luminance(slice);
    std::vector<double> lap(static_cast<std::size_t>(w) * h);
    for (int yy = 0; yy < h; ++yy) {
      for (int xx = 0; xx < w; ++xx) {
        const double v = 4.0 * y.at(0, yy, xx) - y.at_clamped(0, yy - 1, xx) - y.at_clamped(0, yy + 1, xx) -
                         y.at_clamped(0, yy, xx - 1) - y.at_clamped(0, yy, xx + 1);
        lap[static_cast<std::size_t>(yy) * w + xx] = v * v;
      }
    }
    // Windowed sum via a summed-area table.
    std::vector<double> sat(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
    for (int yy = 0; yy < h; ++yy) {
      for (int xx = 0; xx < w; ++xx) {
        sat[static_cast<std::size_t>(yy + 1) * (w + 1) + xx + 1] = lap[static_cast<std::size_t>(yy) * w + xx] +
                                                                   sat[static_cast<std::size_t>(yy) * (w + 1) + xx + 1] +
                                                                   sat[static_cast<std::size_t>(yy + 1) * (w + 1) + xx] -
                                                                   sat[static_cast<std::size_t>(yy) * (w + 1) + xx];
      }
    }
    std::vector<double> e(lap.size());
    for (int yy = 0; yy < h; ++yy) {
      const int y0 = std::max(0, yy - half);
      const int y1 = std::min(h, yy + half + 1);
      for (int xx = 0; xx < w; ++xx) {
        const int x0 = std::max(0, xx - half);
        const int x1 = std::min(w, xx + half + 1);
        const auto at = [&](int r, int c) { return sat[static_cast<std::size_t>(r) * (w + 1) + c]; };
        e[static_cast<std::size_t>(yy) * w + xx] =
            (at(y1, x1) - at(y0, x1) - at(y1, x0) + at(y0, x0)) / ((y1 - y0) * (x1 - x0));
      }
    }
    energy.push_back(std::move(e));
  }

  Image out(w, h, first.channels());
  const std::size_t n = slices.size();
  std::vector<double> weight(n);
  for (std::size_t i = 0; i < static_cast<std::size_t>(w) * h; ++i) {
    double e_max = 0.0;
    for (std::size_t k = 0; k < n; ++k) e_max = std::max(e_max, energy[k][i]);
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      weight[k] = e_max > 0.0 ? std::pow(energy[k][i] / e_max, config.sharpness_power) : 1.0;
      sum += weight[k];
    }
    for (int c = 0; c < first.channels(); ++c) {
      double v = 0.0;
      for (std::size_t k = 0; k < n; ++k) v += weight[k] * slices[k].plane(c)[i];
      out.plane(c)[i] = static_cast<float>(v / sum);
    }
  }
  return out;
}

Image focus_stack_merge(const FocusStack& stack, const MergeConfig& config) {
  std::vector<Image> slices;
  slices.reserve(stack.slices.size());
  for (const auto& s : stack.slices) slices.push_back(s.w_slice);
  return focus_stack_merge(slices, config);
}

}  // namespace dualfocus::synthcam
