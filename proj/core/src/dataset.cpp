#include "dualfocus/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "dualfocus/io.hpp"

namespace dualfocus::dataset {
namespace fs = std::filesystem;
namespace {

std::string slice_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "w_%03zu.png", i);
  return buf;
}

align::WarpField field_from_raw(const Image& disp) {
  align::WarpField f{disp, Image(disp.width(), disp.height(), 1)};
  for (int y = 0; y < disp.height(); ++y) {
    for (int x = 0; x < disp.width(); ++x) {
      const double sx = x + disp.at(0, y, x);
      const double sy = y + disp.at(1, y, x);
      const bool inside = sx >= 0.0 && sy >= 0.0 && sx <= disp.width() - 1.0 && sy <= disp.height() - 1.0;
      f.validity.at(0, y, x) = inside ? 1.0f : 0.0f;
    }
  }
  return f;
}

}  // namespace

optics::DefocusMap StoredScene::defocus(std::size_t i) const {
  return optics::defocus_map(rig.w_cam, lenses.at(i), depth);
}

Image StoredScene::warped_uw() const { return align::warp(uw_frame, warp).image; }

void write_scene(const fs::path& dir, const synthcam::SceneRGBD& scene, const synthcam::FocusStack& stack,
                 const Image& occlusion_estimate) {
  fs::path tmp = dir;
  tmp += ".partial";
  fs::remove_all(tmp);
  fs::create_directories(tmp);

  io::write_png(tmp / "aif.png", scene.aif);
  io::write_raw(tmp / "depth.raw", scene.depth.mm);
  nlohmann::json slices = nlohmann::json::array();
  for (std::size_t i = 0; i < stack.slices.size(); ++i) {
    io::write_png(tmp / slice_name(i), stack.slices[i].w_slice);
    slices.push_back({{"file", slice_name(i)}, {"focus_distance_mm", stack.slices[i].lens_w.focus_distance_mm}});
  }
  const auto& first = stack.slices.front();
  io::write_png(tmp / "uw.png", first.uw_frame);
  io::write_raw(tmp / "warp.raw", first.true_warp.displacement);
  io::write_raw(tmp / "reverse_warp.raw", first.reverse_warp.displacement);
  io::write_png(tmp / "occlusion.png", occlusion_estimate);
  io::write_png(tmp / "occlusion_gt.png", first.occlusion_mask);

  nlohmann::json meta;
  meta["seed"] = scene.seed;
  meta["rig"] = synthcam::to_json(stack.rig);
  meta["w_cam"] = optics::to_json(stack.rig.w_cam);
  meta["slices"] = slices;
  meta["n_layers"] = scene.descriptor.layers.size();
  nlohmann::json layer_depths = nlohmann::json::array();
  for (const auto& layer : scene.descriptor.layers) layer_depths.push_back(layer.depth_mm);
  meta["layer_depths_mm"] = layer_depths;
  io::write_text_atomic(tmp / "meta.json", meta.dump(2));

  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

StoredScene load_scene(const fs::path& dir) {
  StoredScene s;
  s.dir = dir;
  const auto meta_bytes = io::read_file(dir / "meta.json");
  const auto meta = nlohmann::json::parse(meta_bytes.begin(), meta_bytes.end());
  s.seed = meta.at("seed").get<std::uint64_t>();
  s.rig = synthcam::rig_from_json(meta.at("rig"));
  s.aif = io::read_png(dir / "aif.png");
  s.depth.mm = io::read_raw(dir / "depth.raw", 1);
  for (const auto& slice : meta.at("slices")) {
    s.w_slices.push_back(io::read_png(dir / slice.at("file").get<std::string>()));
    s.lenses.push_back(optics::LensState{slice.at("focus_distance_mm").get<double>()});
  }
  s.uw_frame = io::read_png(dir / "uw.png");
  s.warp = field_from_raw(io::read_raw(dir / "warp.raw", 2));
  s.reverse_warp = field_from_raw(io::read_raw(dir / "reverse_warp.raw", 2));
  s.occlusion = io::read_png(dir / "occlusion.png");
  s.occlusion_gt = io::read_png(dir / "occlusion_gt.png");
  for (const auto& slice : s.w_slices) require_same_dims(s.aif, slice, "load_scene " + dir.string());
  require_same_dims(s.aif, s.depth.mm, "load_scene depth");
  require_same_dims(s.aif, s.uw_frame, "load_scene uw");
  if (s.w_slices.empty()) throw std::runtime_error("load_scene: no slices in " + dir.string());
  return s;
}

std::vector<fs::path> list_scenes(const fs::path& dataset_dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dataset_dir)) return out;
  for (const auto& entry : fs::directory_iterator(dataset_dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) out.push_back(entry.path());
  }
  std::ranges::sort(out);
  return out;
}

std::vector<StoredScene> load_dataset(const fs::path& dataset_dir) {
  std::vector<StoredScene> scenes;
  for (const auto& dir : list_scenes(dataset_dir)) scenes.push_back(load_scene(dir));
  return scenes;
}

std::uint64_t scene_seed(std::uint64_t dataset_seed, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(dataset_seed), static_cast<std::uint32_t>(dataset_seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

synthcam::CameraRig rig_for_scene(const BuildOptions& options, std::uint64_t seed) {
  auto rig = synthcam::CameraRig::default_rig(options.width, options.height);
  rig.baseline_mm = options.baseline_mm;
  rig.color = synthcam::ColorTransform::white_balance(options.color_jitter, seed);
  return rig;
}

std::vector<fs::path> build_dataset(const fs::path& out_dir, const BuildOptions& options) {
  if (options.n_scenes < 1 || options.n_slices < 2) {
    throw std::invalid_argument("build_dataset: need >= 1 scene and >= 2 slices");
  }
  if (options.min_layers < 1 || options.max_layers < options.min_layers) {
    throw std::invalid_argument("build_dataset: invalid layer range");
  }
  fs::create_directories(out_dir);
  std::vector<fs::path> dirs;
  for (int i = 0; i < options.n_scenes; ++i) {
    const std::uint64_t seed = scene_seed(options.seed, i);
    std::mt19937_64 rng(seed);
    synthcam::SceneConfig cfg;
    cfg.n_layers = std::uniform_int_distribution<int>(options.min_layers, options.max_layers)(rng);
    cfg.near_mm = options.near_mm;
    cfg.far_mm = options.far_mm;
    const auto rig = rig_for_scene(options, seed);
    const auto scene = synthcam::generate_scene(seed, cfg, rig.w_cam);
    const auto stack = synthcam::generate_stack(scene, rig, {options.n_slices, options.near_mm, options.far_mm});
    const auto& first = stack.slices.front();
    const Image occlusion =
        align::estimate_occlusion(first.true_warp, first.reverse_warp, options.occlusion_threshold_px);
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%03d", i);
    const fs::path dir = out_dir / name;
    write_scene(dir, scene, stack, occlusion);
    dirs.push_back(dir);
  }
  return dirs;
}

}  // namespace dualfocus::dataset
