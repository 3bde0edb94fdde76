#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dualfocus/align.hpp"
#include "dualfocus/image.hpp"
#include "dualfocus/optics.hpp"
#include "dualfocus/synthcam.hpp"

namespace dualfocus::dataset {

/// One scene folder as stored on disk:
///   aif.png, depth.raw, w_###.png, uw.png, warp.raw, reverse_warp.raw,
///   occlusion.png (forward-backward estimate over the oracle fields),
///   occlusion_gt.png (z-buffer), meta.json.
struct StoredScene {
  std::filesystem::path dir;
  std::uint64_t seed = 0;
  synthcam::CameraRig rig;
  Image aif;
  optics::DepthMap depth;
  std::vector<Image> w_slices;
  std::vector<optics::LensState> lenses;
  Image uw_frame;
  align::WarpField warp;
  align::WarpField reverse_warp;
  Image occlusion;
  Image occlusion_gt;

  int width() const { return aif.width(); }
  int height() const { return aif.height(); }
  std::size_t slice_count() const { return w_slices.size(); }

  /// Defocus map of slice `i`, recomputed from the stored metadata and depth.
  optics::DefocusMap defocus(std::size_t i) const;
  /// UW frame warped into the W grid with the stored oracle warp.
  Image warped_uw() const;
};

struct BuildOptions {
  int n_scenes = 8;
  int n_slices = 10;
  std::uint64_t seed = 0;
  int width = 256;
  int height = 256;
  double baseline_mm = 4.0;
  double color_jitter = 0.03;
  int min_layers = 2;
  int max_layers = 4;
  double near_mm = 500.0;
  double far_mm = 3000.0;
  double occlusion_threshold_px = 1.5;
};

/// Writes one scene folder atomically (temporary sibling, then rename).
void write_scene(const std::filesystem::path& dir, const synthcam::SceneRGBD& scene,
                 const synthcam::FocusStack& stack, const Image& occlusion_estimate);

StoredScene load_scene(const std::filesystem::path& dir);

/// Scene folders (those containing meta.json) sorted by name.
std::vector<std::filesystem::path> list_scenes(const std::filesystem::path& dataset_dir);

std::vector<StoredScene> load_dataset(const std::filesystem::path& dataset_dir);

/// Rig used for scene `index` of a dataset built with `options`.
synthcam::CameraRig rig_for_scene(const BuildOptions& options, std::uint64_t scene_seed);

/// Generates `n_scenes` folders named scene_###.
std::vector<std::filesystem::path> build_dataset(const std::filesystem::path& out_dir, const BuildOptions& options);

/// Per-scene seed derived from the dataset seed.
std::uint64_t scene_seed(std::uint64_t dataset_seed, int index);

}  // namespace dualfocus::dataset
