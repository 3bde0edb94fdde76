#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>
#include <torch/types.h>

#include "dualfocus/dataset.hpp"
#include "dualfocus/dfnet.hpp"
#include "dualfocus/loss.hpp"

namespace dualfocus::train {

enum class Ablation { none, w_only, uw_only, no_occlusion };

std::string to_string(Ablation a);
Ablation ablation_from_string(const std::string& name);

/// Model configuration for an ablation: single-path variants or the
/// occlusion input removed.
dfnet::ModelConfig apply_ablation(dfnet::ModelConfig config, Ablation ablation);

struct TrainConfig {
  int batch_size = 8;
  int crop = 256;
  double lr_phase1 = 1e-4;
  int steps1 = 2000;
  double lr_phase2 = 1e-5;
  int steps2 = 1000;
  std::uint64_t seed = 0;
  loss::LossWeights weights;
  std::string perceptual = "random";
  Ablation ablation = Ablation::none;
  dfnet::ModelConfig model = dfnet::ModelConfig::tiny();
  /// Use the z-buffer occlusion instead of the forward-backward estimate.
  bool ground_truth_occlusion = false;
  int log_every = 50;
  /// 0 disables intermediate checkpoints.
  int checkpoint_every = 0;

  void validate() const;
  int total_steps() const { return steps1 + steps2; }
  double lr_at(int step) const { return step < steps1 ? lr_phase1 : lr_phase2; }
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Full-resolution tensors of one stored scene, ready for cropping.
struct SceneTensors {
  torch::Tensor slices;     // [N,3,H,W]
  torch::Tensor defocus;    // [N,1,H,W] px
  torch::Tensor uw_warped;  // [3,H,W]
  torch::Tensor occlusion;  // [1,H,W]
  int width = 0;
  int height = 0;

  int64_t slice_count() const { return slices.size(0); }
};

SceneTensors prepare_scene(const dataset::StoredScene& scene, bool ground_truth_occlusion = false);

/// Two distinct slice indices, uniform without replacement, as (ref, tgt).
std::pair<int, int> sample_pair(int n_slices, std::mt19937_64& rng);

struct PairCrop {
  int scene = 0;
  int ref = 0;
  int tgt = 0;
  int x0 = 0;
  int y0 = 0;
};

struct Batch {
  dfnet::NetInput input;
  torch::Tensor target;  // [B,3,h,w]
  std::vector<PairCrop> crops;
};

/// Assembles the network input for the given crops. The radial mask of each
/// crop comes from its offset in the full image.
Batch assemble_batch(const std::vector<SceneTensors>& scenes, const std::vector<PairCrop>& crops, int crop);

/// Draws `batch_size` (scene, pair, offset) triples and assembles them.
Batch crop_batch(const std::vector<SceneTensors>& scenes, int batch_size, int crop, std::mt19937_64& rng);

struct LogRow {
  int step = 0;
  double lr = 0.0;
  loss::Terms terms;
};

struct TrainResult {
  dfnet::DetailFusionNet model{nullptr};
  std::vector<LogRow> history;  // every step
  std::string checkpoint_id;
};

/// Called after every optimizer step.
using StepCallback = std::function<void(const LogRow&)>;

/// Two-phase Adam optimization on the refocus proxy task. Writes the final
/// checkpoint to `checkpoint_path` when it is non-empty and CSV rows
/// (step, lr, loss terms) to `log_csv` every `log_every` steps. Throws
/// std::runtime_error if the loss becomes non-finite.
TrainResult train(const std::vector<dataset::StoredScene>& scenes, const TrainConfig& config,
                  const std::filesystem::path& checkpoint_path = {}, std::ostream* log_csv = nullptr,
                  const StepCallback& on_step = {});

TrainResult train(const std::filesystem::path& dataset_dir, const TrainConfig& config,
                  const std::filesystem::path& checkpoint_path = {}, std::ostream* log_csv = nullptr,
                  const StepCallback& on_step = {});

}  // namespace dualfocus::train
