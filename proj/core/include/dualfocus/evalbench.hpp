#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "dualfocus/dataset.hpp"
#include "dualfocus/dfnet.hpp"
#include "dualfocus/inference.hpp"
#include "dualfocus/metrics.hpp"

namespace dualfocus::evalbench {

/// Maps network planes to an output image. `truth` is the image the output
/// is scored against; only the oracle predictor may look at it.
using Predictor = std::function<Image(const inference::Planes& planes, const Image& truth)>;

Predictor model_predictor(dfnet::DetailFusionNet model, const inference::TileConfig& tiles = {});
/// Returns the W input unchanged.
Predictor copy_input_predictor();
/// Returns the ground truth (perfect-score check).
Predictor oracle_predictor();

struct ImageScore {
  int scene = 0;
  int ref = -1;
  int tgt = -1;
  double psnr = 0.0;
  double ssim = 0.0;
  metrics::AlignParams align;
};

struct MetricReport {
  std::string task;
  std::string method;
  std::string checkpoint_id;
  std::vector<ImageScore> rows;
  /// +inf when every row is a perfect match.
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;

  void finalize();
  void write_csv(std::ostream& os, bool header = true) const;
};

struct EvalConfig {
  std::uint64_t seed = 0;
  /// Alignment grid applied before scoring deblur outputs.
  metrics::AlignSearch align;
  /// Score deblur against the sharpness merge of the stack instead of the exact AIF.
  bool merged_aif = false;
  /// Refocus pairs drawn per scene; 0 uses the slice count.
  int refocus_pairs_per_scene = 0;
};

/// Prepared per-scene planes shared by all protocols.
struct EvalScene {
  const dataset::StoredScene* scene = nullptr;
  Image uw_warped;
  Image occlusion;
  std::vector<Image> defocus;  // per slice, px
  Image aif_reference;
};

std::vector<EvalScene> prepare(const std::vector<dataset::StoredScene>& scenes, const EvalConfig& config = {});

/// Every slice with a zero target map, aligned to the AIF with fov_align, scored against it.
MetricReport eval_deblur(const Predictor& predictor, const std::vector<EvalScene>& scenes,
                         const EvalConfig& config = {}, const std::string& method = "model");

/// AIF input with a zero reference map, each slice's defocus as target, scored against the slice.
MetricReport eval_bokeh(const Predictor& predictor, const std::vector<EvalScene>& scenes,
                        const EvalConfig& config = {}, const std::string& method = "model");

/// Layered thin-lens renderer applied to AIF + depth, as a bokeh baseline.
MetricReport eval_bokeh_classical(const std::vector<EvalScene>& scenes);

/// Fixed-seed (ref, tgt) pairs, ref != tgt, scored against the target slice.
MetricReport eval_refocus(const Predictor& predictor, const std::vector<EvalScene>& scenes,
                          const EvalConfig& config = {}, const std::string& method = "model");

/// The (scene, ref, tgt) pairs eval_refocus will score.
std::vector<ImageScore> refocus_pairs(const std::vector<EvalScene>& scenes, const EvalConfig& config);

struct AblationEntry {
  std::string name;
  std::filesystem::path checkpoint;
};

struct AblationTable {
  std::vector<MetricReport> reports;  // one per entry, refocus task

  void write_csv(std::ostream& os) const;
  std::string to_markdown() const;
};

/// Scores each checkpoint on the refocus protocol. Throws std::runtime_error
/// when a checkpoint is missing.
AblationTable run_ablations(const std::vector<EvalScene>& scenes, const std::vector<AblationEntry>& entries,
                            const EvalConfig& config = {});

}  // namespace dualfocus::evalbench
