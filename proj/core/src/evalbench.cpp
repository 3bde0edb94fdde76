#include "dualfocus/evalbench.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "dualfocus/checkpoint.hpp"
#include "dualfocus/synthcam.hpp"
#include "dualfocus/train.hpp"

namespace dualfocus::evalbench {
namespace {

std::string format_psnr(double v) { return std::isinf(v) ? "inf" : fmt::format("{:.4f}", v); }

inference::Planes planes_for(const EvalScene& s, const Image& w, const Image& ref, const Image& tgt) {
  return {w, s.uw_warped, s.occlusion, ref, tgt};
}

Image zeros_like_plane(const Image& img) { return Image(img.width(), img.height(), 1); }

}  // namespace

Predictor model_predictor(dfnet::DetailFusionNet model, const inference::TileConfig& tiles) {
  return [model, tiles](const inference::Planes& planes, const Image&) mutable {
    return inference::predict(model, planes, tiles);
  };
}

Predictor copy_input_predictor() {
  return [](const inference::Planes& planes, const Image&) { return planes.w; };
}

Predictor oracle_predictor() {
  return [](const inference::Planes&, const Image& truth) { return truth; };
}

void MetricReport::finalize() {
  if (rows.empty()) {
    mean_psnr = mean_ssim = 0.0;
    return;
  }
  double psnr_sum = 0.0;
  double ssim_sum = 0.0;
  for (const auto& r : rows) {
    psnr_sum += r.psnr;
    ssim_sum += r.ssim;
  }
  mean_psnr = psnr_sum / static_cast<double>(rows.size());
  mean_ssim = ssim_sum / static_cast<double>(rows.size());
}

void MetricReport::write_csv(std::ostream& os, bool header) const {
  if (header) os << "task,method,checkpoint,scene,ref,tgt,psnr,ssim,align_scale,align_tx,align_ty\n";
  for (const auto& r : rows) {
    os << fmt::format("{},{},{},{},{},{},{},{:.6f},{:.4f},{:.3f},{:.3f}\n", task, method, checkpoint_id, r.scene, r.ref,
                      r.tgt, format_psnr(r.psnr), r.ssim, r.align.scale, r.align.tx, r.align.ty);
  }
  os << fmt::format("{},{},{},mean,,,{},{:.6f},,,\n", task, method, checkpoint_id, format_psnr(mean_psnr), mean_ssim);
}

std::vector<EvalScene> prepare(const std::vector<dataset::StoredScene>& scenes, const EvalConfig& config) {
  std::vector<EvalScene> out;
  for (const auto& s : scenes) {
    EvalScene e;
    e.scene = &s;
    e.uw_warped = s.warped_uw();
    e.occlusion = s.occlusion;
    for (std::size_t i = 0; i < s.slice_count(); ++i) e.defocus.push_back(s.defocus(i).radius_px);
    e.aif_reference = config.merged_aif ? synthcam::focus_stack_merge(s.w_slices) : s.aif;
    out.push_back(std::move(e));
  }
  return out;
}

MetricReport eval_deblur(const Predictor& predictor, const std::vector<EvalScene>& scenes, const EvalConfig& config,
                         const std::string& method) {
  MetricReport report{"deblur", method, {}, {}, 0.0, 0.0};
  for (std::size_t si = 0; si < scenes.size(); ++si) {
    const auto& s = scenes[si];
    const Image zeros = zeros_like_plane(s.aif_reference);
    for (std::size_t i = 0; i < s.scene->slice_count(); ++i) {
      const Image out = predictor(planes_for(s, s.scene->w_slices[i], s.defocus[i], zeros), s.aif_reference);
      const auto aligned = metrics::fov_align(out, s.aif_reference, config.align);
      report.rows.push_back({static_cast<int>(si), static_cast<int>(i), -1,
                             metrics::psnr(aligned.aligned, s.aif_reference),
                             metrics::ssim(aligned.aligned, s.aif_reference), aligned.params});
    }
  }
  report.finalize();
  return report;
}

MetricReport eval_bokeh(const Predictor& predictor, const std::vector<EvalScene>& scenes, const EvalConfig&,
                        const std::string& method) {
  MetricReport report{"bokeh", method, {}, {}, 0.0, 0.0};
  for (std::size_t si = 0; si < scenes.size(); ++si) {
    const auto& s = scenes[si];
    const Image zeros = zeros_like_plane(s.scene->aif);
    for (std::size_t i = 0; i < s.scene->slice_count(); ++i) {
      const Image& truth = s.scene->w_slices[i];
      const Image out = predictor(planes_for(s, s.scene->aif, zeros, s.defocus[i]), truth);
      report.rows.push_back({static_cast<int>(si), -1, static_cast<int>(i), metrics::psnr(out, truth),
                             metrics::ssim(out, truth), {}});
    }
  }
  report.finalize();
  return report;
}

MetricReport eval_bokeh_classical(const std::vector<EvalScene>& scenes) {
  MetricReport report{"bokeh", "classical-renderer", {}, {}, 0.0, 0.0};
  for (std::size_t si = 0; si < scenes.size(); ++si) {
    const auto& stored = *scenes[si].scene;
    synthcam::SceneRGBD scene;
    scene.aif = stored.aif;
    scene.depth = stored.depth;
    for (std::size_t i = 0; i < stored.slice_count(); ++i) {
      const Image out = synthcam::render_defocused(scene, stored.rig.w_cam, stored.lenses[i]).image;
      const Image& truth = stored.w_slices[i];
      report.rows.push_back({static_cast<int>(si), -1, static_cast<int>(i), metrics::psnr(out, truth),
                             metrics::ssim(out, truth), {}});
    }
  }
  report.finalize();
  return report;
}

std::vector<ImageScore> refocus_pairs(const std::vector<EvalScene>& scenes, const EvalConfig& config) {
  std::mt19937_64 rng(config.seed);
  std::vector<ImageScore> pairs;
  for (std::size_t si = 0; si < scenes.size(); ++si) {
    const int n = static_cast<int>(scenes[si].scene->slice_count());
    const int count = config.refocus_pairs_per_scene > 0 ? config.refocus_pairs_per_scene : n;
    for (int k = 0; k < count; ++k) {
      const auto [ref, tgt] = train::sample_pair(n, rng);
      pairs.push_back({static_cast<int>(si), ref, tgt, 0.0, 0.0, {}});
    }
  }
  return pairs;
}

MetricReport eval_refocus(const Predictor& predictor, const std::vector<EvalScene>& scenes, const EvalConfig& config,
                          const std::string& method) {
  MetricReport report{"refocus", method, {}, {}, 0.0, 0.0};
  for (auto row : refocus_pairs(scenes, config)) {
    const auto& s = scenes[static_cast<std::size_t>(row.scene)];
    const auto ref = static_cast<std::size_t>(row.ref);
    const auto tgt = static_cast<std::size_t>(row.tgt);
    const Image& truth = s.scene->w_slices[tgt];
    const Image out = predictor(planes_for(s, s.scene->w_slices[ref], s.defocus[ref], s.defocus[tgt]), truth);
    row.psnr = metrics::psnr(out, truth);
    row.ssim = metrics::ssim(out, truth);
    report.rows.push_back(row);
  }
  report.finalize();
  return report;
}

void AblationTable::write_csv(std::ostream& os) const {
  os << "config,checkpoint,refocus_psnr,refocus_ssim\n";
  for (const auto& r : reports) {
    os << fmt::format("{},{},{},{:.6f}\n", r.method, r.checkpoint_id, format_psnr(r.mean_psnr), r.mean_ssim);
  }
}

std::string AblationTable::to_markdown() const {
  std::ostringstream os;
  os << "| config | refocus PSNR (dB) | refocus SSIM |\n|---|---|---|\n";
  for (const auto& r : reports) {
    os << fmt::format("| {} | {} | {:.4f} |\n", r.method, format_psnr(r.mean_psnr), r.mean_ssim);
  }
  return os.str();
}

AblationTable run_ablations(const std::vector<EvalScene>& scenes, const std::vector<AblationEntry>& entries,
                            const EvalConfig& config) {
  AblationTable table;
  for (const auto& entry : entries) {
    if (!std::filesystem::exists(entry.checkpoint)) {
      throw std::runtime_error("run_ablations: missing checkpoint " + entry.checkpoint.string());
    }
    auto loaded = checkpoint::load(entry.checkpoint);
    auto report = eval_refocus(model_predictor(loaded.model), scenes, config, entry.name);
    report.checkpoint_id = loaded.id;
    table.reports.push_back(std::move(report));
  }
  return table;
}

}  // namespace dualfocus::evalbench
