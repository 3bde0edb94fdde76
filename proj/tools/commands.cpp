#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <fmt/format.h>
#include <torch/torch.h>

#include "dualfocus/checkpoint.hpp"
#include "dualfocus/dataset.hpp"
#include "dualfocus/evalbench.hpp"
#include "dualfocus/http_api.hpp"
#include "dualfocus/inference.hpp"
#include "dualfocus/io.hpp"
#include "dualfocus/service.hpp"
#include "dualfocus/train.hpp"

namespace dualfocus::cli {
namespace fs = std::filesystem;
namespace {

nlohmann::json read_json(const fs::path& path) {
  const auto bytes = io::read_file(path);
  return nlohmann::json::parse(bytes.begin(), bytes.end());
}

service::Session load_capture(const CaptureOptions& c) {
  service::CreateRequest req;
  req.w = io::read_png(c.w);
  req.uw = io::read_png(c.uw);
  req.uw_prewarped = c.uw_prewarped;
  if (!c.occlusion.empty()) {
    Image occ = io::read_png(c.occlusion);
    req.occlusion = occ.channels() == 1 ? occ : luminance(occ);
  }
  if (!c.depth.empty()) req.depth = optics::DepthMap{io::read_raw(c.depth, 1)};
  if (!c.rig.empty()) req.rig = synthcam::rig_from_json(read_json(c.rig));
  req.ref_lens = optics::LensState{c.ref_focus_mm};
  auto session = service::build_session(req);
  session.id = "cli";
  return session;
}

fs::path sidecar_path(const fs::path& out) {
  fs::path p = out;
  p.replace_extension(".json");
  return p;
}

int render_and_write(const Context& ctx, const std::string& command, const CaptureOptions& c,
                     const nlohmann::json& spec_json) {
  auto loaded = checkpoint::load(c.ckpt);
  print_header(ctx, command, loaded.id);
  const auto session = load_capture(c);
  service::Renderer renderer(loaded.model, loaded.id, {c.max_tile, c.overlap});
  const auto result = renderer.render(session, service::spec_from_json(spec_json));
  io::write_file_atomic(c.out, io::encode_png(result.image));
  io::write_text_atomic(sidecar_path(c.out), result.provenance.dump(2));
  if (ctx.verbose) std::cerr << result.provenance.dump(2) << "\n";
  std::cout << c.out << "\n";
  return 0;
}

nlohmann::json refocus_spec(const RefocusOptions& o) {
  if (!o.spec.empty()) return read_json(o.spec);
  return {{"type", "physical"}, {"aperture_mm", o.aperture_mm}, {"focus_distance_mm", o.focus_mm}};
}

}  // namespace

void print_header(const Context& ctx, const std::string& command, const std::string& checkpoint_id) {
  const std::string resolved = ctx.resolved.dump();
  const std::string hash = io::sha256_hex({reinterpret_cast<const std::uint8_t*>(resolved.data()), resolved.size()});
  std::cerr << fmt::format("# dualfocus {} seed={} config={} checkpoint={}\n", command, ctx.seed, hash.substr(0, 16),
                           checkpoint_id.empty() ? "none" : checkpoint_id);
  if (ctx.verbose) std::cerr << "# resolved " << resolved << "\n";
}

int run_gen_data(const Context& ctx, const GenDataOptions& o) {
  print_header(ctx, "gen-data", "none");
  dataset::BuildOptions b;
  b.n_scenes = o.scenes;
  b.n_slices = o.slices;
  b.seed = ctx.seed;
  b.width = o.width;
  b.height = o.height;
  b.baseline_mm = o.baseline_mm;
  b.color_jitter = o.color_jitter;
  const auto dirs = dataset::build_dataset(o.out, b);
  for (const auto& d : dirs) {
    if (ctx.verbose) std::cerr << d.string() << "\n";
  }
  std::cout << fmt::format("wrote {} scenes x {} slices to {}\n", dirs.size(), o.slices, o.out);
  return 0;
}

int run_train(const Context& ctx, const TrainOptions& o) {
  print_header(ctx, "train", "none");
  train::TrainConfig cfg;
  cfg.batch_size = o.batch;
  cfg.crop = o.crop;
  cfg.steps1 = o.steps1;
  cfg.steps2 = o.steps2;
  cfg.lr_phase1 = o.lr1;
  cfg.lr_phase2 = o.lr2;
  cfg.seed = ctx.seed;
  cfg.perceptual = o.perceptual;
  cfg.ablation = train::ablation_from_string(o.ablation);
  cfg.model.base_channels = o.base_channels;
  cfg.model.seed = ctx.seed;
  cfg.log_every = o.log_every;
  cfg.checkpoint_every = o.checkpoint_every;
  cfg.validate();

  const fs::path log_path = o.log.empty() ? fs::path(o.out + ".log.csv") : fs::path(o.log);
  if (log_path.has_parent_path()) fs::create_directories(log_path.parent_path());
  std::ofstream log(log_path);
  if (!log) throw std::runtime_error("cannot open log " + log_path.string());
  const int total = cfg.total_steps();
  auto progress = [&](const train::LogRow& row) {
    if (ctx.verbose && (row.step % cfg.log_every == 0 || row.step + 1 == total)) {
      std::cerr << fmt::format("step {}/{} lr {:.1e} loss {:.4f}\n", row.step + 1, total, row.lr, row.terms.total);
    }
  };
  const auto result = train::train(fs::path(o.data), cfg, o.out, &log, progress);
  const double first = result.history.empty() ? 0.0 : result.history.front().terms.total;
  const double last = result.history.empty() ? 0.0 : result.history.back().terms.total;
  std::cout << fmt::format("checkpoint {} ({}), loss {:.4f} -> {:.4f}, log {}\n", o.out, result.checkpoint_id, first,
                           last, log_path.string());
  return 0;
}

int run_eval(const Context& ctx, const EvalOptions& o) {
  auto loaded = checkpoint::load(o.ckpt);
  print_header(ctx, "eval", loaded.id);
  const auto scenes = dataset::load_dataset(o.data);
  if (scenes.empty()) throw std::runtime_error("no scenes in " + o.data);
  evalbench::EvalConfig cfg;
  cfg.seed = ctx.seed;
  cfg.merged_aif = o.merged_aif;
  const auto prepared = evalbench::prepare(scenes, cfg);
  const auto model = evalbench::model_predictor(loaded.model);
  const auto copy = evalbench::copy_input_predictor();

  std::vector<evalbench::MetricReport> reports;
  auto add = [&](evalbench::MetricReport r, const std::string& id) {
    r.checkpoint_id = id;
    reports.push_back(std::move(r));
  };
  const bool all = o.task == "all";
  if (all || o.task == "deblur") {
    add(evalbench::eval_deblur(model, prepared, cfg), loaded.id);
    if (o.baselines) add(evalbench::eval_deblur(copy, prepared, cfg, "copy-input"), "");
  }
  if (all || o.task == "bokeh") {
    add(evalbench::eval_bokeh(model, prepared, cfg), loaded.id);
    if (o.baselines) {
      add(evalbench::eval_bokeh(copy, prepared, cfg, "copy-aif"), "");
      add(evalbench::eval_bokeh_classical(prepared), "");
    }
  }
  if (all || o.task == "refocus") {
    add(evalbench::eval_refocus(model, prepared, cfg), loaded.id);
    if (o.baselines) add(evalbench::eval_refocus(copy, prepared, cfg, "copy-input"), "");
  }
  if (reports.empty()) throw std::invalid_argument("unknown task " + o.task);

  if (o.out.empty()) {
    for (std::size_t i = 0; i < reports.size(); ++i) reports[i].write_csv(std::cout, i == 0);
  } else {
    std::ofstream os(o.out);
    if (!os) throw std::runtime_error("cannot write " + o.out);
    for (std::size_t i = 0; i < reports.size(); ++i) reports[i].write_csv(os, i == 0);
  }
  for (const auto& r : reports) {
    std::cerr << fmt::format("{:8} {:20} PSNR {:8.3f} dB  SSIM {:.4f}  (n={})\n", r.task, r.method, r.mean_psnr,
                             r.mean_ssim, r.rows.size());
  }

  if (!o.ablations.empty()) {
    std::vector<evalbench::AblationEntry> entries;
    for (const auto& item : o.ablations) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--ablation expects name=checkpoint, got " + item);
      entries.push_back({item.substr(0, eq), item.substr(eq + 1)});
    }
    const auto table = evalbench::run_ablations(prepared, entries, cfg);
    const std::string md = table.to_markdown();
    std::cerr << md;
    if (!o.ablation_md.empty()) io::write_text_atomic(o.ablation_md, md);
    if (!o.out.empty()) {
      fs::path csv = o.out;
      csv.replace_extension(".ablations.csv");
      std::ofstream os(csv);
      table.write_csv(os);
    }
  }
  return 0;
}

int run_refocus(const Context& ctx, const CaptureOptions& c, const RefocusOptions& o) {
  return render_and_write(ctx, "refocus", c, refocus_spec(o));
}

nlohmann::json effect_spec(const EffectOptions& o) {
  if (o.kind == "tiltshift") {
    nlohmann::json j = {{"type", "tiltshift"},
                        {"slope_px_per_px", o.slope},
                        {"angle_deg", o.angle_deg},
                        {"max_radius_px", o.max_radius}};
    if (o.point.size() == 2) j["point"] = o.point;
    return j;
  }
  if (o.kind == "all-in-focus") return {{"type", "zeros"}};
  if (o.kind == "masked") {
    if (o.mask.empty()) throw std::invalid_argument("masked effect needs --mask");
    return {{"type", "masked"},
            {"mask_png", io::base64_encode(io::read_file(o.mask))},
            {"fg_radius_px", o.fg_radius},
            {"bg_radius_px", o.bg_radius}};
  }
  throw std::invalid_argument("unknown effect " + o.kind);
}

int run_effect(const Context& ctx, const CaptureOptions& c, const EffectOptions& o) {
  return render_and_write(ctx, "effect", c, effect_spec(o));
}

int run_inspect(const Context& ctx, const CaptureOptions& c, const RefocusOptions& o) {
  auto loaded = checkpoint::load(c.ckpt);
  print_header(ctx, "inspect", loaded.id);
  const auto session = load_capture(c);
  const auto target = service::build_defocus_map(service::spec_from_json(refocus_spec(o)), session);
  const auto planes = session.planes(target.radius_px);
  const auto input = inference::make_input(planes, 0, 0, planes.width(), planes.height());
  loaded.model->eval();
  auto parts = dfnet::inspect(loaded.model, input);
  auto trim = [&](const Image& img) { return img.crop(0, 0, planes.width(), planes.height()); };
  parts = {trim(parts.refined_w), trim(parts.refined_uw), trim(parts.mask_w), trim(parts.mask_uw)};
  io::write_png(c.out, dfnet::intermediates_panel(parts));
  double mean_uw = 0.0;
  for (float v : parts.mask_uw.data()) mean_uw += v;
  mean_uw /= static_cast<double>(parts.mask_uw.size());
  const nlohmann::json info = {{"checkpoint_id", loaded.id},
                               {"panel", "refined_w | refined_uw | mask_w | mask_uw"},
                               {"mean_mask_uw", mean_uw}};
  io::write_text_atomic(sidecar_path(c.out), info.dump(2));
  std::cout << c.out << "\n";
  return 0;
}

int run_serve(const Context& ctx, const ServeOptions& o) {
  http_api::ServerConfig cfg;
  cfg.host = o.host;
  cfg.port = o.port;
  cfg.store = o.store;
  cfg.checkpoint = o.ckpt;
  cfg.tiles = {o.max_tile, o.overlap};
  print_header(ctx, "serve", o.ckpt.empty() ? "none" : checkpoint::load(o.ckpt).id);
  return http_api::serve(cfg);
}

}  // namespace dualfocus::cli
