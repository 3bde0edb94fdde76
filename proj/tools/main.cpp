// dualfocus: data generation, training, evaluation, rendering and serving.
//
// Option precedence: command-line flags, then DC2_* environment variables,
// then the JSON file given with --config, then built-in defaults. The config
// file uses flag names as keys: global flags at the top level, subcommand
// flags inside an object named after the subcommand.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "commands.hpp"
#include "dualfocus/io.hpp"

namespace {

using dualfocus::cli::CaptureOptions;

std::string config_path_from_argv(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return argv[i + 1];
    if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
  }
  return {};
}

std::string json_scalar(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  return v.dump();
}

// Installs config-file values as defaults so flags and env still win.
void apply_config(CLI::App& app, const nlohmann::json& section) {
  for (const auto& [key, value] : section.items()) {
    if (value.is_object()) continue;
    CLI::Option* opt = nullptr;
    try {
      opt = app.get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
      throw CLI::ValidationError("config", "unknown key '" + key + "' for " + (app.get_name().empty() ? "global options" : app.get_name()));
    }
    if (value.is_array()) {
      std::vector<std::string> items;
      for (const auto& item : value) items.push_back(json_scalar(item));
      opt->default_val(items);
    } else {
      opt->default_val(json_scalar(value));
    }
  }
}

nlohmann::json resolved_options(const CLI::App& app) {
  nlohmann::json out = nlohmann::json::object();
  for (const CLI::Option* opt : app.get_options()) {
    const std::string name = opt->get_name();
    if (name == "--help" || name == "--help-all" || name == "--config" || name.empty()) continue;
    const auto results = opt->results();
    if (results.size() == 1) {
      out[opt->get_name()] = results.front();
    } else if (!results.empty()) {
      out[opt->get_name()] = results;
    } else {
      out[opt->get_name()] = opt->get_default_str();
    }
  }
  return out;
}

void add_capture_options(CLI::App* cmd, CaptureOptions& c) {
  cmd->add_option("--ckpt", c.ckpt, "Checkpoint file")->required()->envname("DC2_CKPT");
  cmd->add_option("--w", c.w, "Wide image (PNG)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--uw", c.uw, "Ultra-wide image (PNG)")->required()->check(CLI::ExistingFile);
  cmd->add_flag("--uw-prewarped", c.uw_prewarped, "The UW image is already aligned to W");
  cmd->add_option("--occlusion", c.occlusion, "Occlusion mask (PNG, 1 = unreliable UW)")->check(CLI::ExistingFile);
  cmd->add_option("--depth", c.depth, "Depth map (raw float, mm)")->check(CLI::ExistingFile);
  cmd->add_option("--rig", c.rig, "Camera rig JSON")->check(CLI::ExistingFile);
  cmd->add_option("--ref-focus-mm", c.ref_focus_mm, "Focus distance of the W capture")->capture_default_str();
  cmd->add_option("--out", c.out, "Output PNG")->required();
  cmd->add_option("--max-tile", c.max_tile, "Largest inference tile")->capture_default_str();
  cmd->add_option("--overlap", c.overlap, "Overlap between tiles")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  namespace cli = dualfocus::cli;
  CLI::App app{"Dual-camera defocus control"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");
  // Lets global flags such as --seed follow the subcommand.
  app.fallthrough();

  cli::Context ctx;
  std::string config_file;
  app.add_option("--seed", ctx.seed, "Random seed")->envname("DC2_SEED")->capture_default_str();
  app.add_flag("-v,--verbose", ctx.verbose, "Verbose progress output");
  app.add_option("--config", config_file, "JSON config file")->check(CLI::ExistingFile);

  cli::GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic focus-stack dataset");
  gen_cmd->add_option("--scenes", gen.scenes, "Number of scenes")->capture_default_str();
  gen_cmd->add_option("--slices", gen.slices, "Focus slices per scene")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required()->envname("DC2_DATA");
  gen_cmd->add_option("--baseline-mm", gen.baseline_mm, "Camera baseline")->capture_default_str();
  gen_cmd->add_option("--color-jitter", gen.color_jitter, "UW white-balance jitter")->capture_default_str();
  gen_cmd->add_option("--width", gen.width, "Image width")->capture_default_str();
  gen_cmd->add_option("--height", gen.height, "Image height")->capture_default_str();

  cli::TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "Train on the refocus proxy task");
  train_cmd->add_option("--data", tr.data, "Dataset directory")->required()->envname("DC2_DATA");
  train_cmd->add_option("--out", tr.out, "Checkpoint output")->required();
  train_cmd->add_option("--steps1", tr.steps1, "Steps at the first learning rate")->capture_default_str();
  train_cmd->add_option("--steps2", tr.steps2, "Steps at the second learning rate")->capture_default_str();
  train_cmd->add_option("--batch", tr.batch, "Batch size")->capture_default_str();
  train_cmd->add_option("--crop", tr.crop, "Crop size (multiple of 8)")->capture_default_str();
  train_cmd->add_option("--lr1", tr.lr1, "First learning rate")->capture_default_str();
  train_cmd->add_option("--lr2", tr.lr2, "Second learning rate")->capture_default_str();
  train_cmd->add_option("--base-channels", tr.base_channels, "Model width")->capture_default_str();
  train_cmd->add_option("--ablation", tr.ablation, "Input ablation")
      ->check(CLI::IsMember({"none", "w-only", "uw-only", "no-occlusion"}))
      ->capture_default_str();
  train_cmd->add_option("--perceptual", tr.perceptual, "Perceptual backend")
      ->check(CLI::IsMember({"random", "none"}))
      ->capture_default_str();
  train_cmd->add_option("--log", tr.log, "Loss log CSV (default: <out>.log.csv)");
  train_cmd->add_option("--log-every", tr.log_every, "Log interval")->capture_default_str();
  train_cmd->add_option("--checkpoint-every", tr.checkpoint_every, "Intermediate checkpoint interval")
      ->capture_default_str();

  cli::EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on deblur, bokeh and refocus");
  eval_cmd->add_option("--task", ev.task, "Task")
      ->check(CLI::IsMember({"deblur", "bokeh", "refocus", "all"}))
      ->capture_default_str();
  eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint")->required()->envname("DC2_CKPT");
  eval_cmd->add_option("--data", ev.data, "Dataset directory")->required()->envname("DC2_DATA");
  eval_cmd->add_option("--out", ev.out, "Report CSV (default: stdout)");
  eval_cmd->add_flag("--merged-aif", ev.merged_aif, "Score deblur against the focus-stack merge");
  eval_cmd->add_flag("!--no-baselines", ev.baselines, "Skip baseline rows");
  eval_cmd->add_option("--ablation", ev.ablations, "Extra refocus comparison, name=checkpoint");
  eval_cmd->add_option("--ablation-md", ev.ablation_md, "Markdown table of the ablation comparison");

  CaptureOptions refocus_capture;
  cli::RefocusOptions refocus;
  auto* refocus_cmd = app.add_subcommand("refocus", "Render one capture with a new focus distance and aperture");
  add_capture_options(refocus_cmd, refocus_capture);
  refocus_cmd->add_option("--focus-mm", refocus.focus_mm, "Target focus distance")->capture_default_str();
  refocus_cmd->add_option("--aperture-mm", refocus.aperture_mm, "Target aperture diameter")->capture_default_str();
  refocus_cmd->add_option("--spec", refocus.spec, "Defocus spec JSON (overrides focus/aperture)")
      ->check(CLI::ExistingFile);

  CaptureOptions effect_capture;
  cli::EffectOptions effect;
  auto* effect_cmd = app.add_subcommand("effect", "Render an effect preset");
  effect_cmd->add_option("kind", effect.kind, "Preset")
      ->required()
      ->check(CLI::IsMember({"tiltshift", "all-in-focus", "masked"}));
  add_capture_options(effect_cmd, effect_capture);
  effect_cmd->add_option("--slope", effect.slope, "Tilt-shift blur per px from the focus line")->capture_default_str();
  effect_cmd->add_option("--angle-deg", effect.angle_deg, "Tilt-shift focus line angle")->capture_default_str();
  effect_cmd->add_option("--point", effect.point, "Point on the focus line (x y)")->expected(2);
  effect_cmd->add_option("--max-radius", effect.max_radius, "Tilt-shift blur cap")->capture_default_str();
  effect_cmd->add_option("--mask", effect.mask, "Foreground mask PNG")->check(CLI::ExistingFile);
  effect_cmd->add_option("--fg-radius", effect.fg_radius, "Blur inside the mask")->capture_default_str();
  effect_cmd->add_option("--bg-radius", effect.bg_radius, "Blur outside the mask")->capture_default_str();

  CaptureOptions inspect_capture;
  cli::RefocusOptions inspect;
  auto* inspect_cmd = app.add_subcommand("inspect", "Write refined images and blending masks as a panel");
  add_capture_options(inspect_cmd, inspect_capture);
  inspect_cmd->add_option("--focus-mm", inspect.focus_mm, "Target focus distance")->capture_default_str();
  inspect_cmd->add_option("--aperture-mm", inspect.aperture_mm, "Target aperture diameter")->capture_default_str();
  inspect_cmd->add_option("--spec", inspect.spec, "Defocus spec JSON")->check(CLI::ExistingFile);

  cli::ServeOptions serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  serve_cmd->add_option("--host", serve.host, "Bind address")->capture_default_str();
  serve_cmd->add_option("--port", serve.port, "Port")->envname("DC2_PORT")->capture_default_str();
  serve_cmd->add_option("--store", serve.store, "Session store directory")->envname("DC2_STORE")->capture_default_str();
  serve_cmd->add_option("--ckpt", serve.ckpt, "Checkpoint")->envname("DC2_CKPT");
  serve_cmd->add_option("--max-tile", serve.max_tile, "Largest inference tile")->capture_default_str();
  serve_cmd->add_option("--overlap", serve.overlap, "Overlap between tiles")->capture_default_str();

  try {
    const std::string pre_config = config_path_from_argv(argc, argv);
    if (!pre_config.empty()) {
      const auto bytes = dualfocus::io::read_file(pre_config);
      const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
      apply_config(app, j);
      for (auto* sub : app.get_subcommands({})) {
        if (j.contains(sub->get_name())) apply_config(*sub, j.at(sub->get_name()));
      }
    }
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    auto* sub = app.get_subcommands().front();
    ctx.resolved = resolved_options(app);
    ctx.resolved[sub->get_name()] = resolved_options(*sub);
    if (sub == gen_cmd) return cli::run_gen_data(ctx, gen);
    if (sub == train_cmd) return cli::run_train(ctx, tr);
    if (sub == eval_cmd) return cli::run_eval(ctx, ev);
    if (sub == refocus_cmd) return cli::run_refocus(ctx, refocus_capture, refocus);
    if (sub == effect_cmd) return cli::run_effect(ctx, effect_capture, effect);
    if (sub == inspect_cmd) return cli::run_inspect(ctx, inspect_capture, inspect);
    if (sub == serve_cmd) return cli::run_serve(ctx, serve) == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
