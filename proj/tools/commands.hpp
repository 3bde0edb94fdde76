#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace dualfocus::cli {

struct GenDataOptions {
  int scenes = 8;
  int slices = 10;
  std::string out;
  double baseline_mm = 4.0;
  double color_jitter = 0.03;
  int width = 256;
  int height = 256;
};

struct TrainOptions {
  std::string data;
  std::string out;
  int steps1 = 2000;
  int steps2 = 1000;
  int batch = 8;
  int crop = 256;
  double lr1 = 1e-4;
  double lr2 = 1e-5;
  int base_channels = 4;
  std::string ablation = "none";
  std::string perceptual = "random";
  std::string log;
  int log_every = 50;
  int checkpoint_every = 0;
};

struct EvalOptions {
  std::string task = "all";
  std::string ckpt;
  std::string data;
  std::string out;
  bool merged_aif = false;
  bool baselines = true;
  std::vector<std::string> ablations;  // name=path
  std::string ablation_md;
};

/// Inputs shared by refocus, effect and inspect: one capture plus the model.
struct CaptureOptions {
  std::string ckpt;
  std::string w;
  std::string uw;
  bool uw_prewarped = false;
  std::string occlusion;
  std::string depth;
  std::string rig;
  double ref_focus_mm = 1000.0;
  std::string out;
  int max_tile = 512;
  int overlap = 32;
};

struct RefocusOptions {
  double focus_mm = 1000.0;
  double aperture_mm = 4.0;
  std::string spec;  // JSON file, overrides focus/aperture
};

struct EffectOptions {
  std::string kind;  // tiltshift | all-in-focus | masked
  double slope = 0.05;
  double angle_deg = 0.0;
  std::vector<double> point;
  double max_radius = 8.0;
  std::string mask;
  double fg_radius = 0.0;
  double bg_radius = 8.0;
};

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string store = "sessions";
  std::string ckpt;
  int max_tile = 512;
  int overlap = 32;
};

/// Global flags plus the resolved option values of the chosen subcommand.
struct Context {
  std::uint64_t seed = 0;
  bool verbose = false;
  nlohmann::json resolved;
};

int run_gen_data(const Context& ctx, const GenDataOptions& o);
int run_train(const Context& ctx, const TrainOptions& o);
int run_eval(const Context& ctx, const EvalOptions& o);
int run_refocus(const Context& ctx, const CaptureOptions& c, const RefocusOptions& o);
int run_effect(const Context& ctx, const CaptureOptions& c, const EffectOptions& o);
int run_inspect(const Context& ctx, const CaptureOptions& c, const RefocusOptions& o);
int run_serve(const Context& ctx, const ServeOptions& o);

/// JSON spec an effect preset stands for (same schema as the HTTP API).
nlohmann::json effect_spec(const EffectOptions& o);

/// Reproducibility header on stderr: command, seed, config hash, checkpoint id.
void print_header(const Context& ctx, const std::string& command, const std::string& checkpoint_id);

}  // namespace dualfocus::cli
