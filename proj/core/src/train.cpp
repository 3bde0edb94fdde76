#include "dualfocus/train.hpp"

#include <torch/torch.h>

#include <cmath>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

#include "dualfocus/checkpoint.hpp"
#include "dualfocus/tensor_bridge.hpp"

namespace dualfocus::train {

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::w_only: return "w-only";
    case Ablation::uw_only: return "uw-only";
    case Ablation::no_occlusion: return "no-occlusion";
  }
  return "none";
}

Ablation ablation_from_string(const std::string& name) {
  if (name == "none" || name.empty()) return Ablation::none;
  if (name == "w-only") return Ablation::w_only;
  if (name == "uw-only") return Ablation::uw_only;
  if (name == "no-occlusion") return Ablation::no_occlusion;
  throw std::invalid_argument("unknown ablation: " + name);
}

dfnet::ModelConfig apply_ablation(dfnet::ModelConfig config, Ablation ablation) {
  switch (ablation) {
    case Ablation::none: break;
    case Ablation::w_only: config.variant = dfnet::Variant::w_only; break;
    case Ablation::uw_only: config.variant = dfnet::Variant::uw_only; break;
    case Ablation::no_occlusion: config.use_occlusion_input = false; break;
  }
  return config;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (crop < 8 || crop % 8 != 0) throw std::invalid_argument("train: crop must be a positive multiple of 8");
  if (steps1 < 0 || steps2 < 0) throw std::invalid_argument("train: steps must be >= 0");
  if (!(lr_phase1 > 0.0) || !(lr_phase2 > 0.0)) throw std::invalid_argument("train: learning rates must be > 0");
  if (log_every < 1) throw std::invalid_argument("train: log_every must be >= 1");
  model.validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"batch_size", batch_size},
          {"crop", crop},
          {"lr_phase1", lr_phase1},
          {"steps1", steps1},
          {"lr_phase2", lr_phase2},
          {"steps2", steps2},
          {"seed", seed},
          {"weights",
           {{"l1_pixel", weights.l1_pixel},
            {"l1_grad", weights.l1_grad},
            {"ssim", weights.ssim},
            {"perceptual", weights.perceptual}}},
          {"perceptual", perceptual},
          {"ablation", to_string(ablation)},
          {"model", model.to_json()},
          {"ground_truth_occlusion", ground_truth_occlusion},
          {"log_every", log_every},
          {"checkpoint_every", checkpoint_every}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.batch_size = j.value("batch_size", c.batch_size);
  c.crop = j.value("crop", c.crop);
  c.lr_phase1 = j.value("lr_phase1", c.lr_phase1);
  c.steps1 = j.value("steps1", c.steps1);
  c.lr_phase2 = j.value("lr_phase2", c.lr_phase2);
  c.steps2 = j.value("steps2", c.steps2);
  c.seed = j.value("seed", c.seed);
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    c.weights.l1_pixel = w.value("l1_pixel", 1.0);
    c.weights.l1_grad = w.value("l1_grad", 1.0);
    c.weights.ssim = w.value("ssim", 1.0);
    c.weights.perceptual = w.value("perceptual", 1.0);
  }
  c.perceptual = j.value("perceptual", c.perceptual);
  c.ablation = ablation_from_string(j.value("ablation", std::string("none")));
  if (j.contains("model")) c.model = dfnet::ModelConfig::from_json(j.at("model"));
  c.ground_truth_occlusion = j.value("ground_truth_occlusion", c.ground_truth_occlusion);
  c.log_every = j.value("log_every", c.log_every);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.validate();
  return c;
}

SceneTensors prepare_scene(const dataset::StoredScene& scene, bool ground_truth_occlusion) {
  SceneTensors t;
  t.width = scene.width();
  t.height = scene.height();
  std::vector<torch::Tensor> slices;
  std::vector<torch::Tensor> defocus;
  for (std::size_t i = 0; i < scene.slice_count(); ++i) {
    slices.push_back(to_tensor(scene.w_slices[i]));
    defocus.push_back(to_tensor(scene.defocus(i).radius_px));
  }
  t.slices = torch::stack(slices);
  t.defocus = torch::stack(defocus);
  t.uw_warped = to_tensor(scene.warped_uw());
  t.occlusion = to_tensor(ground_truth_occlusion ? scene.occlusion_gt : scene.occlusion);
  return t;
}

std::pair<int, int> sample_pair(int n_slices, std::mt19937_64& rng) {
  if (n_slices < 2) throw std::invalid_argument("sample_pair: need at least 2 slices");
  const int ref = std::uniform_int_distribution<int>(0, n_slices - 1)(rng);
  int tgt = std::uniform_int_distribution<int>(0, n_slices - 2)(rng);
  if (tgt >= ref) ++tgt;
  return {ref, tgt};
}

Batch assemble_batch(const std::vector<SceneTensors>& scenes, const std::vector<PairCrop>& crops, int crop) {
  std::vector<torch::Tensor> w, uw, occ, ref, tgt, radial, target;
  for (const auto& c : crops) {
    const auto& s = scenes.at(static_cast<std::size_t>(c.scene));
    if (c.x0 < 0 || c.y0 < 0 || c.x0 + crop > s.width || c.y0 + crop > s.height) {
      throw std::out_of_range("assemble_batch: crop outside the scene");
    }
    auto window = [&](const torch::Tensor& t) { return t.slice(-2, c.y0, c.y0 + crop).slice(-1, c.x0, c.x0 + crop); };
    w.push_back(window(s.slices[c.ref]));
    target.push_back(window(s.slices[c.tgt]));
    ref.push_back(window(s.defocus[c.ref]));
    tgt.push_back(window(s.defocus[c.tgt]));
    uw.push_back(window(s.uw_warped));
    occ.push_back(window(s.occlusion));
    radial.push_back(to_tensor(dfnet::radial_mask(s.width, s.height, c.x0, c.y0, crop, crop)));
  }
  Batch b;
  b.input = {torch::stack(w), torch::stack(uw), torch::stack(occ), torch::stack(ref), torch::stack(tgt),
             torch::stack(radial)};
  b.target = torch::stack(target);
  b.crops = crops;
  return b;
}

Batch crop_batch(const std::vector<SceneTensors>& scenes, int batch_size, int crop, std::mt19937_64& rng) {
  if (scenes.empty()) throw std::invalid_argument("crop_batch: no scenes");
  std::vector<PairCrop> crops;
  for (int i = 0; i < batch_size; ++i) {
    PairCrop c;
    c.scene = std::uniform_int_distribution<int>(0, static_cast<int>(scenes.size()) - 1)(rng);
    const auto& s = scenes[static_cast<std::size_t>(c.scene)];
    if (crop > s.width || crop > s.height) throw std::invalid_argument("crop_batch: crop larger than the scene");
    std::tie(c.ref, c.tgt) = sample_pair(static_cast<int>(s.slice_count()), rng);
    c.x0 = std::uniform_int_distribution<int>(0, s.width - crop)(rng);
    c.y0 = std::uniform_int_distribution<int>(0, s.height - crop)(rng);
    crops.push_back(c);
  }
  return assemble_batch(scenes, crops, crop);
}

TrainResult train(const std::vector<dataset::StoredScene>& scenes, const TrainConfig& config,
                  const std::filesystem::path& checkpoint_path, std::ostream* log_csv, const StepCallback& on_step) {
  config.validate();
  if (scenes.empty()) throw std::invalid_argument("train: empty dataset");
  std::vector<SceneTensors> data;
  for (const auto& s : scenes) data.push_back(prepare_scene(s, config.ground_truth_occlusion));

  TrainResult result;
  result.model = dfnet::build_model(apply_ablation(config.model, config.ablation));
  result.model->train();
  const auto perceptual = loss::make_backend(config.perceptual);
  torch::optim::Adam optimizer(result.model->parameters(), torch::optim::AdamOptions(config.lr_phase1));
  std::mt19937_64 rng(config.seed);
  const nlohmann::json extra = {{"train", config.to_json()}};

  if (log_csv != nullptr) *log_csv << "step,lr,l1_pixel,l1_grad,ssim,perceptual,total\n";
  auto write_row = [&](const LogRow& row) {
    if (log_csv == nullptr) return;
    *log_csv << fmt::format("{},{:.3g},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}\n", row.step, row.lr, row.terms.l1_pixel,
                            row.terms.l1_grad, row.terms.ssim, row.terms.perceptual, row.terms.total);
    log_csv->flush();
  };

  double current_lr = config.lr_phase1;
  for (int step = 0; step < config.total_steps(); ++step) {
    const double lr = config.lr_at(step);
    if (lr != current_lr) {
      for (auto& group : optimizer.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
      current_lr = lr;
    }
    const auto batch = crop_batch(data, config.batch_size, config.crop, rng);
    const auto out = result.model->forward(batch.input);
    const auto breakdown = loss::loss_total(out.blended, batch.target, perceptual.get(), config.weights);
    if (!std::isfinite(breakdown.summed.total)) {
      throw std::runtime_error(fmt::format("train: non-finite loss at step {} (l1 {}, grad {}, ssim {}, perceptual {})",
                                           step, breakdown.summed.l1_pixel, breakdown.summed.l1_grad,
                                           breakdown.summed.ssim, breakdown.summed.perceptual));
    }
    optimizer.zero_grad();
    breakdown.total.backward();
    optimizer.step();

    const LogRow row{step, lr, breakdown.summed};
    result.history.push_back(row);
    if (step % config.log_every == 0 || step + 1 == config.total_steps()) write_row(row);
    if (on_step) on_step(row);
    if (config.checkpoint_every > 0 && !checkpoint_path.empty() && (step + 1) % config.checkpoint_every == 0) {
      checkpoint::save(checkpoint_path, result.model, extra);
    }
  }
  result.model->eval();
  if (!checkpoint_path.empty()) {
    result.checkpoint_id = checkpoint::save(checkpoint_path, result.model, extra);
  } else {
    result.checkpoint_id = io::sha256_hex(checkpoint::serialize(result.model, extra));
  }
  return result;
}

TrainResult train(const std::filesystem::path& dataset_dir, const TrainConfig& config,
                  const std::filesystem::path& checkpoint_path, std::ostream* log_csv, const StepCallback& on_step) {
  return train(dataset::load_dataset(dataset_dir), config, checkpoint_path, log_csv, on_step);
}

}  // namespace dualfocus::train
