#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "slm/checkpoint.hpp"
#include "slm/dataset.hpp"
#include "slm/experiment.hpp"
#include "slm/geometry.hpp"
#include "slm/gradcheck.hpp"
#include "slm/image_io.hpp"
#include "slm/models.hpp"
#include "slm/ops.hpp"
#include "slm/phantom.hpp"
#include "slm/preprocess.hpp"
#include "slm/training.hpp"

using namespace slm;
using nlohmann::json;

namespace {

// Paper-replication settings: lr 1e-5, batch 4, rotations in [0, 20] degrees,
// decay grid {1e-6, 1e-7, 1e-8}. The defaults elsewhere are sized for a
// single desktop core.
void apply_faithful(training::TrainPlan& plan) {
  plan.adam.lr = 1e-5;
  plan.batch_size = 4;
  plan.augmentation.rotation_min_deg = 0.0;
  plan.augmentation.rotation_max_deg = 20.0;
}

std::vector<double> parse_grid(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
  if (out.empty()) throw CLI::ValidationError("--wd-grid", "empty grid");
  return out;
}

std::vector<std::string> parse_methods(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  return out;
}

int run_gradchecks() {
  Rng rng(99);
  auto randn = [&](std::vector<int> shape) {
    Tensor t = Tensor::zeros(shape, true);
    for (double& v : t.data()) v = rng.normal();
    return t;
  };
  auto positive = [&](std::vector<int> shape) {
    Tensor t = Tensor::zeros(shape, true);
    for (double& v : t.data()) v = rng.uniform(0.05, 0.95);
    return t;
  };

  std::vector<GradCheckResult> results;
  results.push_back(grad_check(
      "conv2d",
      [](const std::vector<Tensor>& in) { return ops::conv2d(in[0], in[1], in[2], 1, 1); },
      {randn({2, 3, 6, 7}), randn({4, 3, 3, 3}), randn({4})}, 1e-6));
  results.push_back(grad_check(
      "conv_transpose2x2_s2",
      [](const std::vector<Tensor>& in) { return ops::conv_transpose2x2_s2(in[0], in[1]); },
      {randn({2, 4, 3, 5}), randn({4, 2, 2, 2})}, 1e-6));
  results.push_back(grad_check(
      "max_pool2",
      [](const std::vector<Tensor>& in) { return ops::max_pool2(in[0]); },
      {randn({2, 3, 4, 6})}, 1e-5));
  results.push_back(grad_check(
      "batch_norm",
      [](const std::vector<Tensor>& in) {
        BatchNormState st = BatchNormState::make(3);
        return ops::batch_norm(in[0], in[1], in[2], Mode::Train, st);
      },
      {randn({4, 3, 5, 5}), randn({3}), randn({3})}, 1e-5));
  results.push_back(grad_check(
      "linear",
      [](const std::vector<Tensor>& in) { return ops::linear(in[0], in[1], in[2]); },
      {randn({3, 7}), randn({5, 7}), randn({5})}, 1e-6));
  results.push_back(grad_check(
      "sigmoid", [](const std::vector<Tensor>& in) { return ops::sigmoid(in[0]); },
      {randn({3, 8})}, 1e-6));
  results.push_back(grad_check(
      "relu", [](const std::vector<Tensor>& in) { return ops::relu(in[0]); },
      {randn({3, 8})}, 1e-5));
  results.push_back(grad_check(
      "dice_loss",
      [](const std::vector<Tensor>& in) {
        Tensor target = Tensor::zeros({2, 1, 4, 4});
        for (std::size_t i = 0; i < target.size(); ++i) target.data()[i] = (i % 3) == 0;
        return ops::dice_loss(in[0], target);
      },
      {positive({2, 1, 4, 4})}, 1e-6));
  results.push_back(grad_check(
      "mse_loss",
      [](const std::vector<Tensor>& in) {
        Tensor target = Tensor::zeros({4, 1});
        for (std::size_t i = 0; i < 4; ++i) target.data()[i] = 0.3 * i;
        return ops::mse_loss(in[0], target);
      },
      {randn({4, 1})}, 1e-6));

  bool all = true;
  std::cout << "op,max_rel_err,pass\n";
  for (const auto& r : results) {
    std::cout << r.name << "," << r.max_rel_err << "," << (r.pass ? "pass" : "FAIL") << "\n";
    all = all && r.pass;
  }
  return all ? 0 : 3;
}

std::unique_ptr<models::Model> make_untrained(const std::string& method, int base_channels,
                                              int h, int w, std::uint64_t seed) {
  Rng rng = Rng::keyed({seed, 0x1217u});
  if (method == "SB") {
    models::UNetConfig cfg;
    cfg.base_channels = base_channels;
    return models::build_unet(cfg, rng);
  }
  if (method == "VGG") {
    models::VGGConfig cfg;
    cfg.input_height = h;
    cfg.input_width = w;
    return models::build_vgg_regressor(cfg, rng);
  }
  if (method == "DE") {
    models::RegressorConfig cfg;
    cfg.encoder.base_channels = base_channels;
    cfg.input_height = h;
    cfg.input_width = w;
    return models::build_encoder_regressor(cfg, rng);
  }
  throw CLI::ValidationError("--method", "unknown method " + method);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spleen-length estimation on synthetic ultrasound phantoms"};
  app.require_subcommand(1);

  std::uint64_t seed = 7;
  app.add_option("--seed", seed, "master RNG seed")->capture_default_str();

  // ---- phantom ----------------------------------------------------------
  auto* cmd_phantom = app.add_subcommand("phantom", "generate a synthetic dataset");
  phantom::PhantomConfig pcfg;
  std::string phantom_out = "data";
  cmd_phantom->add_option("--count", pcfg.count, "number of cases")->capture_default_str();
  cmd_phantom->add_option("--height", pcfg.height)->capture_default_str();
  cmd_phantom->add_option("--width", pcfg.width)->capture_default_str();
  cmd_phantom->add_option("--speckle", pcfg.speckle_strength)->capture_default_str();
  cmd_phantom->add_option("--contrast", pcfg.contrast_delta)->capture_default_str();
  cmd_phantom->add_flag("--calipers", pcfg.burn_calipers, "burn caliper crosses");
  cmd_phantom->add_option("--out", phantom_out, "output directory")->capture_default_str();

  // ---- train ------------------------------------------------------------
  auto* cmd_train = app.add_subcommand("train", "train one model on a dataset");
  std::string train_data, train_method = "SB", model_out = "model.ckpt", curve_path;
  training::TrainPlan plan;
  int base_channels = 8;
  bool faithful = false;
  cmd_train->add_option("--data", train_data, "dataset directory")->required();
  cmd_train->add_option("--method", train_method, "SB | DE | VGG")->capture_default_str();
  cmd_train->add_option("--epochs", plan.epochs)->capture_default_str();
  cmd_train->add_option("--batch", plan.batch_size)->capture_default_str();
  cmd_train->add_option("--lr", plan.adam.lr)->capture_default_str();
  cmd_train->add_option("--wd", plan.adam.weight_decay)->capture_default_str();
  cmd_train->add_option("--base-channels", base_channels)->capture_default_str();
  cmd_train->add_flag("--no-augment", "disable augmentation");
  cmd_train->add_flag("--paper-faithful", faithful, "lr 1e-5, batch 4, 0-20 deg rotations");
  cmd_train->add_option("--loss-curve", curve_path, "CSV file for the loss curve");
  cmd_train->add_option("--out", model_out, "checkpoint path")->capture_default_str();

  // ---- measure ----------------------------------------------------------
  auto* cmd_measure = app.add_subcommand("measure", "length of one image or mask");
  std::string measure_model, measure_image, measure_mask_path;
  double msy = 1.0, msx = 1.0;
  cmd_measure->add_option("--model", measure_model, "checkpoint; runs the model first");
  cmd_measure->add_option("--image", measure_image, "input image PNG");
  cmd_measure->add_option("--mask", measure_mask_path, "measure a mask PNG directly");
  cmd_measure->add_option("--sy", msy, "mm per pixel, rows")->capture_default_str();
  cmd_measure->add_option("--sx", msx, "mm per pixel, cols")->capture_default_str();

  // ---- crossval ---------------------------------------------------------
  auto* cmd_cv = app.add_subcommand("crossval", "nested cross-validation over methods");
  std::string cv_data, cv_out = "results", cv_methods = "SB,DE,DEW,VGG";
  std::string cv_grid = "1e-6,1e-7,1e-8", cv_config;
  experiment::ExperimentConfig ecfg;
  bool cv_faithful = false, by_case = false, dew_freeze = false;
  cmd_cv->add_option("--data", cv_data, "dataset directory")->required();
  cmd_cv->add_option("--methods", cv_methods)->capture_default_str();
  cmd_cv->add_option("--outer", ecfg.outer_folds)->capture_default_str();
  cmd_cv->add_option("--inner", ecfg.inner_folds)->capture_default_str();
  cmd_cv->add_option("--epochs", ecfg.plan.epochs)->capture_default_str();
  cmd_cv->add_option("--inner-epochs", ecfg.inner_epochs)->capture_default_str();
  cmd_cv->add_option("--lr", ecfg.plan.adam.lr)->capture_default_str();
  cmd_cv->add_option("--batch", ecfg.plan.batch_size)->capture_default_str();
  cmd_cv->add_option("--base-channels", ecfg.unet.base_channels)->capture_default_str();
  cmd_cv->add_option("--wd-grid", cv_grid, "comma-separated decays")->capture_default_str();
  cmd_cv->add_flag("--by-case", by_case, "split folds by case instead of by patient");
  cmd_cv->add_flag("--dew-freeze-encoder", dew_freeze, "freeze DEW's transferred encoder");
  cmd_cv->add_flag("--paper-faithful", cv_faithful, "lr 1e-5, batch 4, 0-20 deg rotations");
  cmd_cv->add_option("--config", cv_config, "JSON config file; flags override it");
  cmd_cv->add_option("--out", cv_out, "results directory")->capture_default_str();

  // ---- gradcheck --------------------------------------------------------
  app.add_subcommand("gradcheck", "finite-difference check of every op");

  // ---- inpaint ----------------------------------------------------------
  auto* cmd_inpaint = app.add_subcommand("inpaint", "remove burned-in markers");
  std::string in_image, in_defect, in_out = "inpainted.png";
  cmd_inpaint->add_option("--image", in_image, "input PNG")->required();
  cmd_inpaint->add_option("--defect", in_defect, "defect mask PNG")->required();
  cmd_inpaint->add_option("--out", in_out)->capture_default_str();

  // ---- describe ---------------------------------------------------------
  auto* cmd_desc = app.add_subcommand("describe", "layer table and parameter count");
  std::string desc_model, desc_method;
  int desc_base = 8, desc_h = 64, desc_w = 96;
  cmd_desc->add_option("--model", desc_model, "checkpoint to describe");
  cmd_desc->add_option("--method", desc_method, "describe a fresh SB | DE | VGG");
  cmd_desc->add_option("--base-channels", desc_base)->capture_default_str();
  cmd_desc->add_option("--height", desc_h)->capture_default_str();
  cmd_desc->add_option("--width", desc_w)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_phantom->parsed()) {
      pcfg.master_seed = seed;
      phantom::PhantomSet set = phantom::generate(pcfg);
      write_dataset(set.samples, phantom_out, seed);
      if (pcfg.burn_calipers) {
        std::filesystem::create_directories(std::filesystem::path(phantom_out) / "calipers");
        char name[32];
        for (std::size_t i = 0; i < set.caliper_masks.size(); ++i) {
          std::snprintf(name, sizeof name, "case_%04zu.png", i);
          write_mask_png((std::filesystem::path(phantom_out) / "calipers" / name).string(),
                         set.caliper_masks[i]);
        }
      }
      std::cout << "wrote " << set.samples.size() << " cases to " << phantom_out << "\n";
      return 0;
    }

    if (cmd_train->parsed()) {
      const std::vector<Sample> samples = read_dataset(train_data);
      if (samples.empty()) throw std::runtime_error("train: dataset is empty");
      plan.seed = seed;
      plan.augment = cmd_train->count("--no-augment") == 0;
      plan.loss_curve_path = curve_path;
      plan.loss = train_method == "SB" ? training::LossKind::Dice : training::LossKind::Mse;
      if (faithful) apply_faithful(plan);
      auto model = make_untrained(train_method, base_channels, samples[0].image.height,
                                  samples[0].image.width, seed);
      auto result = training::train(*model, samples, plan);
      if (result.diverged) {
        std::cerr << "training diverged at epoch " << result.diverged_epoch << "\n";
        return 3;
      }
      model->save(model_out);
      std::cout << "final loss " << (result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back())
                << ", saved " << model_out << "\n";
      return 0;
    }

    if (cmd_measure->parsed()) {
      BinaryMask mask;
      if (!measure_mask_path.empty()) {
        mask = read_mask_png(measure_mask_path);
        mask.sy = msy;
        mask.sx = msx;
      } else if (!measure_model.empty() && !measure_image.empty()) {
        GrayImage img = read_image_png(measure_image);
        img.sy = msy;
        img.sx = msx;
        auto model = models::model_from_checkpoint(load_checkpoint(measure_model));
        if (model->arch_tag() != "SB") {
          std::cout << "length_mm " << models::predict_length_px(*model, img) * img.sx << "\n";
          return 0;
        }
        mask = models::predict_mask(*model, img);
      } else {
        std::cerr << "measure: need --mask, or --model with --image\n";
        return 2;
      }
      auto m = geometry::measure_mask(mask);
      if (!m) {
        std::cerr << "measure: empty mask, nothing to measure\n";
        return 3;
      }
      std::cout << "length_mm " << m->length_mm << "\nlength_px " << m->length_px << "\n";
      return 0;
    }

    if (cmd_cv->parsed()) {
      if (!cv_config.empty()) {
        std::ifstream is(cv_config);
        if (!is) throw std::runtime_error("cannot read config " + cv_config);
        json j = json::parse(is);
        if (j.contains("epochs") && !cmd_cv->count("--epochs")) ecfg.plan.epochs = j["epochs"];
        if (j.contains("inner_epochs") && !cmd_cv->count("--inner-epochs"))
          ecfg.inner_epochs = j["inner_epochs"];
        if (j.contains("lr") && !cmd_cv->count("--lr")) ecfg.plan.adam.lr = j["lr"];
        if (j.contains("batch") && !cmd_cv->count("--batch")) ecfg.plan.batch_size = j["batch"];
        if (j.contains("base_channels") && !cmd_cv->count("--base-channels"))
          ecfg.unet.base_channels = j["base_channels"];
        if (j.contains("methods") && !cmd_cv->count("--methods"))
          cv_methods = j["methods"].get<std::string>();
        if (j.contains("wd_grid") && !cmd_cv->count("--wd-grid"))
          cv_grid = j["wd_grid"].get<std::string>();
      }
      ecfg.seed = seed;
      ecfg.methods = parse_methods(cv_methods);
      ecfg.weight_decay_grid = parse_grid(cv_grid);
      ecfg.grouping = by_case ? experiment::Grouping::ByCase : experiment::Grouping::ByPatient;
      ecfg.dew_freeze_encoder = dew_freeze;
      ecfg.out_dir = cv_out;
      if (cv_faithful) apply_faithful(ecfg.plan);
      const std::vector<Sample> samples = read_dataset(cv_data);
      auto result = experiment::run_experiment(samples, ecfg);
      std::cout << "method,ple_percent,pearson_r,dice,hausdorff_mm,n_cases\n";
      for (const auto& row : result.table) std::cout << row.to_csv_row() << "\n";
      return 0;
    }

    if (app.get_subcommand("gradcheck")->parsed()) return run_gradchecks();

    if (cmd_inpaint->parsed()) {
      GrayImage img = read_image_png(in_image);
      BinaryMask defect = read_mask_png(in_defect);
      write_image_png(in_out, preprocess::inpaint_biharmonic(img, defect));
      std::cout << "wrote " << in_out << "\n";
      return 0;
    }

    if (cmd_desc->parsed()) {
      std::unique_ptr<models::Model> model;
      if (!desc_model.empty())
        model = models::model_from_checkpoint(load_checkpoint(desc_model));
      else if (!desc_method.empty())
        model = make_untrained(desc_method, desc_base, desc_h, desc_w, seed);
      else {
        std::cerr << "describe: need --model or --method\n";
        return 2;
      }
      model->describe_csv(std::cout);
      std::cout << "total_trainable," << model->parameter_count() << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
