#include "slm/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

#include "slm/geometry.hpp"

namespace slm {
namespace experiment {

using nlohmann::json;

namespace {

int group_key(const Sample& s, Grouping g) {
  return g == Grouping::ByPatient ? s.patient_id : s.case_id;
}

const std::set<std::string> kKnownMethods = {"SB", "DE", "DEW", "VGG"};

std::vector<Sample> subset(const std::vector<Sample>& samples,
                           const std::vector<std::size_t>& idx) {
  std::vector<Sample> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(samples[i]);
  return out;
}

void assert_disjoint_groups(const std::vector<Sample>& a, const std::vector<Sample>& b,
                            Grouping g, const std::string& what) {
  std::set<int> keys;
  for (const Sample& s : a) keys.insert(group_key(s, g));
  for (const Sample& s : b)
    if (keys.count(group_key(s, g)))
      throw std::logic_error("fold leakage (" + what + "): group " +
                             std::to_string(group_key(s, g)) + " appears on both sides");
}

struct CaseResult {
  double truth_mm = 0.0;
  double pred_mm = 0.0;
  bool empty_mask = false;
  std::optional<double> dice;
  std::optional<double> hausdorff;
};

CaseResult evaluate_case(models::Model& model, const Sample& s, bool segmentation) {
  CaseResult r;
  r.truth_mm = s.length_mm;
  if (segmentation) {
    BinaryMask pred = models::predict_mask(model, s.image);
    if (auto m = geometry::measure_mask(pred)) {
      r.pred_mm = m->length_mm;
    } else {
      r.pred_mm = 0.0;
      r.empty_mask = true;
    }
    if (s.mask) {
      r.dice = metrics::dice_coefficient(pred, *s.mask);
      if (!pred.empty_mask() && !s.mask->empty_mask())
        r.hausdorff = metrics::hausdorff_distance(pred, *s.mask);
    }
  } else {
    r.pred_mm = models::predict_length_px(model, s.image) * s.image.sx;
  }
  return r;
}

double mean_ple(const std::vector<CaseResult>& cases) {
  std::vector<double> pred, truth;
  for (const CaseResult& c : cases) {
    pred.push_back(c.pred_mm);
    truth.push_back(c.truth_mm);
  }
  return metrics::ple(pred, truth);
}

std::unique_ptr<models::Model> build_method(const std::string& method,
                                            const ExperimentConfig& cfg, int image_h,
                                            int image_w, Rng& init_rng,
                                            models::Model* fold_sb) {
  if (method == "SB") return models::build_unet(cfg.unet, init_rng);
  if (method == "VGG") {
    models::VGGConfig vc = cfg.vgg;
    vc.input_height = image_h;
    vc.input_width = image_w;
    vc.fc_nodes = cfg.fc_nodes;
    vc.fc_layers = cfg.fc_layers;
    return models::build_vgg_regressor(vc, init_rng);
  }
  models::RegressorConfig rc;
  rc.encoder = cfg.unet;
  rc.input_height = image_h;
  rc.input_width = image_w;
  rc.fc_nodes = cfg.fc_nodes;
  rc.fc_layers = cfg.fc_layers;
  auto m = models::build_encoder_regressor(rc, init_rng);
  if (method == "DEW") {
    if (!fold_sb) throw std::logic_error("DEW needs the fold's trained SB model");
    models::transfer_encoder_weights(*fold_sb, *m);
  }
  return m;
}

training::TrainPlan method_plan(const std::string& method, const ExperimentConfig& cfg,
                                double weight_decay, std::uint64_t seed, int epochs) {
  training::TrainPlan plan = cfg.plan;
  plan.loss = method == "SB" ? training::LossKind::Dice : training::LossKind::Mse;
  plan.adam.weight_decay = weight_decay;
  plan.seed = seed;
  plan.epochs = epochs;
  plan.loss_curve_path.clear();
  if (method == "DEW" && cfg.dew_freeze_encoder)
    plan.freeze_prefixes = {"enc", "bottleneck"};
  return plan;
}

}  // namespace

FoldPlan make_fold_plan(const std::vector<Sample>& samples, int k, Grouping grouping,
                        std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("make_fold_plan: need at least 2 folds");
  std::map<int, std::vector<std::size_t>> by_group;
  for (std::size_t i = 0; i < samples.size(); ++i)
    by_group[group_key(samples[i], grouping)].push_back(i);
  if (static_cast<int>(by_group.size()) < k)
    throw std::invalid_argument("make_fold_plan: fewer groups (" +
                                std::to_string(by_group.size()) + ") than folds (" +
                                std::to_string(k) + ")");

  std::vector<std::vector<std::size_t>> groups;
  for (auto& [key, idx] : by_group) groups.push_back(std::move(idx));
  Rng rng = Rng::keyed({seed, 0xF01Du});
  rng.shuffle(groups);
  // largest group first; shuffle above decides ties
  std::stable_sort(groups.begin(), groups.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });

  FoldPlan plan;
  plan.folds.assign(k, {});
  for (auto& g : groups) {
    std::size_t best = 0;
    for (std::size_t f = 1; f < plan.folds.size(); ++f)
      if (plan.folds[f].size() < plan.folds[best].size()) best = f;
    plan.folds[best].insert(plan.folds[best].end(), g.begin(), g.end());
  }
  for (auto& fold : plan.folds) {
    if (fold.empty()) throw std::invalid_argument("make_fold_plan: produced an empty fold");
    std::sort(fold.begin(), fold.end());
  }
  return plan;
}

double select_weight_decay(const std::vector<double>& grid,
                           const std::function<double(double)>& scorer) {
  if (grid.empty()) throw std::invalid_argument("select_weight_decay: empty grid");
  double best_wd = 0.0;
  double best_score = std::numeric_limits<double>::infinity();
  bool any = false;
  for (double wd : grid) {
    double score = scorer(wd);
    if (!std::isfinite(score)) score = std::numeric_limits<double>::infinity();
    // strict < keeps the first winner; equal scores prefer the larger decay
    if (!any || score < best_score || (score == best_score && wd > best_wd)) {
      best_score = score;
      best_wd = wd;
      any = true;
    }
  }
  return best_wd;
}

ExperimentResult run_experiment(const std::vector<Sample>& samples,
                                const ExperimentConfig& cfg) {
  if (samples.empty()) throw std::invalid_argument("run_experiment: no samples");
  if (cfg.methods.empty()) throw std::invalid_argument("run_experiment: no methods");
  for (const std::string& m : cfg.methods)
    if (!kKnownMethods.count(m))
      throw std::invalid_argument("run_experiment: unknown method " + m);
  const int H = samples[0].image.height, W = samples[0].image.width;

  const bool want_dew =
      std::find(cfg.methods.begin(), cfg.methods.end(), "DEW") != cfg.methods.end();

  // SB must be trained per fold before DEW can borrow its encoder
  std::vector<std::string> methods = cfg.methods;
  if (want_dew &&
      std::find(methods.begin(), methods.end(), std::string("SB")) == methods.end())
    methods.insert(methods.begin(), "SB");
  else if (want_dew) {
    std::stable_partition(methods.begin(), methods.end(),
                          [](const std::string& m) { return m == "SB"; });
  }

  const FoldPlan outer = make_fold_plan(samples, cfg.outer_folds, cfg.grouping, cfg.seed);

  if (!cfg.out_dir.empty()) std::filesystem::create_directories(cfg.out_dir);

  ExperimentResult result;
  // per method: pooled case results across outer test folds
  std::map<std::string, std::vector<CaseResult>> pooled;
  json fold_log = json::array();

  for (int f = 0; f < cfg.outer_folds; ++f) {
    std::vector<std::size_t> train_idx;
    for (int g = 0; g < cfg.outer_folds; ++g)
      if (g != f)
        train_idx.insert(train_idx.end(), outer.folds[g].begin(), outer.folds[g].end());

    const std::vector<Sample> train_set = subset(samples, train_idx);
    const std::vector<Sample> test_set = subset(samples, outer.folds[f]);
    assert_disjoint_groups(train_set, test_set, cfg.grouping, "outer fold " + std::to_string(f));

    const FoldPlan inner =
        make_fold_plan(train_set, cfg.inner_folds, cfg.grouping, cfg.seed + 101 + f);

    std::unique_ptr<models::Model> fold_sb;

    for (const std::string& method : methods) {
      const bool seg = method == "SB";
      const std::uint64_t fold_seed = cfg.seed + 1000 * (f + 1);

      auto scorer = [&](double wd) -> double {
        double total = 0.0;
        for (int j = 0; j < cfg.inner_folds; ++j) {
          std::vector<std::size_t> itrain_idx;
          for (int g = 0; g < cfg.inner_folds; ++g)
            if (g != j)
              itrain_idx.insert(itrain_idx.end(), inner.folds[g].begin(),
                                inner.folds[g].end());
          const std::vector<Sample> itrain = subset(train_set, itrain_idx);
          const std::vector<Sample> ival = subset(train_set, inner.folds[j]);
          assert_disjoint_groups(itrain, ival, cfg.grouping,
                                 "inner fold " + std::to_string(j));

          Rng init = Rng::keyed({fold_seed, static_cast<std::uint64_t>(j), 0x1217u});
          auto model = build_method(method, cfg, H, W, init, fold_sb.get());
          auto plan = method_plan(method, cfg, wd, fold_seed + j, cfg.inner_epochs);
          auto tr = training::train(*model, itrain, plan);
          if (tr.diverged) return std::numeric_limits<double>::infinity();

          std::vector<CaseResult> cases;
          for (const Sample& s : ival) cases.push_back(evaluate_case(*model, s, seg));
          total += mean_ple(cases);
        }
        return total / cfg.inner_folds;
      };

      // a one-point grid needs no inner CV
      const double wd = cfg.weight_decay_grid.size() == 1
                            ? cfg.weight_decay_grid[0]
                            : select_weight_decay(cfg.weight_decay_grid, scorer);
      result.chosen_weight_decay.push_back(wd);

      Rng init = Rng::keyed({fold_seed, 0xF17A1u});
      auto model = build_method(method, cfg, H, W, init, fold_sb.get());
      auto plan = method_plan(method, cfg, wd, fold_seed, cfg.plan.epochs);
      auto tr = training::train(*model, train_set, plan);
      if (tr.diverged)
        throw std::runtime_error("run_experiment: " + method + " diverged at epoch " +
                                 std::to_string(tr.diverged_epoch) + " in outer fold " +
                                 std::to_string(f));

      for (const Sample& s : test_set) {
        CaseResult c = evaluate_case(*model, s, seg);
        pooled[method].push_back(c);
        result.predictions.push_back(
            {method, f, s.case_id, s.patient_id, c.truth_mm, c.pred_mm, c.empty_mask});
      }

      fold_log.push_back({{"method", method},
                          {"outer_fold", f},
                          {"weight_decay", wd},
                          {"final_train_loss",
                           tr.epoch_loss.empty() ? 0.0 : tr.epoch_loss.back()}});

      if (seg) fold_sb = std::move(model);
    }
  }

  for (const std::string& method : cfg.methods) {
    const std::vector<CaseResult>& cases = pooled[method];
    std::vector<double> pred, truth;
    for (const CaseResult& c : cases) {
      pred.push_back(c.pred_mm);
      truth.push_back(c.truth_mm);
    }
    metrics::MetricsReport row;
    row.method = method;
    row.ple_percent = metrics::ple(pred, truth);
    row.pearson_r = metrics::pearson_r(pred, truth);
    row.n_cases = static_cast<int>(cases.size());
    if (method == "SB") {
      double dice_sum = 0.0, hd_sum = 0.0;
      int dice_n = 0, hd_n = 0;
      for (const CaseResult& c : cases) {
        if (c.dice) {
          dice_sum += *c.dice;
          ++dice_n;
        }
        if (c.hausdorff) {
          hd_sum += *c.hausdorff;
          ++hd_n;
        }
      }
      if (dice_n) row.dice = dice_sum / dice_n;
      if (hd_n) row.hausdorff_mm = hd_sum / hd_n;
    }
    result.table.push_back(row);
  }

  if (!cfg.out_dir.empty()) {
    const std::filesystem::path dir(cfg.out_dir);
    {
      std::ofstream os(dir / "table1.csv");
      os << "method,ple_percent,pearson_r,dice,hausdorff_mm,n_cases\n";
      for (const auto& row : result.table) os << row.to_csv_row() << "\n";
    }
    {
      std::ofstream os(dir / "predictions.csv");
      os << "method,outer_fold,case_id,patient_id,truth_mm,predicted_mm,empty_mask\n";
      for (const auto& p : result.predictions)
        os << p.method << "," << p.outer_fold << "," << p.case_id << "," << p.patient_id
           << "," << p.truth_mm << "," << p.predicted_mm << "," << (p.empty_mask ? 1 : 0)
           << "\n";
    }
    {
      std::ofstream os(dir / "folds.json");
      os << fold_log.dump(2) << "\n";
    }
  }
  return result;
}

}  // namespace experiment
}  // namespace slm
