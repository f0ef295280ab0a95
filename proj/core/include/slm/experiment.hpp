#pragma once

#include <functional>
#include <string>
#include <vector>

#include "slm/dataset.hpp"
#include "slm/metrics.hpp"
#include "slm/models.hpp"
#include "slm/training.hpp"

namespace slm {
namespace experiment {

/// What counts as one indivisible unit when splitting into folds. ByPatient
/// keeps all of a patient's cases in the same fold (the default, since
/// per-patient leakage inflates scores); ByCase splits freely.
enum class Grouping { ByCase, ByPatient };

struct FoldPlan {
  /// Sample indices per fold; every index appears in exactly one fold.
  std::vector<std::vector<std::size_t>> folds;
};

/// Splits samples into k folds of near-equal size: groups are shuffled with
/// the seed, then greedily assigned to the currently smallest fold, largest
/// group first. Throws if k < 2 or there are fewer groups than folds.
FoldPlan make_fold_plan(const std::vector<Sample>& samples, int k, Grouping grouping,
                        std::uint64_t seed);

/// Picks the best weight decay from a grid by the given scorer (lower is
/// better, typically mean inner-fold PLE). Non-finite scores lose to any
/// finite score; exact ties go to the strongest (largest) decay.
double select_weight_decay(const std::vector<double>& grid,
                           const std::function<double(double)>& scorer);

struct ExperimentConfig {
  int outer_folds = 3;
  int inner_folds = 3;
  Grouping grouping = Grouping::ByPatient;
  std::uint64_t seed = 1;
  std::vector<double> weight_decay_grid = {1e-6, 1e-7, 1e-8};
  std::vector<std::string> methods = {"SB", "DE", "DEW", "VGG"};

  models::UNetConfig unet;
  models::VGGConfig vgg;
  int fc_nodes = 256;
  int fc_layers = 2;
  /// Keep the transferred encoder fixed while fine-tuning DEW's head.
  bool dew_freeze_encoder = false;

  /// Loop settings shared by every method; loss kind and weight decay are
  /// overridden internally. Inner-CV training uses inner_epochs.
  training::TrainPlan plan;
  int inner_epochs = 8;

  /// Destination for table1.csv, predictions.csv and per-fold logs; empty
  /// disables file output.
  std::string out_dir;
};

struct CasePrediction {
  std::string method;
  int outer_fold = 0;
  int case_id = 0;
  int patient_id = 0;
  double truth_mm = 0.0;
  double predicted_mm = 0.0;
  bool empty_mask = false;  // SB produced no foreground; predicted_mm is 0
};

struct ExperimentResult {
  std::vector<metrics::MetricsReport> table;    // one row per method
  std::vector<CasePrediction> predictions;      // every outer-fold test case
  std::vector<double> chosen_weight_decay;      // in training order: fold-major
};

/// Nested cross-validation over the four estimation methods. Outer folds
/// give the test splits; weight decay is chosen per outer fold by inner CV
/// on the remaining data. DEW reuses the SB encoder trained on the same
/// outer split, so SB always runs when DEW is requested.
ExperimentResult run_experiment(const std::vector<Sample>& samples,
                                const ExperimentConfig& cfg);

}  // namespace experiment
}  // namespace slm
