#pragma once

#include <string>
#include <vector>

#include "slm/dataset.hpp"
#include "slm/models.hpp"
#include "slm/preprocess.hpp"
#include "slm/rng.hpp"
#include "slm/tensor.hpp"

namespace slm {
namespace training {

struct AdamConfig {
  double lr = 1e-2;  // desk-scale default; the faithful replication preset uses 1e-5
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // coupled L2: g += wd * theta
};

/// Adam over a fixed parameter list. Gradients must be populated before each
/// step; a missing or non-finite gradient is reported with the tensor name.
class Adam {
 public:
  Adam(std::vector<NamedTensor> params, AdamConfig cfg);

  void step();
  void zero_grad();
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<NamedTensor> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

enum class LossKind { Dice, Mse };

struct TrainPlan {
  int epochs = 150;
  int batch_size = 4;
  std::uint64_t seed = 1;
  AdamConfig adam;
  LossKind loss = LossKind::Dice;
  bool augment = true;
  preprocess::AugmentationSpec augmentation;
  /// Parameters whose names start with any of these prefixes are excluded
  /// from optimization (used to freeze a transferred encoder).
  std::vector<std::string> freeze_prefixes;
  /// Optional CSV destination for the per-epoch loss curve; empty = no file.
  std::string loss_curve_path;
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean per-sample training loss
  bool diverged = false;
  int diverged_epoch = -1;  // first epoch whose loss was non-finite
};

/// Assembles normalized image batches as [N,1,H,W] tensors. All images must
/// share one size.
Tensor image_batch(const std::vector<const GrayImage*>& images);
Tensor mask_batch(const std::vector<const BinaryMask*>& masks);

/// Runs the full loop: per-epoch deterministic shuffle, per-sample
/// augmentation streams, Adam updates. Dice loss requires masks on every
/// sample; MSE regresses length_px.
TrainResult train(models::Model& model, const std::vector<Sample>& samples,
                  const TrainPlan& plan);

}  // namespace training
}  // namespace slm
