#include "slm/training.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "slm/ops.hpp"

namespace slm {
namespace training {

Adam::Adam(std::vector<NamedTensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  if (cfg_.lr < 0 || cfg_.weight_decay < 0)
    throw std::invalid_argument("Adam: negative lr or weight decay");
  for (auto& p : params_) {
    if (!p.trainable) throw std::invalid_argument("Adam: non-trainable tensor " + p.name);
    m_.emplace_back(p.tensor.size(), 0.0);
    v_.emplace_back(p.tensor.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k].tensor;
    if (!p.has_grad())
      throw std::runtime_error("Adam: no gradient for " + params_[k].name);
    std::vector<double>& theta = p.data();
    const std::vector<double>& g = p.grad();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      double gi = g[i];
      if (!std::isfinite(gi))
        throw std::runtime_error("Adam: non-finite gradient in " + params_[k].name);
      gi += cfg_.weight_decay * theta[i];
      m_[k][i] = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * gi;
      v_[k][i] = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * gi * gi;
      const double mhat = m_[k][i] / bc1;
      const double vhat = v_[k][i] / bc2;
      theta[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

Tensor image_batch(const std::vector<const GrayImage*>& images) {
  if (images.empty()) throw std::invalid_argument("image_batch: empty batch");
  const int H = images[0]->height, W = images[0]->width;
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(images.size()) * H * W);
  for (const GrayImage* im : images) {
    if (im->height != H || im->width != W)
      throw std::invalid_argument("image_batch: mixed image sizes");
    GrayImage norm = preprocess::normalize_intensity(*im);
    data.insert(data.end(), norm.pix.begin(), norm.pix.end());
  }
  return Tensor::from_data({static_cast<int>(images.size()), 1, H, W}, std::move(data));
}

Tensor mask_batch(const std::vector<const BinaryMask*>& masks) {
  if (masks.empty()) throw std::invalid_argument("mask_batch: empty batch");
  const int H = masks[0]->height, W = masks[0]->width;
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(masks.size()) * H * W);
  for (const BinaryMask* m : masks) {
    if (m->height != H || m->width != W)
      throw std::invalid_argument("mask_batch: mixed mask sizes");
    for (std::uint8_t b : m->bits) data.push_back(b ? 1.0 : 0.0);
  }
  return Tensor::from_data({static_cast<int>(masks.size()), 1, H, W}, std::move(data));
}

TrainResult train(models::Model& model, const std::vector<Sample>& samples,
                  const TrainPlan& plan) {
  if (samples.empty()) throw std::invalid_argument("train: no samples");
  if (plan.batch_size < 1 || plan.epochs < 0)
    throw std::invalid_argument("train: bad batch size or epoch count");
  if (plan.loss == LossKind::Dice) {
    for (const Sample& s : samples)
      if (!s.mask)
        throw std::invalid_argument("train: dice loss needs a mask on every sample (case " +
                                    std::to_string(s.case_id) + ")");
  }

  std::vector<NamedTensor> trainable;
  for (auto& p : model.parameters()) {
    bool frozen = false;
    for (const std::string& prefix : plan.freeze_prefixes)
      if (p.name.rfind(prefix, 0) == 0) frozen = true;
    if (!frozen) trainable.push_back(p);
  }
  if (trainable.empty()) throw std::invalid_argument("train: every parameter is frozen");
  Adam opt(std::move(trainable), plan.adam);
  TrainResult result;

  std::ofstream curve;
  if (!plan.loss_curve_path.empty()) {
    curve.open(plan.loss_curve_path);
    if (!curve) throw std::runtime_error("train: cannot write " + plan.loss_curve_path);
    curve << "epoch,loss\n";
  }

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < plan.epochs; ++epoch) {
    Rng shuffle_rng = Rng::keyed({plan.seed, static_cast<std::uint64_t>(epoch), 0xABCDu});
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t seen = 0;

    for (std::size_t start = 0; start < order.size(); start += plan.batch_size) {
      const std::size_t end = std::min(order.size(), start + plan.batch_size);

      std::vector<Sample> batch;
      batch.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const Sample& s = samples[order[k]];
        if (plan.augment) {
          Rng aug_rng = Rng::keyed({plan.seed, static_cast<std::uint64_t>(epoch),
                                    static_cast<std::uint64_t>(order[k]), 0x5EEDu});
          batch.push_back(preprocess::augment(s, plan.augmentation, aug_rng));
        } else {
          batch.push_back(s);
        }
      }

      std::vector<const GrayImage*> imgs;
      for (const Sample& s : batch) imgs.push_back(&s.image);
      Tensor x = image_batch(imgs);

      Rng dropout_rng = Rng::keyed({plan.seed, static_cast<std::uint64_t>(epoch),
                                    static_cast<std::uint64_t>(start), 0xD120u});
      Tensor pred = model.forward(x, Mode::Train, dropout_rng);

      Tensor loss;
      if (plan.loss == LossKind::Dice) {
        std::vector<const BinaryMask*> msks;
        for (const Sample& s : batch) msks.push_back(&*s.mask);
        loss = ops::dice_loss(pred, mask_batch(msks));
      } else {
        std::vector<double> targets;
        for (const Sample& s : batch) targets.push_back(s.length_px);
        loss = ops::mse_loss(
            pred, Tensor::from_data({static_cast<int>(batch.size()), 1}, std::move(targets)));
      }

      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        result.diverged = true;
        result.diverged_epoch = epoch;
        return result;
      }
      loss_sum += lv * static_cast<double>(end - start);
      seen += end - start;

      opt.zero_grad();
      backward(loss);
      opt.step();
    }

    const double epoch_loss = loss_sum / static_cast<double>(seen);
    result.epoch_loss.push_back(epoch_loss);
    if (curve.is_open()) curve << epoch << "," << epoch_loss << "\n";
  }
  return result;
}

}  // namespace training
}  // namespace slm
