// Microbenchmarks for the hot paths: convolution forward/backward, a full
// U-Net forward pass, mask measurement, and phantom generation.

#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "slm/geometry.hpp"
#include "slm/models.hpp"
#include "slm/ops.hpp"
#include "slm/phantom.hpp"
#include "slm/rng.hpp"
#include "slm/tensor.hpp"

namespace {

slm::Tensor random_tensor(std::vector<int> shape, slm::Rng& rng, bool requires_grad) {
  std::vector<double> data(slm::shape_numel(shape));
  for (auto& v : data) v = rng.uniform(-1.0, 1.0);
  return slm::Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

void BM_Conv2dForward(benchmark::State& state) {
  slm::Rng rng(1);
  const int c = static_cast<int>(state.range(0));
  slm::Tensor x = random_tensor({1, c, 64, 96}, rng, false);
  slm::Tensor w = random_tensor({c, c, 3, 3}, rng, false);
  slm::Tensor b = slm::Tensor::zeros({c});
  for (auto _ : state) {
    slm::Tensor y = slm::ops::conv2d(x, w, b, 1, 1);
    benchmark::DoNotOptimize(y.data().data());
  }
}
BENCHMARK(BM_Conv2dForward)->Arg(8)->Arg(32)->Arg(64);

void BM_Conv2dForwardBackward(benchmark::State& state) {
  slm::Rng rng(2);
  const int c = static_cast<int>(state.range(0));
  for (auto _ : state) {
    slm::Tensor x = random_tensor({1, c, 64, 96}, rng, true);
    slm::Tensor w = random_tensor({c, c, 3, 3}, rng, true);
    slm::Tensor b = slm::Tensor::zeros({c}, true);
    slm::Tensor loss = slm::ops::sum(slm::ops::conv2d(x, w, b, 1, 1));
    slm::backward(loss);
    benchmark::DoNotOptimize(w.grad().data());
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(8)->Arg(32);

void BM_UNetForward(benchmark::State& state) {
  slm::models::UNetConfig cfg;
  cfg.base_channels = static_cast<int>(state.range(0));
  slm::Rng init(3);
  auto model = slm::models::build_unet(cfg, init);
  slm::Rng rng(4);
  slm::Tensor x = random_tensor({1, 1, 64, 96}, rng, false);
  for (auto _ : state) {
    slm::Tensor y = model->forward(x, slm::Mode::Eval, rng);
    benchmark::DoNotOptimize(y.data().data());
  }
}
BENCHMARK(BM_UNetForward)->Arg(8)->Arg(16);

void BM_MeasureMask(benchmark::State& state) {
  slm::phantom::PhantomConfig cfg;
  cfg.count = 1;
  cfg.master_seed = 11;
  auto set = slm::phantom::generate(cfg);
  const slm::BinaryMask& mask = *set.samples[0].mask;
  for (auto _ : state) {
    auto m = slm::geometry::measure_mask(mask);
    benchmark::DoNotOptimize(m);
  }
}
BENCHMARK(BM_MeasureMask);

void BM_PhantomGenerate(benchmark::State& state) {
  slm::phantom::PhantomConfig cfg;
  cfg.count = static_cast<int>(state.range(0));
  cfg.master_seed = 12;
  for (auto _ : state) {
    auto set = slm::phantom::generate(cfg);
    benchmark::DoNotOptimize(set.samples.data());
  }
}
BENCHMARK(BM_PhantomGenerate)->Arg(1)->Arg(16);

}  // namespace

BENCHMARK_MAIN();
