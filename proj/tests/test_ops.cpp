#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "slm/gradcheck.hpp"
#include "slm/ops.hpp"
#include "slm/rng.hpp"
#include "slm/tensor.hpp"

using namespace slm;

namespace {

Tensor randn(std::vector<int> shape, Rng& rng, bool rg = true) {
  Tensor t = Tensor::zeros(std::move(shape), rg);
  for (double& v : t.data()) v = rng.normal();
  return t;
}

// Direct 6-loop convolution, no im2col, no BLAS: the oracle.
Tensor naive_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int K = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  Tensor y = Tensor::zeros({N, K, Ho, Wo});
  for (int n = 0; n < N; ++n)
    for (int k = 0; k < K; ++k)
      for (int i = 0; i < Ho; ++i)
        for (int j = 0; j < Wo; ++j) {
          double acc = b.data()[k];
          for (int c = 0; c < C; ++c)
            for (int u = 0; u < kh; ++u)
              for (int v = 0; v < kw; ++v) {
                const int r = i * stride + u - pad;
                const int s = j * stride + v - pad;
                if (r < 0 || r >= H || s < 0 || s >= W) continue;
                acc += x.data()[((n * C + c) * H + r) * W + s] *
                       w.data()[((k * C + c) * kh + u) * kw + v];
              }
          y.data()[((n * K + k) * Ho + i) * Wo + j] = acc;
        }
  return y;
}

// Scatter-add oracle for the 2x2 stride-2 transposed convolution.
Tensor naive_conv_transpose(const Tensor& x, const Tensor& w) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int K = w.dim(1);
  Tensor y = Tensor::zeros({N, K, 2 * H, 2 * W});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
          const double xv = x.data()[((n * C + c) * H + i) * W + j];
          for (int k = 0; k < K; ++k)
            for (int u = 0; u < 2; ++u)
              for (int v = 0; v < 2; ++v)
                y.data()[((n * K + k) * 2 * H + 2 * i + u) * 2 * W + 2 * j + v] +=
                    xv * w.data()[((c * K + k) * 2 + u) * 2 + v];
        }
  return y;
}

void check_equal(const Tensor& a, const Tensor& b, double tol = 1e-12) {
  REQUIRE(a.shape() == b.shape());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(tol).scale(1.0));
}

}  // namespace

TEST_CASE("conv2d matches the naive loop oracle over random instances") {
  Rng rng(101);
  struct Cfg { int N, C, H, W, K, k, stride, pad; };
  const Cfg cfgs[] = {
      {1, 1, 5, 5, 1, 3, 1, 1}, {2, 3, 8, 6, 4, 3, 1, 1}, {1, 2, 7, 7, 3, 3, 2, 1},
      {2, 1, 6, 9, 2, 1, 1, 0}, {1, 4, 4, 4, 4, 2, 2, 0}, {3, 2, 10, 5, 1, 5, 1, 2},
      {1, 1, 12, 12, 2, 3, 3, 0}, {2, 2, 6, 6, 2, 3, 1, 2}, {1, 3, 9, 9, 5, 3, 2, 1},
      {2, 5, 5, 7, 3, 3, 1, 1},
  };
  for (const Cfg& c : cfgs) {
    Tensor x = randn({c.N, c.C, c.H, c.W}, rng, false);
    Tensor w = randn({c.K, c.C, c.k, c.k}, rng, false);
    Tensor b = randn({c.K}, rng, false);
    check_equal(ops::conv2d(x, w, b, c.stride, c.pad), naive_conv2d(x, w, b, c.stride, c.pad));
  }
}

TEST_CASE("conv2d rejects non-exact output sizes") {
  Rng rng(1);
  Tensor x = randn({1, 1, 5, 5}, rng, false);
  Tensor w = randn({1, 1, 2, 2}, rng, false);
  Tensor b = Tensor::zeros({1});
  CHECK_THROWS(ops::conv2d(x, w, b, 2, 0));  // (5-2)/2 not exact
}

TEST_CASE("conv_transpose2x2_s2 matches the scatter-add oracle") {
  Rng rng(102);
  for (int rep = 0; rep < 10; ++rep) {
    const int N = 1 + rep % 2, C = 1 + rep % 3, K = 1 + (rep + 1) % 3;
    Tensor x = randn({N, C, 3 + rep % 4, 2 + rep % 5}, rng, false);
    Tensor w = randn({C, K, 2, 2}, rng, false);
    check_equal(ops::conv_transpose2x2_s2(x, w), naive_conv_transpose(x, w));
  }
}

TEST_CASE("max_pool2 matches window-max oracle") {
  Rng rng(103);
  for (int rep = 0; rep < 10; ++rep) {
    const int N = 1 + rep % 2, C = 1 + rep % 3, H = 2 * (2 + rep % 4), W = 2 * (1 + rep % 5);
    Tensor x = randn({N, C, H, W}, rng, false);
    Tensor y = ops::max_pool2(x);
    REQUIRE(y.shape() == std::vector<int>{N, C, H / 2, W / 2});
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < H / 2; ++i)
          for (int j = 0; j < W / 2; ++j) {
            double m = -1e300;
            for (int u = 0; u < 2; ++u)
              for (int v = 0; v < 2; ++v)
                m = std::max(m, x.data()[((n * C + c) * H + 2 * i + u) * W + 2 * j + v]);
            CHECK(y.data()[((n * C + c) * (H / 2) + i) * (W / 2) + j] == m);
          }
  }
}

TEST_CASE("batch_norm train output has zero mean and unit variance per channel") {
  Rng rng(104);
  Tensor x = randn({8, 3, 4, 4}, rng, false);
  Tensor gamma = Tensor::full({3}, 1.0);
  Tensor beta = Tensor::zeros({3});
  BatchNormState st = BatchNormState::make(3);
  Tensor y = ops::batch_norm(x, gamma, beta, Mode::Train, st);
  const int per = 8 * 4 * 4;
  for (int c = 0; c < 3; ++c) {
    double s = 0, s2 = 0;
    for (int n = 0; n < 8; ++n)
      for (int p = 0; p < 16; ++p) {
        double v = y.data()[(n * 3 + c) * 16 + p];
        s += v;
        s2 += v * v;
      }
    CHECK(s / per == doctest::Approx(0.0).epsilon(1).scale(1e-10));
    CHECK(s2 / per == doctest::Approx(1.0).epsilon(1e-3));  // eps shrinks it slightly
  }
}

TEST_CASE("batch_norm eval uses running statistics, not batch statistics") {
  Rng rng(105);
  Tensor gamma = Tensor::full({2}, 1.0);
  Tensor beta = Tensor::zeros({2});
  BatchNormState st = BatchNormState::make(2);
  // feed several train batches so running stats move off their init
  for (int it = 0; it < 30; ++it) {
    Tensor x = randn({4, 2, 3, 3}, rng, false);
    for (double& v : x.data()) v = 3.0 + 2.0 * v;
    ops::batch_norm(x, gamma, beta, Mode::Train, st);
  }
  Tensor probe = Tensor::full({1, 2, 1, 1}, 3.0);
  Tensor y = ops::batch_norm(probe, gamma, beta, Mode::Eval, st);
  // (3 - running_mean)/sqrt(running_var + eps) should be near 0 since mean~3
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y.data()[i]) < 0.2);
}

TEST_CASE("dropout: eval is identity, train scales kept units by 1/(1-p)") {
  Rng rng(106);
  Tensor x = Tensor::full({1, 1000}, 1.0);
  Rng drng(9);
  Tensor ye = ops::dropout(x, 0.5, Mode::Eval, drng);
  for (std::size_t i = 0; i < ye.size(); ++i) CHECK(ye.data()[i] == 1.0);
  Tensor yt = ops::dropout(x, 0.5, Mode::Train, drng);
  int kept = 0;
  for (std::size_t i = 0; i < yt.size(); ++i) {
    CHECK((yt.data()[i] == 0.0 || yt.data()[i] == 2.0));
    kept += yt.data()[i] != 0.0;
  }
  CHECK(kept > 380);
  CHECK(kept < 620);
}

TEST_CASE("linear matches explicit matrix multiply") {
  Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor w = Tensor::from_data({2, 3}, {1, 0, -1, 2, 1, 0});
  Tensor b = Tensor::from_data({2}, {10, 20});
  Tensor y = ops::linear(x, w, b);
  // row0: [1-3+10, 2+2+20] = [8, 24]; row1: [4-6+10, 8+5+20] = [8, 33]
  CHECK(y.data()[0] == 8.0);
  CHECK(y.data()[1] == 24.0);
  CHECK(y.data()[2] == 8.0);
  CHECK(y.data()[3] == 33.0);
}

TEST_CASE("dice_loss closed-form fixture") {
  // pred = [1,1,0,0], target = [1,0,1,0], smooth 1:
  // 1 - (2*1 + 1)/(2 + 2 + 1) = 1 - 3/5 = 0.4
  Tensor p = Tensor::from_data({1, 1, 2, 2}, {1, 1, 0, 0});
  Tensor t = Tensor::from_data({1, 1, 2, 2}, {1, 0, 1, 0});
  CHECK(ops::dice_loss(p, t).item() == doctest::Approx(0.4));
  // perfect overlap -> 0
  CHECK(ops::dice_loss(t, t).item() == doctest::Approx(0.0).epsilon(1).scale(1e-9));
}

TEST_CASE("mse_loss closed-form fixture") {
  Tensor p = Tensor::from_data({2, 1}, {3, 5});
  Tensor t = Tensor::from_data({2, 1}, {1, 1});
  CHECK(ops::mse_loss(p, t).item() == doctest::Approx((4.0 + 16.0) / 2.0));
}

TEST_CASE("concat_channels stacks along channel dim") {
  Tensor a = Tensor::from_data({1, 1, 1, 2}, {1, 2});
  Tensor b = Tensor::from_data({1, 2, 1, 2}, {3, 4, 5, 6});
  Tensor y = ops::concat_channels(a, b);
  REQUIRE(y.shape() == std::vector<int>{1, 3, 1, 2});
  CHECK(y.data() == std::vector<double>{1, 2, 3, 4, 5, 6});
}

// --- gradient checks: >= 10 random instances per differentiable op --------

TEST_CASE("gradients: conv2d, 10 instances") {
  Rng rng(201);
  for (int rep = 0; rep < 10; ++rep) {
    const int C = 1 + rep % 3, K = 1 + (rep + 1) % 3;
    auto r = grad_check(
        "conv2d",
        [](const std::vector<Tensor>& in) { return ops::conv2d(in[0], in[1], in[2], 1, 1); },
        {randn({2, C, 5, 6}, rng), randn({K, C, 3, 3}, rng), randn({K}, rng)}, 1e-4,
        17 + rep);
    CHECK_MESSAGE(r.pass, "rep ", rep, " max_rel_err ", r.max_rel_err);
  }
}

TEST_CASE("gradients: conv_transpose2x2_s2, 10 instances") {
  Rng rng(202);
  for (int rep = 0; rep < 10; ++rep) {
    const int C = 1 + rep % 3, K = 1 + (rep + 1) % 4;
    auto r = grad_check(
        "convT",
        [](const std::vector<Tensor>& in) { return ops::conv_transpose2x2_s2(in[0], in[1]); },
        {randn({2, C, 3, 4}, rng), randn({C, K, 2, 2}, rng)}, 1e-4, 29 + rep);
    CHECK_MESSAGE(r.pass, "rep ", rep, " max_rel_err ", r.max_rel_err);
  }
}

TEST_CASE("gradients: max_pool2, 10 instances") {
  Rng rng(203);
  for (int rep = 0; rep < 10; ++rep) {
    auto r = grad_check(
        "maxpool", [](const std::vector<Tensor>& in) { return ops::max_pool2(in[0]); },
        {randn({2, 2, 6, 4}, rng)}, 1e-4, 31 + rep);
    CHECK_MESSAGE(r.pass, "rep ", rep, " max_rel_err ", r.max_rel_err);
  }
}

TEST_CASE("gradients: batch_norm, 10 instances") {
  Rng rng(204);
  for (int rep = 0; rep < 10; ++rep) {
    auto r = grad_check(
        "bn",
        [](const std::vector<Tensor>& in) {
          BatchNormState st = BatchNormState::make(3);
          return ops::batch_norm(in[0], in[1], in[2], Mode::Train, st);
        },
        {randn({4, 3, 3, 3}, rng), randn({3}, rng), randn({3}, rng)}, 1e-4, 37 + rep);
    CHECK_MESSAGE(r.pass, "rep ", rep, " max_rel_err ", r.max_rel_err);
  }
}

TEST_CASE("gradients: batch_norm on 2-D FC activations") {
  Rng rng(205);
  for (int rep = 0; rep < 10; ++rep) {
    auto r = grad_check(
        "bn2d",
        [](const std::vector<Tensor>& in) {
          BatchNormState st = BatchNormState::make(5);
          return ops::batch_norm(in[0], in[1], in[2], Mode::Train, st);
        },
        {randn({6, 5}, rng), randn({5}, rng), randn({5}, rng)}, 1e-4, 41 + rep);
    CHECK_MESSAGE(r.pass, "rep ", rep, " max_rel_err ", r.max_rel_err);
  }
}

TEST_CASE("gradients: pointwise ops at 1e-6, 10 instances each") {
  Rng rng(206);
  for (int rep = 0; rep < 10; ++rep) {
    auto rs = grad_check(
        "sigmoid", [](const std::vector<Tensor>& in) { return ops::sigmoid(in[0]); },
        {randn({3, 7}, rng)}, 1e-6, 43 + rep);
    CHECK_MESSAGE(rs.pass, "sigmoid rep ", rep, " err ", rs.max_rel_err);
    auto ra = grad_check(
        "add", [](const std::vector<Tensor>& in) { return ops::add(in[0], in[1]); },
        {randn({3, 7}, rng), randn({3, 7}, rng)}, 1e-4, 47 + rep);
    CHECK_MESSAGE(ra.pass, "add rep ", rep, " err ", ra.max_rel_err);
    auto rm = grad_check(
        "mul", [](const std::vector<Tensor>& in) { return ops::mul(in[0], in[1]); },
        {randn({3, 7}, rng), randn({3, 7}, rng)}, 1e-4, 53 + rep);
    CHECK_MESSAGE(rm.pass, "mul rep ", rep, " err ", rm.max_rel_err);
  }
}

TEST_CASE("gradients: relu away from the kink") {
  Rng rng(207);
  for (int rep = 0; rep < 10; ++rep) {
    Tensor x = randn({4, 6}, rng);
    // keep inputs away from 0 so finite differences are valid
    for (double& v : x.data())
      if (std::abs(v) < 0.05) v = v < 0 ? -0.05 : 0.05;
    auto r = grad_check(
        "relu", [](const std::vector<Tensor>& in) { return ops::relu(in[0]); }, {x}, 1e-6,
        59 + rep);
    CHECK_MESSAGE(r.pass, "rep ", rep, " err ", r.max_rel_err);
  }
}

TEST_CASE("gradients: linear, losses, flatten, concat") {
  Rng rng(208);
  for (int rep = 0; rep < 10; ++rep) {
    auto rl = grad_check(
        "linear",
        [](const std::vector<Tensor>& in) { return ops::linear(in[0], in[1], in[2]); },
        {randn({3, 5}, rng), randn({4, 5}, rng), randn({4}, rng)}, 1e-6, 61 + rep);
    CHECK_MESSAGE(rl.pass, "linear rep ", rep, " err ", rl.max_rel_err);

    Tensor pred = Tensor::zeros({2, 1, 3, 3}, true);
    for (double& v : pred.data()) v = rng.uniform(0.05, 0.95);
    auto rd = grad_check(
        "dice",
        [&rng](const std::vector<Tensor>& in) {
          Tensor t = Tensor::zeros({2, 1, 3, 3});
          for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = (i * 7) % 3 == 0;
          return ops::dice_loss(in[0], t);
        },
        {pred}, 1e-6, 67 + rep);
    CHECK_MESSAGE(rd.pass, "dice rep ", rep, " err ", rd.max_rel_err);

    auto rmse = grad_check(
        "mse",
        [](const std::vector<Tensor>& in) {
          Tensor t = Tensor::from_data({3, 1}, {0.5, -1.0, 2.0});
          return ops::mse_loss(in[0], t);
        },
        {randn({3, 1}, rng)}, 1e-6, 71 + rep);
    CHECK_MESSAGE(rmse.pass, "mse rep ", rep, " err ", rmse.max_rel_err);

    auto rc = grad_check(
        "concat",
        [](const std::vector<Tensor>& in) { return ops::concat_channels(in[0], in[1]); },
        {randn({2, 2, 3, 3}, rng), randn({2, 3, 3, 3}, rng)}, 1e-6, 73 + rep);
    CHECK_MESSAGE(rc.pass, "concat rep ", rep, " err ", rc.max_rel_err);
  }
}

TEST_CASE("gradients: composite conv->bn->relu->pool->linear chain") {
  Rng rng(209);
  for (int rep = 0; rep < 3; ++rep) {
    auto r = grad_check(
        "composite",
        [](const std::vector<Tensor>& in) {
          BatchNormState st = BatchNormState::make(2);
          Tensor t = ops::conv2d(in[0], in[1], in[2], 1, 1);
          t = ops::batch_norm(t, in[3], in[4], Mode::Train, st);
          t = ops::relu(t);
          t = ops::max_pool2(t);
          t = ops::flatten(t);
          return ops::linear(t, in[5], in[6]);
        },
        {randn({2, 1, 4, 4}, rng), randn({2, 1, 3, 3}, rng), randn({2}, rng),
         randn({2}, rng), randn({2}, rng), randn({3, 8}, rng), randn({3}, rng)},
        1e-4, 79 + rep);
    CHECK_MESSAGE(r.pass, "rep ", rep, " max_rel_err ", r.max_rel_err);
  }
}

TEST_CASE("gradients: dropout train mode with fixed stream") {
  // dropout draws its mask from the rng at forward time; grad_check re-runs
  // the op for finite differences, so give it a fresh-but-identical stream
  // every call.
  Rng rng(210);
  auto r = grad_check(
      "dropout",
      [](const std::vector<Tensor>& in) {
        Rng drng(77);
        return ops::dropout(in[0], 0.4, Mode::Train, drng);
      },
      {randn({3, 9}, rng)}, 1e-6, 83);
  CHECK_MESSAGE(r.pass, "err ", r.max_rel_err);
}
