#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "slm/checkpoint.hpp"
#include "slm/ops.hpp"
#include "slm/rng.hpp"
#include "slm/tensor.hpp"

using namespace slm;

TEST_CASE("rng: identical seeds give identical streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("rng: keyed streams with different keys diverge") {
  Rng a = Rng::keyed({1, 2, 3});
  Rng b = Rng::keyed({1, 2, 4});
  int same = 0;
  for (int i = 0; i < 50; ++i) same += a.next_u64() == b.next_u64();
  CHECK(same == 0);
}

TEST_CASE("rng: uniform stays in range and has a sane mean") {
  Rng rng(7);
  double sum = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("rng: normal moments") {
  Rng rng(11);
  const int n = 50000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  CHECK(s / n == doctest::Approx(0.0).epsilon(1).scale(0.03));
  CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("rng: gamma moments match shape/scale for k=3, theta=2") {
  Rng rng(13);
  const int n = 50000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    double x = rng.gamma(3.0, 2.0);
    CHECK(x > 0.0);
    s += x;
    s2 += x * x;
  }
  const double mean = s / n;
  const double var = s2 / n - mean * mean;
  CHECK(mean == doctest::Approx(6.0).epsilon(0.03));   // k*theta
  CHECK(var == doctest::Approx(12.0).epsilon(0.08));   // k*theta^2
}

TEST_CASE("rng: gamma with k < 1 stays positive and has the right mean") {
  Rng rng(17);
  const int n = 50000;
  double s = 0;
  for (int i = 0; i < n; ++i) {
    double x = rng.gamma(0.5, 1.0);
    CHECK(x > 0.0);
    s += x;
  }
  CHECK(s / n == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("rng: shuffle is a permutation and is seed-deterministic") {
  std::vector<int> v(100);
  std::iota(v.begin(), v.end(), 0);
  std::vector<int> w = v;
  Rng a(3), b(3);
  a.shuffle(v);
  b.shuffle(w);
  CHECK(v == w);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 100; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("rng: uniform_int covers the range without bias clumping") {
  Rng rng(5);
  std::vector<int> hist(10, 0);
  for (int i = 0; i < 10000; ++i) ++hist[rng.uniform_int(10)];
  for (int h : hist) CHECK(h > 800);
}

TEST_CASE("tensor: construction and item") {
  Tensor t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.size() == 6);
  CHECK(t.dim(0) == 2);
  CHECK(t.dim(1) == 3);
  CHECK(Tensor::scalar(4.5).item() == 4.5);
  CHECK_THROWS(t.item());
}

TEST_CASE("tensor: backward accumulates additively on reuse") {
  // y = x + x => dy/dx = 2
  Tensor x = Tensor::scalar(3.0, true);
  Tensor y = ops::add(x, x);
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(2.0));
}

TEST_CASE("tensor: backward requires a scalar") {
  Tensor x = Tensor::from_data({2}, {1, 2}, true);
  Tensor y = ops::mul(x, x);
  CHECK_THROWS(backward(y));
}

TEST_CASE("tensor: diamond graph gradient") {
  // z = (x*x) + (x*x); dz/dx = 4x
  Tensor x = Tensor::scalar(5.0, true);
  Tensor a = ops::mul(x, x);
  Tensor b = ops::mul(x, x);
  Tensor z = ops::add(a, b);
  backward(z);
  CHECK(x.grad()[0] == doctest::Approx(20.0));
}

TEST_CASE("checkpoint: bit-exact round trip with metadata") {
  Rng rng(23);
  Tensor a = Tensor::zeros({3, 4}, true);
  for (double& v : a.data()) v = rng.normal() * 1e-7;
  Tensor b = Tensor::zeros({5});
  for (double& v : b.data()) v = rng.uniform(-1e9, 1e9);

  const std::string path = "/tmp/slm_test_ckpt.bin";
  save_checkpoint(path, {{"layer.w", a, true}, {"bn.running_mean", b, false}},
                  "{\"arch\":\"X\"}");
  Checkpoint ck = load_checkpoint(path);
  CHECK(ck.meta_json == "{\"arch\":\"X\"}");
  REQUIRE(ck.tensors.count("layer.w") == 1);
  REQUIRE(ck.tensors.count("bn.running_mean") == 1);
  CHECK(ck.tensors.at("layer.w").shape() == std::vector<int>{3, 4});
  // bit-exact: doubles must compare equal, not approximately
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(ck.tensors.at("layer.w").data()[i] == a.data()[i]);
  for (std::size_t i = 0; i < b.size(); ++i)
    CHECK(ck.tensors.at("bn.running_mean").data()[i] == b.data()[i]);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint: loading a missing file throws") {
  CHECK_THROWS(load_checkpoint("/tmp/definitely_not_there.bin"));
}
