#include "slm/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

#include "slm/rng.hpp"

namespace slm {

namespace {

double weighted_sum(const Tensor& y, const std::vector<double>& coeffs) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += coeffs[i] * y.data()[i];
  return s;
}

}  // namespace

GradCheckResult grad_check(const std::string& name,
                           const std::function<Tensor(const std::vector<Tensor>&)>& op,
                           std::vector<Tensor> inputs, double tolerance, std::uint64_t coeff_seed,
                           double step) {
  Tensor y0 = op(inputs);
  Rng rng(coeff_seed);
  std::vector<double> coeffs(y0.size());
  for (double& c : coeffs) c = rng.uniform(-1.0, 1.0);

  // Analytic pass: L = sum_i coeff_i * y_i, seeded directly into y's grad.
  for (Tensor& t : inputs) t.zero_grad();
  {
    Tensor contracted = Tensor::scalar(0.0);
    // Reuse backward() by attaching a contraction node.
    auto node = contracted.node();
    node->requires_grad = true;
    node->parents = {y0.node()};
    auto yn = y0.node();
    auto cptr = std::make_shared<std::vector<double>>(coeffs);
    node->backward_fn = [yn, cptr](detail::Node& out) {
      for (std::size_t i = 0; i < yn->grad.size(); ++i) yn->grad[i] += out.grad[0] * (*cptr)[i];
    };
    node->data[0] = weighted_sum(y0, coeffs);
    backward(contracted);
  }

  double max_err = 0.0;
  for (Tensor& t : inputs) {
    if (!t.requires_grad()) continue;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double orig = t.data()[i];
      t.data()[i] = orig + step;
      double fp = weighted_sum(op(inputs), coeffs);
      t.data()[i] = orig - step;
      double fm = weighted_sum(op(inputs), coeffs);
      t.data()[i] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      const double analytic = t.grad()[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      max_err = std::max(max_err, std::abs(analytic - numeric) / denom);
    }
  }
  return {name, max_err, max_err < tolerance};
}

}  // namespace slm
