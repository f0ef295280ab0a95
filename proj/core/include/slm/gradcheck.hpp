#pragma once

#include <functional>
#include <string>
#include <vector>

#include "slm/tensor.hpp"

namespace slm {

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

/// Compares analytic gradients of `op` against central finite differences.
/// The op output is contracted with fixed random coefficients to a scalar so
/// the full Jacobian is exercised. All inputs marked requires_grad are
/// perturbed elementwise with the given step.
GradCheckResult grad_check(const std::string& name,
                           const std::function<Tensor(const std::vector<Tensor>&)>& op,
                           std::vector<Tensor> inputs, double tolerance,
                           std::uint64_t coeff_seed = 17, double step = 1e-5);

}  // namespace slm
