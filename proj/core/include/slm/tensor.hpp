#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace slm {

namespace detail {

struct Node {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated on demand, same length as data
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Accumulates this node's output gradient into its parents' grad buffers.
  std::function<void(Node&)> backward_fn;
  int visit_mark = 0;  // scratch for topological sort
};

}  // namespace detail

/// Value-semantics handle to a shared tensor node. Row-major float64 buffer
/// plus an optional gradient slot; ops record the backward closure needed
/// for reverse-mode differentiation.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const;
  int dim(int i) const;
  std::size_t size() const;

  std::vector<double>& data();
  const std::vector<double>& data() const;
  /// Gradient buffer; allocated (zero-filled) on first access.
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  bool has_grad() const;
  void zero_grad();

  bool requires_grad() const;
  void set_requires_grad(bool rg);

  /// Value of a one-element tensor.
  double item() const;

  /// Deep copy of data/shape; no graph history, no grad.
  Tensor clone_detached() const;

  std::shared_ptr<detail::Node> node() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::Node> n);

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Reverse-mode sweep from a scalar loss. Visits each recorded node exactly
/// once in reverse topological order; gradients accumulate additively.
void backward(const Tensor& loss);

std::size_t shape_numel(const std::vector<int>& shape);
std::string shape_to_string(const std::vector<int>& shape);

/// Throws std::runtime_error naming `what` if any element is NaN/Inf.
void check_finite(const std::vector<double>& values, const std::string& what);

}  // namespace slm
