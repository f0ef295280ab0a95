#include "slm/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace slm {

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor shape dims must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_to_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

void check_finite(const std::vector<double>& values, const std::string& what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw std::runtime_error("non-finite value in " + what);
  }
}

Tensor Tensor::wrap(std::shared_ptr<detail::Node> n) {
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto n = std::make_shared<detail::Node>();
  n->data.assign(shape_numel(shape), 0.0);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.data()) v = value;
  return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size())
    throw std::invalid_argument("from_data: shape " + shape_to_string(shape) +
                                " does not match data length");
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

const std::vector<int>& Tensor::shape() const {
  if (!node_) throw std::runtime_error("undefined tensor");
  return node_->shape;
}

int Tensor::dim(int i) const { return shape().at(static_cast<std::size_t>(i)); }

std::size_t Tensor::size() const {
  if (!node_) throw std::runtime_error("undefined tensor");
  return node_->data.size();
}

std::vector<double>& Tensor::data() {
  if (!node_) throw std::runtime_error("undefined tensor");
  return node_->data;
}

const std::vector<double>& Tensor::data() const {
  if (!node_) throw std::runtime_error("undefined tensor");
  return node_->data;
}

std::vector<double>& Tensor::grad() {
  if (!node_) throw std::runtime_error("undefined tensor");
  if (node_->grad.size() != node_->data.size()) node_->grad.assign(node_->data.size(), 0.0);
  return node_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (!node_ || node_->grad.size() != node_->data.size())
    throw std::runtime_error("gradient not populated");
  return node_->grad;
}

bool Tensor::has_grad() const {
  return node_ && node_->grad.size() == node_->data.size();
}

void Tensor::zero_grad() {
  if (node_) node_->grad.assign(node_->data.size(), 0.0);
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool rg) {
  if (!node_) throw std::runtime_error("undefined tensor");
  node_->requires_grad = rg;
}

double Tensor::item() const {
  if (size() != 1) throw std::runtime_error("item(): tensor is not scalar");
  return data()[0];
}

Tensor Tensor::clone_detached() const {
  return from_data(shape(), data(), false);
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward: undefined loss");
  if (loss.size() != 1) throw std::invalid_argument("backward: loss must be scalar");

  // Iterative post-order DFS. visit_mark: 0 unseen, 1 on stack, 2 done.
  std::vector<detail::Node*> order;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  loss.node()->visit_mark = 1;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->visit_mark == 1) throw std::runtime_error("backward: cycle in graph");
      if (p->visit_mark == 0) {
        p->visit_mark = 1;
        stack.emplace_back(p, 0);
      }
    } else {
      node->visit_mark = 2;
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (detail::Node* n : order) {
    if (n->grad.size() != n->data.size()) n->grad.assign(n->data.size(), 0.0);
  }
  loss.node()->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    n->visit_mark = 0;  // reset for future sweeps
    if (n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace slm
