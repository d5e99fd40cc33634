#include "srqat/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace srqat {

int64_t numel_of(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

namespace autograd {

namespace {
thread_local bool g_enabled = true;
}

bool enabled() { return g_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_enabled) { g_enabled = false; }
NoGradGuard::~NoGradGuard() { g_enabled = prev_; }

}  // namespace autograd

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return from(std::move(shape), {}, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = numel_of(shape);
  return from(std::move(shape), std::vector<double>(static_cast<size_t>(n), value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  auto node = std::make_shared<Node>();
  int64_t n = numel_of(shape);
  if (values.empty()) values.assign(static_cast<size_t>(n), 0.0);
  if (static_cast<int64_t>(values.size()) != n) {
    throw ShapeError("tensor init: " + std::to_string(values.size()) +
                     " values for shape " + shape_str(shape));
  }
  node->shape = std::move(shape);
  node->v = std::move(values);
  node->requires_grad = requires_grad;
  node->in_graph = requires_grad && autograd::enabled();
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev, bool requires_grad) {
  std::normal_distribution<double> dist(0.0, stddev);
  int64_t n = numel_of(shape);
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = dist(rng);
  return from(std::move(shape), std::move(v), requires_grad);
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on non-scalar tensor of shape " + shape_str(shape()));
  }
  return n_->v[0];
}

void Tensor::set_requires_grad(bool rg) {
  n_->requires_grad = rg;
  if (rg && n_->parents.empty()) n_->in_graph = true;
}

void Tensor::zero_grad() {
  std::fill(n_->g.begin(), n_->g.end(), 0.0);
}

Tensor Tensor::detach() const {
  return from(n_->shape, n_->v, false);
}

Tensor Tensor::make_op(Shape shape, std::vector<double> values,
                       std::vector<Tensor> inputs,
                       std::function<void(Node&)> backprop) {
  bool track = autograd::enabled();
  bool any_graph = false;
  if (track) {
    for (const auto& t : inputs) any_graph = any_graph || t.in_graph();
  }
  auto out = from(std::move(shape), std::move(values), false);
  if (track && any_graph && backprop) {
    out.n_->in_graph = true;
    out.n_->parents.reserve(inputs.size());
    for (const auto& t : inputs) out.n_->parents.push_back(t.node());
    out.n_->backprop = std::move(backprop);
  }
  return out;
}

void backward(const Tensor& root) {
  if (root.numel() != 1) {
    throw ValueError("backward: root must be scalar, got shape " + shape_str(root.shape()));
  }
  if (!root.in_graph()) return;

  // Iterative post-order DFS; reverse gives topological order root-first.
  std::vector<Tensor::Node*> topo;
  std::unordered_set<Tensor::Node*> seen;
  struct Frame {
    Tensor::Node* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({root.node().get(), 0});
  seen.insert(root.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Tensor::Node* p = f.node->parents[f.next_parent++].get();
      if (p->in_graph && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      topo.push_back(f.node);
      stack.pop_back();
    }
  }

  // Interior grads restart from zero each sweep; leaves accumulate across
  // sweeps until the optimizer clears them.
  for (Tensor::Node* n : topo) {
    if (n->backprop) std::fill(n->grad_buf().begin(), n->grad_buf().end(), 0.0);
  }
  root.node()->grad_buf()[0] = 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Tensor::Node* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

}  // namespace srqat
