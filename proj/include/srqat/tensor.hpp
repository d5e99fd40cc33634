#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace srqat {

using Shape = std::vector<int64_t>;

/// Shape/axis mismatch between operands.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid parameter value (e.g. non-positive clipping bound).
class ValueError : public std::runtime_error {
 public:
  explicit ValueError(const std::string& what) : std::runtime_error(what) {}
};

/// Object used before it was put into a valid state (e.g. uncalibrated quantizer).
class StateError : public std::runtime_error {
 public:
  explicit StateError(const std::string& what) : std::runtime_error(what) {}
};

int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace autograd {

/// Global toggle; when disabled, ops produce detached results (no graph).
bool enabled();

struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

}  // namespace autograd

/// Dense n-dimensional double tensor with reverse-mode autodiff.
///
/// Value semantics are shared-handle: copying a Tensor aliases the same
/// storage and graph node, like the example engines this follows.
class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<double> v;
    std::vector<double> g;  // allocated lazily, same numel as v
    bool requires_grad = false;
    bool in_graph = false;  // true when this node participates in backward
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;  // reads this->g, accumulates into parents

    std::vector<double>& grad_buf() {
      if (g.empty()) g.assign(v.size(), 0.0);
      return g;
    }
  };

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// Gaussian init, N(0, stddev^2).
  static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev, bool requires_grad = false);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int64_t numel() const { return static_cast<int64_t>(n_->v.size()); }
  int64_t dim(size_t axis) const { return n_->shape.at(axis); }

  std::vector<double>& values() { return n_->v; }
  const std::vector<double>& values() const { return n_->v; }
  double item() const;

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool rg);
  bool in_graph() const { return n_->in_graph; }
  bool has_grad() const { return !n_->g.empty(); }
  std::vector<double>& grad() { return n_->grad_buf(); }
  const std::vector<double>& grad() const { return n_->g; }
  void zero_grad();

  /// Value-copy with no graph attachment.
  Tensor detach() const;

  std::shared_ptr<Node> node() const { return n_; }

  /// Builds an op result. `backprop` may be empty for non-differentiable ops.
  static Tensor make_op(Shape shape, std::vector<double> values,
                        std::vector<Tensor> inputs,
                        std::function<void(Node&)> backprop);

 private:
  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}
  std::shared_ptr<Node> n_;
};

/// Reverse-mode sweep from a scalar root. Each requires_grad leaf reachable
/// from `root` receives (accumulates) d root / d leaf.
void backward(const Tensor& root);

}  // namespace srqat
