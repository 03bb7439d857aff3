#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace adprog {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One value in the computation graph. Ops that consume at least one
// requires_grad input record their inputs and a backward rule; everything
// else is a leaf.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  // Zero-filled on first touch.
  std::vector<double>& grad_buffer();
};

}  // namespace detail

/// Dense row-major array of doubles with optional participation in
/// reverse-mode differentiation.
///
/// Tensor is a handle: copies share the underlying storage and graph node.
/// Results of ops are fresh nodes, so values are effectively immutable once
/// produced. Only leaves may be written through mutable_values(), which is
/// how optimizers and the finite-difference oracle perturb parameters.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // Seeds d(this)/d(this) = 1 and replays the tape. Requires numel() == 1.
  void backward() const;

  // New leaf holding a copy of the values.
  Tensor detach(bool requires_grad = false) const;

  const detail::Node* id() const noexcept { return node_.get(); }

  // Builds an op result. The backward rule is kept only if some input
  // requires grad; otherwise the result is a plain leaf.
  static Tensor from_op(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                        std::function<void(detail::Node&)> backward);

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Execution order of the ops reachable from a root, topologically sorted so
/// that every node precedes the nodes it feeds. Replaying it back to front
/// visits each node once, after all of its consumers have contributed.
class Tape {
 public:
  static Tape record(const Tensor& root);

  void replay() const;
  std::size_t size() const noexcept { return order_.size(); }
  const std::vector<detail::Node*>& order() const noexcept { return order_; }

 private:
  std::vector<detail::Node*> order_;
};

}  // namespace adprog
