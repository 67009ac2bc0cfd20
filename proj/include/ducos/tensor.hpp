#ifndef DUCOS_TENSOR_HPP
#define DUCOS_TENSOR_HPP

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ducos {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename T>
using Vec = Eigen::Array<T, Eigen::Dynamic, 1>;

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Raised for incompatible operand shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for misuse of the recorded graph (non-scalar loss, replayed backward).
class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

Index numel(const Shape& shape);
std::string shape_string(const Shape& shape);

template <typename T>
struct Node {
  Shape shape;
  Vec<T> value;
  Vec<T> grad;  // empty when absent
  bool requires_grad = false;
  bool interior = false;  // produced by a recorded operation
  bool consumed = false;  // backward already ran through this node
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Vec<T>&)> backward;

  void accumulate(const Vec<T>& g);
};

/// Dense row-major n-d array with optional gradient tracking.
///
/// Tensor is a cheap handle: copies alias the same storage. Every operation
/// in ops.hpp returns a fresh tensor and, when any input requires a gradient
/// and recording is enabled, links the result into the graph that
/// `backward` walks.
template <typename T>
class Tensor {
 public:
  using Scalar = T;

  Tensor();
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, Vec<T> values, bool requires_grad = false);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor constant(Shape shape, T value) { return Tensor(std::move(shape), value); }
  static Tensor from(Shape shape, std::initializer_list<T> values);
  static Tensor scalar(T value) { return Tensor(Shape{}, value); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  Index dim(int axis) const;
  Index numel() const { return node_->value.size(); }

  const Vec<T>& values() const { return node_->value; }
  /// Mutable storage. Only valid on leaves (parameters, inputs).
  Vec<T>& mutable_values();
  T item() const;
  T at(Index flat) const { return node_->value[flat]; }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  const Vec<T>& grad() const { return node_->grad; }
  void zero_grad();

  /// Leaf copy of the current values, disconnected from any graph.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape(), values().template cast<U>());
  }

  const std::shared_ptr<Node<T>>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Recording switch. Graph construction is skipped while any guard is alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_recording_enabled();

/// Builds an operation result. `backward` receives the upstream gradient and
/// must call `Node::accumulate` on the inputs it differentiates through.
template <typename T>
Tensor<T> record(Shape shape, Vec<T> value, std::vector<Tensor<T>> inputs,
                 std::function<void(const Vec<T>&)> backward);

/// Topologically ordered record of the operations reachable from a root.
template <typename T>
class Tape {
 public:
  static Tape record_from(const Tensor<T>& root);

  std::span<const std::shared_ptr<Node<T>>> nodes() const { return order_; }
  /// Runs the chain rule once. A second call is an error.
  void run();

 private:
  std::shared_ptr<Node<T>> root_;
  std::vector<std::shared_ptr<Node<T>>> order_;  // inputs before consumers
  bool done_ = false;
};

/// Populates gradients of every requires-grad leaf reachable from `loss`.
template <typename T>
void backward(const Tensor<T>& loss);

/// Named trainable tensor.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace ducos

#endif  // DUCOS_TENSOR_HPP
