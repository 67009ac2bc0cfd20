#include "ducos/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace ducos {

namespace {
thread_local bool g_recording = true;
}  // namespace

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) {
    if (d < 0) throw ShapeError("negative extent in shape " + shape_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

NoGradGuard::NoGradGuard() : previous_(g_recording) { g_recording = false; }
NoGradGuard::~NoGradGuard() { g_recording = previous_; }
bool grad_recording_enabled() { return g_recording; }

template <typename T>
void Node<T>::accumulate(const Vec<T>& g) {
  if (!requires_grad) return;
  if (grad.size() != value.size()) {
    grad = g;
  } else {
    grad += g;
  }
}

template <typename T>
Tensor<T>::Tensor() = default;

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : node_(std::make_shared<Node<T>>()) {
  const Index n = ducos::numel(shape);
  node_->shape = std::move(shape);
  node_->value = Vec<T>::Constant(n, fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, Vec<T> values, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
  if (ducos::numel(shape) != values.size()) {
    throw ShapeError("shape " + shape_string(shape) + " does not match " + std::to_string(values.size()) +
                     " values");
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  set_requires_grad(requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::initializer_list<T> values) {
  Vec<T> v(static_cast<Index>(values.size()));
  Index i = 0;
  for (T x : values) v[i++] = x;
  return Tensor(std::move(shape), std::move(v));
}

template <typename T>
Index Tensor<T>::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("axis out of range for " + shape_string(shape()));
  return node_->shape[static_cast<std::size_t>(axis)];
}

template <typename T>
Vec<T>& Tensor<T>::mutable_values() {
  if (node_->interior) throw GraphError("cannot mutate the output of a recorded operation");
  return node_->value;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  if (node_->interior) throw GraphError("requires_grad can only be set on leaves");
  node_->requires_grad = on;
  if (on) {
    zero_grad();
  } else {
    node_->grad.resize(0);
  }
  return *this;
}

template <typename T>
void Tensor<T>::zero_grad() {
  node_->grad = Vec<T>::Zero(node_->value.size());
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(shape(), values());
}

template <typename T>
Tensor<T> record(Shape shape, Vec<T> value, std::vector<Tensor<T>> inputs,
                 std::function<void(const Vec<T>&)> backward) {
  Tensor<T> out(std::move(shape), std::move(value));
  if (!g_recording) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;

  auto& node = *out.node();
  node.requires_grad = true;
  node.interior = true;
  node.parents.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (in.node()->consumed) throw GraphError("input belongs to a graph whose backward already ran");
    node.parents.push_back(in.node());
  }
  node.backward = std::move(backward);
  return out;
}

template <typename T>
Tape<T> Tape<T>::record_from(const Tensor<T>& root) {
  Tape tape;
  tape.root_ = root.node();
  if (tape.root_->consumed) throw GraphError("backward already ran on this graph");

  // Iterative post-order DFS; interior nodes only.
  std::unordered_set<const Node<T>*> seen;
  std::vector<std::pair<std::shared_ptr<Node<T>>, std::size_t>> stack;
  if (tape.root_->interior) {
    stack.emplace_back(tape.root_, 0);
    seen.insert(tape.root_.get());
  }
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      auto parent = node->parents[next++];
      if (parent->consumed) throw GraphError("backward already ran through part of this graph");
      if (parent->interior && seen.insert(parent.get()).second) stack.emplace_back(parent, 0);
    } else {
      tape.order_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

template <typename T>
void Tape<T>::run() {
  if (done_ || root_->consumed) throw GraphError("backward already ran on this graph");
  done_ = true;
  if (!root_->requires_grad) return;

  root_->accumulate(Vec<T>::Ones(root_->value.size()));
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    Node<T>& node = **it;
    if (node.grad.size() == node.value.size()) node.backward(node.grad);
  }
  for (auto& node : order_) {
    node->consumed = true;
    node->backward = nullptr;
    node->parents.clear();
    node->grad.resize(0);
  }
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw GraphError("backward requires a scalar loss");
  }
  Tape<T>::record_from(loss).run();
}

template struct Node<float>;
template struct Node<double>;
template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template Tensor<float> record(Shape, Vec<float>, std::vector<Tensor<float>>, std::function<void(const Vec<float>&)>);
template Tensor<double> record(Shape, Vec<double>, std::vector<Tensor<double>>,
                               std::function<void(const Vec<double>&)>);
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace ducos
