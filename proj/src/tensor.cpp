#include "dimnas/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace dimnas {

Shape::Shape(std::initializer_list<Index> dims) : Shape(std::vector<Index>(dims)) {}

Shape::Shape(std::vector<Index> dims) : dims_(std::move(dims)) {
  if (dims_.size() != 3 && dims_.size() != 4) {
    throw ShapeError("tensor must have 3 or 4 axes (batch, channel, 1 or 2 spatial), got " +
                     std::to_string(dims_.size()));
  }
  for (Index d : dims_) {
    if (d <= 0) throw ShapeError("tensor dimensions must be positive: " + str());
  }
}

Index Shape::numel() const {
  return std::accumulate(dims_.begin(), dims_.end(), Index{1}, std::multiplies<>());
}

Shape Shape::with_channels(Index channels) const {
  auto dims = dims_;
  dims[1] = channels;
  return Shape(std::move(dims));
}

Shape Shape::with_spatial(Index height, Index width) const {
  auto dims = dims_;
  if (spatial_rank() == 2) {
    dims[2] = height;
    dims[3] = width;
  } else {
    if (height != 1) throw ShapeError("rank-1 tensor cannot take height " + std::to_string(height));
    dims[2] = width;
  }
  return Shape(std::move(dims));
}

std::string Shape::str() const {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < dims_.size(); ++i) out << (i ? "," : "") << dims_[i];
  out << ')';
  return out.str();
}

namespace detail {
bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, Array values) : node_(std::make_shared<NodeType>()) {
  if (values.size() != shape.numel()) {
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     shape.str());
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->id = detail::next_node_id();
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::zeros(Shape shape) {
  const Index n = shape.numel();
  return Tensor(std::move(shape), Array::Zero(n));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::full(Shape shape, Scalar value) {
  const Index n = shape.numel();
  return Tensor(std::move(shape), Array::Constant(n, value));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from(Shape shape, std::span<const Scalar> values) {
  Array array(static_cast<Index>(values.size()));
  std::copy(values.begin(), values.end(), array.data());
  return Tensor(std::move(shape), std::move(array));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::make_result(Shape shape, Array values,
                                           const std::vector<Tensor>& inputs,
                                           BackwardFn backward) {
  Tensor result(std::move(shape), std::move(values));
  if (!grad_enabled()) return result;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return result;
  result.node_->requires_grad = true;
  result.node_->backward_fn = std::move(backward);
  result.node_->inputs.reserve(inputs.size());
  for (const auto& t : inputs) result.node_->inputs.push_back(t.node_);
  return result;
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const {
  if (numel() != 1) throw ShapeError("item() needs a single-element tensor, got " + shape().str());
  return value()(0);
}

template <typename Scalar>
Scalar Tensor<Scalar>::at(std::initializer_list<Index> index) const {
  const auto& dims = shape().dims();
  if (index.size() != dims.size()) throw ShapeError("index arity mismatch for " + shape().str());
  Index flat = 0;
  std::size_t axis = 0;
  for (Index i : index) {
    if (i < 0 || i >= dims[axis]) throw ShapeError("index out of range for " + shape().str());
    flat = flat * dims[axis] + i;
    ++axis;
  }
  return value()(flat);
}

template <typename Scalar>
Tensor<Scalar>& Tensor<Scalar>::set_requires_grad(bool flag) {
  node().requires_grad = flag;
  if (flag) node().grad_buffer();
  return *this;
}

template <typename Scalar>
const typename Tensor<Scalar>::Array& Tensor<Scalar>::grad() const {
  return node().grad_buffer();
}

template <typename Scalar>
void Tensor<Scalar>::zero_grad() {
  node().grad_buffer().setZero();
  node().touched = false;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::detach() const {
  return Tensor(shape(), value());
}

template <typename Scalar>
void backward(const Tensor<Scalar>& loss) {
  using NodeType = detail::Node<Scalar>;
  using Array = typename NodeType::Array;
  if (loss.numel() != 1) throw ShapeError("backward() needs a scalar loss, got " + loss.shape().str());
  NodeType* root = loss.node_ptr().get();
  if (root->consumed) throw std::logic_error("backward() called twice on a consumed graph");
  if (!root->requires_grad) return;

  // Iterative post-order DFS over recorded interior nodes. `order` owns the
  // nodes because releasing a node's inputs may drop the last other reference.
  std::vector<std::shared_ptr<NodeType>> order;
  std::unordered_set<NodeType*> visited;
  std::vector<std::pair<std::shared_ptr<NodeType>, std::size_t>> stack{{loss.node_ptr(), 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      const auto& child = node->inputs[next++];
      if (child->requires_grad && child->backward_fn && !visited.count(child.get())) {
        visited.insert(child.get());
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(std::move(node));
    stack.pop_back();
  }

  root->grad_buffer().setConstant(Scalar(1));
  std::vector<Array*> input_grads;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeType* node = it->get();
    input_grads.clear();
    for (auto& input : node->inputs) {
      if (input->requires_grad) {
        input->touched = true;
        input_grads.push_back(&input->grad_buffer());
      } else {
        input_grads.push_back(nullptr);
      }
    }
    node->backward_fn(node->grad, input_grads);
    node->backward_fn = nullptr;
    node->inputs.clear();
    node->consumed = true;
    if (node != root) node->grad.resize(0);
  }
}

template class Tensor<float>;
template class Tensor<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);

}  // namespace dimnas
