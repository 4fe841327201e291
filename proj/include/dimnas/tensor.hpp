#pragma once

#include <Eigen/Core>

#include <atomic>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dimnas {

using Index = std::int64_t;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Tensor layout: (batch, channel, spatial...) with one or two spatial axes.
/// Kernels reuse the same container as (out, in, k) or (out, in, k, k).
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<Index> dims);
  explicit Shape(std::vector<Index> dims);

  std::size_t ndim() const { return dims_.size(); }
  int spatial_rank() const { return static_cast<int>(dims_.size()) - 2; }
  Index operator[](std::size_t axis) const { return dims_.at(axis); }
  const std::vector<Index>& dims() const { return dims_; }

  Index batch() const { return dims_[0]; }
  Index channels() const { return dims_[1]; }
  // Rank-1 maps are treated as images with a single row.
  Index height() const { return spatial_rank() == 2 ? dims_[2] : 1; }
  Index width() const { return dims_.back(); }
  Index spatial_size() const { return height() * width(); }
  Index numel() const;

  Shape with_channels(Index channels) const;
  Shape with_spatial(Index height, Index width) const;

  bool operator==(const Shape&) const = default;
  std::string str() const;

 private:
  std::vector<Index> dims_;
};

namespace detail {

inline std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

template <typename Scalar>
struct Node {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using BackwardFn = std::function<void(const Array& grad_out, std::vector<Array*>& input_grads)>;

  Shape shape;
  Array value;
  Array grad;
  bool requires_grad = false;
  bool consumed = false;
  bool touched = false;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward_fn;

  Array& grad_buffer() {
    if (grad.size() != value.size()) grad = Array::Zero(value.size());
    return grad;
  }
};

bool& grad_mode_flag();

}  // namespace detail

/// Disables graph recording on the current thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Dense row-major array that participates in reverse-mode differentiation.
///
/// A Tensor is a cheap handle; copies share storage. Results of operations
/// record a backward closure when any input requires a gradient and grad mode
/// is on. `backward()` walks the recorded graph once and then releases it.
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using NodeType = detail::Node<Scalar>;
  using BackwardFn = typename NodeType::BackwardFn;

  Tensor() = default;
  Tensor(Shape shape, Array values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, Scalar value);
  static Tensor from(Shape shape, std::span<const Scalar> values);

  /// Builds an operation result; `backward` is kept only when the graph is recorded.
  static Tensor make_result(Shape shape, Array values, const std::vector<Tensor>& inputs,
                            BackwardFn backward);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node().shape; }
  Index numel() const { return node().shape.numel(); }
  std::uint64_t node_id() const { return node().id; }

  const Array& value() const { return node().value; }
  /// Direct write access; only meaningful for leaves (parameters, inputs).
  Array& mutable_value() { return node().value; }
  Scalar item() const;
  Scalar at(std::initializer_list<Index> index) const;

  bool requires_grad() const { return node().requires_grad; }
  Tensor& set_requires_grad(bool flag);
  bool has_grad() const { return node().grad.size() == node().value.size(); }
  /// Gradient buffer; zeros if nothing has been accumulated.
  const Array& grad() const;
  Array& mutable_grad() { return node().grad_buffer(); }
  /// True if a backward pass deposited gradient here since the last zero_grad().
  bool touched() const { return node().touched; }
  void zero_grad();

  /// Value copy that is disconnected from any graph.
  Tensor detach() const;

  const std::shared_ptr<NodeType>& node_ptr() const { return node_; }

 private:
  NodeType& node() const {
    if (!node_) throw std::logic_error("use of an undefined tensor");
    return *node_;
  }

  std::shared_ptr<NodeType> node_;
};

/// Runs the reverse pass from a single-element loss.
///
/// Every leaf reachable on the recorded graph accumulates into its grad. The
/// graph is released afterwards; a second call on the same loss throws.
template <typename Scalar>
void backward(const Tensor<Scalar>& loss);

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template void backward<float>(const Tensor<float>&);
extern template void backward<double>(const Tensor<double>&);

}  // namespace dimnas
