#pragma once

#include "dimnas/tensor.hpp"

#include <span>
#include <vector>

namespace dimnas {

/// A flat parameter block: values updated in place from a gradient of the same size.
template <typename Scalar>
struct ParamSlot {
  Scalar* value = nullptr;
  const Scalar* grad = nullptr;
  Index size = 0;
  bool active = true;
};

/// Adam with a per-slot step counter. Slots are identified by position, so the
/// caller must pass them in the same order every step; inactive slots keep
/// their moments untouched (the sparse updates a weight-sharing supernet needs).
template <typename Scalar>
class Adam {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
  };

  explicit Adam(Options options) : options_(options) {}

  /// Descends along the gradient.
  void step(std::span<const ParamSlot<Scalar>> slots);

  const Options& options() const { return options_; }

 private:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  Options options_;
  std::vector<Array> first_;
  std::vector<Array> second_;
  std::vector<long> steps_;
};

/// Slots for tensors; a tensor is active when the last backward pass reached it.
template <typename Scalar, typename Named>
std::vector<ParamSlot<Scalar>> tensor_slots(const std::vector<Named>& params) {
  std::vector<ParamSlot<Scalar>> slots;
  slots.reserve(params.size());
  for (const auto& p : params) {
    auto t = p.tensor;
    slots.push_back({t.mutable_value().data(), t.grad().data(), t.numel(), t.touched()});
  }
  return slots;
}

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace dimnas
