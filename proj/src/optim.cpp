#include "dimnas/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace dimnas {

template <typename Scalar>
void Adam<Scalar>::step(std::span<const ParamSlot<Scalar>> slots) {
  if (first_.empty()) {
    for (const auto& s : slots) {
      first_.push_back(Array::Zero(s.size));
      second_.push_back(Array::Zero(s.size));
      steps_.push_back(0);
    }
  }
  if (slots.size() != first_.size()) throw std::logic_error("Adam: parameter slot count changed between steps");
  const auto b1 = static_cast<Scalar>(options_.beta1);
  const auto b2 = static_cast<Scalar>(options_.beta2);
  const auto eps = static_cast<Scalar>(options_.epsilon);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& s = slots[i];
    if (!s.active) continue;
    if (s.size != first_[i].size()) throw std::logic_error("Adam: parameter slot size changed between steps");
    Eigen::Map<Array> value(s.value, s.size);
    Eigen::Map<const Array> grad(s.grad, s.size);
    const long t = ++steps_[i];
    first_[i] = b1 * first_[i] + (Scalar(1) - b1) * grad;
    second_[i] = b2 * second_[i] + (Scalar(1) - b2) * grad.square();
    const auto c1 = static_cast<Scalar>(1.0 - std::pow(options_.beta1, static_cast<double>(t)));
    const auto c2 = static_cast<Scalar>(1.0 - std::pow(options_.beta2, static_cast<double>(t)));
    const auto lr = static_cast<Scalar>(options_.lr);
    value -= lr * (first_[i] / c1) / ((second_[i] / c2).sqrt() + eps);
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace dimnas
