#pragma once

#include "dimnas/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace dimnas::testing {

struct GradCheck {
  double worst = 0.0;  // largest |analytic - numeric| / (rtol * max(|a|,|n|) + atol); <= 1 passes
  std::size_t checked = 0;
  bool ok() const { return worst <= 1.0; }
};

// Central differences in double. The atol floor only matters for entries whose true
// gradient is zero, where a relative bound has nothing to scale against.
inline GradCheck grad_check(const std::function<Tensor<double>()>& loss_fn, std::vector<Tensor<double>> inputs,
                            double rtol = 1e-3, double atol = 1e-7, double h = 1e-6) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  backward(loss_fn());
  std::vector<Eigen::ArrayXd> analytic;
  for (auto& t : inputs) analytic.push_back(t.grad());

  GradCheck result;
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto& values = inputs[i].mutable_value();
    for (Index k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + h;
      const double up = loss_fn().item();
      values[k] = saved - h;
      const double down = loss_fn().item();
      values[k] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[i][k];
      const double bound = rtol * std::max(std::abs(a), std::abs(numeric)) + atol;
      result.worst = std::max(result.worst, std::abs(a - numeric) / bound);
      ++result.checked;
    }
  }
  return result;
}

}  // namespace dimnas::testing
