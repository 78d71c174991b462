#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "lsbpan/nn/autograd.hpp"

namespace testutil {

using lsbpan::nn::Var;

// Largest relative error between backprop and central differences over the
// given leaves. `loss` rebuilds the graph from the current leaf values.
inline double max_gradient_error(const std::function<Var()>& loss, const std::vector<Var>& leaves, double h = 1e-5,
                                 std::size_t max_entries = 64) {
  for (const auto& l : leaves) l->grad = {};
  lsbpan::nn::backward(loss());
  double worst = 0.0;
  for (const auto& leaf : leaves) {
    const std::size_t n = leaf->value.size();
    const std::size_t step = std::max<std::size_t>(1, n / max_entries);
    for (std::size_t i = 0; i < n; i += step) {
      const double saved = leaf->value[i];
      leaf->value[i] = saved + h;
      const double up = loss()->value.item();
      leaf->value[i] = saved - h;
      const double down = loss()->value.item();
      leaf->value[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = leaf->grad.empty() ? 0.0 : leaf->grad[i];
      const double scale = std::max({1e-4, std::abs(numeric), std::abs(analytic)});
      worst = std::max(worst, std::abs(numeric - analytic) / scale);
    }
  }
  return worst;
}

}  // namespace testutil
