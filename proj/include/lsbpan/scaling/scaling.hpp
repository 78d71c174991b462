#pragma once

#include <array>

#include "lsbpan/nn/autograd.hpp"
#include "lsbpan/nn/tensor.hpp"

namespace lsbpan::scaling {

using nn::Tensor;

// Per-channel arcsinh stretch parameters.
struct ScalingParams {
  std::array<double, 2> a{1.0, 1.0};
  std::array<double, 2> b{0.0, 0.0};
};

// [2,H,W] -> [4,H,W]: channels 0-1 are asinh(a*x + b), channels 2-3 are x.
Tensor scale_forward(const Tensor& x, const ScalingParams& params);

struct ScalingGradients {
  std::array<double, 2> da{0.0, 0.0};
  std::array<double, 2> db{0.0, 0.0};
  Tensor dx;  // [2,H,W]
};

// `upstream` is [4,H,W], or [2,H,W] when only the stretched channels carry
// gradient.
ScalingGradients scale_gradients(const Tensor& x, const ScalingParams& params, const Tensor& upstream);

// Autograd form. `a` and `b` are [2,1,1] parameter nodes.
nn::Var scale_layer(const nn::Var& x, const nn::Var& a, const nn::Var& b);

}  // namespace lsbpan::scaling
