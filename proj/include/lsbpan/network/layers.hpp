#pragma once

#include <string>
#include <vector>

#include "lsbpan/nn/ops.hpp"
#include "lsbpan/rng.hpp"

namespace lsbpan::network {

using nn::Tensor;
using nn::Var;

// Optimizer group a parameter belongs to.
enum class ParamGroup { instance, semantic };

struct Param {
  std::string name;
  Var var;
  ParamGroup group = ParamGroup::instance;
};

class ParamStore {
 public:
  Var add(std::string name, Tensor init, ParamGroup group);
  const std::vector<Param>& params() const { return params_; }
  std::vector<Param>& params() { return params_; }
  const Param* find(const std::string& name) const;
  Param* find(const std::string& name);
  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::vector<Param> params_;
};

// Weight of shape {out, fan_in...} whose flattened rows (or columns, when
// out > fan_in) are orthonormal, rescaled so the mean squared row norm is
// gain^2.
Tensor orthogonal_init(std::vector<int> shape, double gain, Rng& rng);

inline constexpr double kReluGain = 1.4142135623730951;

struct Conv {
  Var weight;
  Var bias;  // may be null
  int stride = 1;
  int pad = 0;

  Var operator()(const Var& x) const { return nn::conv2d(x, weight, bias, stride, pad); }
  int out_channels() const { return weight->value.dim(0); }
};

struct ConvSpec {
  int in = 0;
  int out = 0;
  int kernel = 3;
  int stride = 1;
  double gain = kReluGain;
  bool bias = true;
  double bias_init = 0.0;
};

Conv make_conv(ParamStore& store, const std::string& name, const ConvSpec& spec, ParamGroup group, Rng& rng);

// Grows a first-layer kernel from 3 to 4 input channels; the new slice is a
// copy of the third. Throws ErrorKind::data for any other input width.
Tensor expand_input_channels(const Tensor& weight);

}  // namespace lsbpan::network
