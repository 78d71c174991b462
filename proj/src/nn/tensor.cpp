#include "lsbpan/nn/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "lsbpan/error.hpp"

namespace lsbpan::nn {

namespace {
std::size_t count(const std::vector<int>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}
}  // namespace

Tensor::Tensor(std::vector<int> shape, double fill) : shape_(std::move(shape)), data_(count(shape_), fill) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != count(shape_)) fail(ErrorKind::data, "tensor value count does not match shape");
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::add_(const Tensor& o) {
  if (o.data_.size() != data_.size()) fail(ErrorKind::data, "tensor size mismatch in add_");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  if (count(shape) != data_.size()) fail(ErrorKind::data, "reshape changes element count");
  return Tensor(std::move(shape), data_);
}

}  // namespace lsbpan::nn
