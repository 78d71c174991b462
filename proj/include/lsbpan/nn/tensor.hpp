#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace lsbpan::nn {

// Dense row-major double tensor. Feature maps are rank 3 (C, H, W); conv
// weights are rank 4 (O, I, k, k).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);
  Tensor(std::vector<int> shape, std::vector<double> values);

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }
  static Tensor scalar(double v) { return Tensor({1, 1, 1}, v); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  // Rank-3 view.
  int channels() const { return shape_[0]; }
  int height() const { return shape_[1]; }
  int width() const { return shape_[2]; }
  std::size_t plane_size() const { return static_cast<std::size_t>(shape_[1]) * shape_[2]; }
  double& at(int c, int y, int x) { return data_[c * plane_size() + static_cast<std::size_t>(y) * shape_[2] + x]; }
  double at(int c, int y, int x) const {
    return data_[c * plane_size() + static_cast<std::size_t>(y) * shape_[2] + x];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }
  std::span<double> channel(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const double> channel(int c) const { return {data_.data() + c * plane_size(), plane_size()}; }

  void fill(double v);
  void add_(const Tensor& o);  // elementwise +=, shapes must match
  double sum() const;
  double item() const { return data_.at(0); }
  bool all_finite() const;
  Tensor reshaped(std::vector<int> shape) const;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

}  // namespace lsbpan::nn
