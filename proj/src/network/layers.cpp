#include "lsbpan/network/layers.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "lsbpan/error.hpp"

namespace lsbpan::network {

Var ParamStore::add(std::string name, Tensor init, ParamGroup group) {
  if (find(name)) fail(ErrorKind::config, "duplicate parameter name " + name);
  Var v = nn::parameter(std::move(init));
  params_.push_back({std::move(name), v, group});
  return v;
}

const Param* ParamStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

Param* ParamStore::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.var->grad = Tensor();
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var->value.size();
  return n;
}

Tensor orthogonal_init(std::vector<int> shape, double gain, Rng& rng) {
  Tensor t(std::move(shape));
  const auto rows = static_cast<Eigen::Index>(t.dim(0));
  const auto cols = static_cast<Eigen::Index>(t.size() / static_cast<std::size_t>(rows));
  const bool wide = rows <= cols;
  // QR of a tall Gaussian matrix; its thin Q has orthonormal columns.
  const Eigen::Index m = wide ? cols : rows, n = wide ? rows : cols;
  Eigen::MatrixXd g(m, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < m; ++i) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m, n);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  const Eigen::MatrixXd w = wide ? Eigen::MatrixXd(q.transpose()) : q;
  const double frob2 = w.squaredNorm();
  const double s = gain * std::sqrt(static_cast<double>(rows) / frob2);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) t[static_cast<std::size_t>(i * cols + j)] = s * w(i, j);
  return t;
}

Conv make_conv(ParamStore& store, const std::string& name, const ConvSpec& spec, ParamGroup group, Rng& rng) {
  Conv c;
  c.stride = spec.stride;
  c.pad = spec.kernel / 2;
  c.weight = store.add(name + ".weight", orthogonal_init({spec.out, spec.in, spec.kernel, spec.kernel}, spec.gain, rng),
                       group);
  if (spec.bias) c.bias = store.add(name + ".bias", Tensor({spec.out, 1, 1}, spec.bias_init), group);
  return c;
}

Tensor expand_input_channels(const Tensor& weight) {
  if (weight.rank() != 4 || weight.dim(1) != 3)
    fail(ErrorKind::data, "expand_input_channels expects a kernel with 3 input channels");
  const int out = weight.dim(0), k = weight.dim(2);
  const std::size_t slice = static_cast<std::size_t>(k) * weight.dim(3);
  Tensor expanded({out, 4, k, weight.dim(3)});
  for (int o = 0; o < out; ++o) {
    const double* src = weight.data() + static_cast<std::size_t>(o) * 3 * slice;
    double* dst = expanded.data() + static_cast<std::size_t>(o) * 4 * slice;
    std::copy(src, src + 3 * slice, dst);
    std::copy(src + 2 * slice, src + 3 * slice, dst + 3 * slice);
  }
  return expanded;
}

}  // namespace lsbpan::network
