#include "lsbpan/scaling/scaling.hpp"

#include <cmath>

#include "lsbpan/error.hpp"

namespace lsbpan::scaling {

namespace {

void check_input(const Tensor& x) {
  if (x.rank() != 3 || x.channels() != 2) fail(ErrorKind::data, "scaling expects a [2,H,W] input");
}

}  // namespace

Tensor scale_forward(const Tensor& x, const ScalingParams& params) {
  check_input(x);
  const std::size_t plane = x.plane_size();
  Tensor out({4, x.height(), x.width()});
  for (int c = 0; c < 2; ++c) {
    const double a = params.a[static_cast<std::size_t>(c)];
    const double b = params.b[static_cast<std::size_t>(c)];
    for (std::size_t p = 0; p < plane; ++p) {
      const double v = x[c * plane + p];
      out[c * plane + p] = std::asinh(a * v + b);
      out[(c + 2) * plane + p] = v;
    }
  }
  return out;
}

ScalingGradients scale_gradients(const Tensor& x, const ScalingParams& params, const Tensor& upstream) {
  check_input(x);
  if (upstream.rank() != 3 || (upstream.channels() != 2 && upstream.channels() != 4) ||
      upstream.height() != x.height() || upstream.width() != x.width())
    fail(ErrorKind::data, "scale_gradients: upstream shape mismatch");
  const bool identity_path = upstream.channels() == 4;
  const std::size_t plane = x.plane_size();
  ScalingGradients g;
  g.dx = Tensor::zeros_like(x);
  for (int c = 0; c < 2; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    const double a = params.a[ci], b = params.b[ci];
    double da = 0.0, db = 0.0;
    for (std::size_t p = 0; p < plane; ++p) {
      const double v = x[c * plane + p];
      const double z = a * v + b;
      const double d = upstream[c * plane + p] / std::sqrt(z * z + 1.0);
      da += d * v;
      db += d;
      g.dx[c * plane + p] = d * a + (identity_path ? upstream[(c + 2) * plane + p] : 0.0);
    }
    g.da[ci] = da;
    g.db[ci] = db;
  }
  return g;
}

nn::Var scale_layer(const nn::Var& x, const nn::Var& a, const nn::Var& b) {
  if (a->value.size() != 2 || b->value.size() != 2) fail(ErrorKind::data, "scale_layer: parameters must have 2 entries");
  auto params_of = [](const nn::Node& na, const nn::Node& nb) {
    ScalingParams p;
    p.a = {na.value[0], na.value[1]};
    p.b = {nb.value[0], nb.value[1]};
    return p;
  };
  Tensor out = scale_forward(x->value, params_of(*a, *b));
  return nn::make_node(std::move(out), {x, a, b}, [params_of](nn::Node& self) {
    nn::Node& px = self.parent(0);
    nn::Node& pa = self.parent(1);
    nn::Node& pb = self.parent(2);
    const auto g = scale_gradients(px.value, params_of(pa, pb), self.grad);
    if (px.requires_grad) px.grad_buffer().add_(g.dx);
    if (pa.requires_grad)
      for (std::size_t c = 0; c < 2; ++c) pa.grad_buffer()[c] += g.da[c];
    if (pb.requires_grad)
      for (std::size_t c = 0; c < 2; ++c) pb.grad_buffer()[c] += g.db[c];
  });
}

}  // namespace lsbpan::scaling
