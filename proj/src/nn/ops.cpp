#include "lsbpan/nn/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "lsbpan/error.hpp"

namespace lsbpan::nn {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

void require_rank3(const Tensor& t, const char* op) {
  if (t.rank() != 3) fail(ErrorKind::data, std::string(op) + ": expected a rank-3 tensor");
}

struct Broadcast {
  int c, h, w, bc, bh, bw;
  std::size_t b_index(int ci, int y, int x) const {
    return (static_cast<std::size_t>(bc == 1 ? 0 : ci) * bh + (bh == 1 ? 0 : y)) * bw + (bw == 1 ? 0 : x);
  }
};

Broadcast broadcast(const Tensor& a, const Tensor& b, const char* op) {
  require_rank3(a, op);
  require_rank3(b, op);
  for (int i = 0; i < 3; ++i)
    if (b.dim(i) != a.dim(i) && b.dim(i) != 1)
      fail(ErrorKind::data, std::string(op) + ": shapes are not broadcast-compatible");
  return {a.dim(0), a.dim(1), a.dim(2), b.dim(0), b.dim(1), b.dim(2)};
}

template <class F>
void for_each_bcast(const Broadcast& bc, F&& f) {
  std::size_t i = 0;
  for (int c = 0; c < bc.c; ++c)
    for (int y = 0; y < bc.h; ++y)
      for (int x = 0; x < bc.w; ++x, ++i) f(i, bc.b_index(c, y, x));
}

void im2col(const Tensor& x, int k, int stride, int pad, int ho, int wo, double* cols) {
  const int c_in = x.channels(), h = x.height(), w = x.width();
  const std::size_t n = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < c_in; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* row = cols + (static_cast<std::size_t>(c * k + ky) * k + kx) * n;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          double* out = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(out, out + wo, 0.0);
            continue;
          }
          const double* in = x.data() + (static_cast<std::size_t>(c) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            out[ox] = (ix >= 0 && ix < w) ? in[ix] : 0.0;
          }
        }
      }
}

void col2im(const double* cols, int c_in, int h, int w, int k, int stride, int pad, int ho, int wo, double* dx) {
  const std::size_t n = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < c_in; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const double* row = cols + (static_cast<std::size_t>(c * k + ky) * k + kx) * n;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          double* out = dx + (static_cast<std::size_t>(c) * h + iy) * w;
          const double* in = row + static_cast<std::size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) out[ix] += in[ox];
          }
        }
      }
}

template <class F, class G>
Var unary(const Var& x, F&& forward, G&& derivative) {
  Tensor out = Tensor::zeros_like(x->value);
  const auto& in = x->value;
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
  Tensor saved = out;
  return make_node(std::move(out), {x}, [saved = std::move(saved), derivative](Node& self) {
    auto& px = self.parent(0);
    auto& g = px.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * derivative(px.value[i], saved[i]);
  });
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  const Tensor& in = x->value;
  const Tensor& w = weight->value;
  require_rank3(in, "conv2d");
  if (w.rank() != 4 || w.dim(1) != in.channels() || w.dim(2) != w.dim(3))
    fail(ErrorKind::data, "conv2d: weight shape does not match input channels");
  const int c_out = w.dim(0), c_in = in.channels(), k = w.dim(2);
  const int ho = (in.height() + 2 * pad - k) / stride + 1;
  const int wo = (in.width() + 2 * pad - k) / stride + 1;
  if (ho <= 0 || wo <= 0) fail(ErrorKind::data, "conv2d: input smaller than kernel");
  const int ckk = c_in * k * k;
  const std::size_t n = static_cast<std::size_t>(ho) * wo;
  const bool pointwise = k == 1 && stride == 1 && pad == 0;

  std::vector<double> cols;
  if (!pointwise) {
    cols.resize(static_cast<std::size_t>(ckk) * n);
    im2col(in, k, stride, pad, ho, wo, cols.data());
  }
  const double* col_ptr = pointwise ? in.data() : cols.data();

  Tensor out({c_out, ho, wo});
  MapRM o(out.data(), c_out, static_cast<Eigen::Index>(n));
  o.noalias() = CMapRM(w.data(), c_out, ckk) * CMapRM(col_ptr, ckk, static_cast<Eigen::Index>(n));
  if (bias) {
    if (bias->value.size() != static_cast<std::size_t>(c_out)) fail(ErrorKind::data, "conv2d: bias size mismatch");
    for (int c = 0; c < c_out; ++c) o.row(c).array() += bias->value[static_cast<std::size_t>(c)];
  }

  std::vector<Var> parents{x, weight};
  if (bias) parents.push_back(bias);
  const bool keep_cols = weight->requires_grad && !pointwise;
  return make_node(std::move(out), std::move(parents),
                   [cols = keep_cols ? std::move(cols) : std::vector<double>{}, c_out, c_in, k, stride, pad, ho, wo,
                    ckk, n, pointwise, has_bias = static_cast<bool>(bias)](Node& self) {
                     CMapRM g(self.grad.data(), c_out, static_cast<Eigen::Index>(n));
                     Node& px = self.parent(0);
                     Node& pw = self.parent(1);
                     if (pw.requires_grad) {
                       const double* cp = pointwise ? px.value.data() : cols.data();
                       MapRM gw(pw.grad_buffer().data(), c_out, ckk);
                       gw.noalias() += g * CMapRM(cp, ckk, static_cast<Eigen::Index>(n)).transpose();
                     }
                     if (has_bias && self.parent(2).requires_grad) {
                       auto& gb = self.parent(2).grad_buffer();
                       // Plain loop: Eigen reductions peel by address alignment, which breaks bitwise determinism.
                       for (int c = 0; c < c_out; ++c) {
                         const double* row = self.grad.data() + static_cast<std::size_t>(c) * n;
                         double s = 0.0;
                         for (std::size_t i = 0; i < n; ++i) s += row[i];
                         gb[static_cast<std::size_t>(c)] += s;
                       }
                     }
                     if (px.requires_grad) {
                       const CMapRM wm(pw.value.data(), c_out, ckk);
                       if (pointwise) {
                         MapRM gx(px.grad_buffer().data(), ckk, static_cast<Eigen::Index>(n));
                         gx.noalias() += wm.transpose() * g;
                       } else {
                         MatRM dcols = wm.transpose() * g;
                         col2im(dcols.data(), c_in, px.value.height(), px.value.width(), k, stride, pad, ho, wo,
                                px.grad_buffer().data());
                       }
                     }
                   });
}

Var relu(const Var& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double out) { return out * (1.0 - out); });
}

Var square(const Var& x) {
  return unary(x, [](double v) { return v * v; }, [](double in, double) { return 2.0 * in; });
}

Var scale(const Var& x, double s) {
  return unary(x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& x, double s) {
  return unary(x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

namespace {

enum class BinOp { add, sub, mul, div };

Var binary(const Var& a, const Var& b, BinOp op, const char* name) {
  const auto bc = broadcast(a->value, b->value, name);
  Tensor out = Tensor::zeros_like(a->value);
  const auto& av = a->value;
  const auto& bv = b->value;
  for_each_bcast(bc, [&](std::size_t i, std::size_t j) {
    switch (op) {
      case BinOp::add: out[i] = av[i] + bv[j]; break;
      case BinOp::sub: out[i] = av[i] - bv[j]; break;
      case BinOp::mul: out[i] = av[i] * bv[j]; break;
      case BinOp::div: out[i] = av[i] / bv[j]; break;
    }
  });
  return make_node(std::move(out), {a, b}, [bc, op](Node& self) {
    Node& pa = self.parent(0);
    Node& pb = self.parent(1);
    const auto& g = self.grad;
    if (pa.requires_grad) {
      auto& ga = pa.grad_buffer();
      for_each_bcast(bc, [&](std::size_t i, std::size_t j) {
        switch (op) {
          case BinOp::add:
          case BinOp::sub: ga[i] += g[i]; break;
          case BinOp::mul: ga[i] += g[i] * pb.value[j]; break;
          case BinOp::div: ga[i] += g[i] / pb.value[j]; break;
        }
      });
    }
    if (pb.requires_grad) {
      auto& gb = pb.grad_buffer();
      for_each_bcast(bc, [&](std::size_t i, std::size_t j) {
        switch (op) {
          case BinOp::add: gb[j] += g[i]; break;
          case BinOp::sub: gb[j] -= g[i]; break;
          case BinOp::mul: gb[j] += g[i] * pa.value[i]; break;
          case BinOp::div: gb[j] -= g[i] * pa.value[i] / (pb.value[j] * pb.value[j]); break;
        }
      });
    }
  });
}

}  // namespace

Var add(const Var& a, const Var& b) { return binary(a, b, BinOp::add, "add"); }
Var sub(const Var& a, const Var& b) { return binary(a, b, BinOp::sub, "sub"); }
Var mul(const Var& a, const Var& b) { return binary(a, b, BinOp::mul, "mul"); }
Var div(const Var& a, const Var& b) { return binary(a, b, BinOp::div, "div"); }

Var sum_all(const Var& x) {
  return make_node(Tensor::scalar(x->value.sum()), {x}, [](Node& self) {
    auto& g = self.parent(0).grad_buffer();
    const double s = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s;
  });
}

Var mean_all(const Var& x) {
  const double n = static_cast<double>(std::max<std::size_t>(1, x->value.size()));
  return scale(sum_all(x), 1.0 / n);
}

Var add_all(const std::vector<Var>& terms) {
  if (terms.empty()) fail(ErrorKind::data, "add_all of nothing");
  Tensor out = terms[0]->value;
  for (std::size_t i = 1; i < terms.size(); ++i) {
    if (!terms[i]->value.same_shape(out)) fail(ErrorKind::data, "add_all: shape mismatch");
    out.add_(terms[i]->value);
  }
  return make_node(std::move(out), terms, [](Node& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) p->grad_buffer().add_(self.grad);
  });
}

namespace {

struct Tap {
  int i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  const double scale_f = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale_f - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, in - 1);
    taps[static_cast<std::size_t>(o)] = {i0, i1, src - i0};
  }
  return taps;
}

}  // namespace

Var upsample_bilinear(const Var& x, int out_h, int out_w) {
  const Tensor& in = x->value;
  require_rank3(in, "upsample_bilinear");
  const int c_n = in.channels(), h = in.height(), w = in.width();
  const auto ty = bilinear_taps(h, out_h), tx = bilinear_taps(w, out_w);
  Tensor out({c_n, out_h, out_w});
  for (int c = 0; c < c_n; ++c)
    for (int y = 0; y < out_h; ++y) {
      const auto& a = ty[static_cast<std::size_t>(y)];
      for (int xo = 0; xo < out_w; ++xo) {
        const auto& b = tx[static_cast<std::size_t>(xo)];
        const double top = in.at(c, a.i0, b.i0) * (1 - b.w1) + in.at(c, a.i0, b.i1) * b.w1;
        const double bot = in.at(c, a.i1, b.i0) * (1 - b.w1) + in.at(c, a.i1, b.i1) * b.w1;
        out.at(c, y, xo) = top * (1 - a.w1) + bot * a.w1;
      }
    }
  return make_node(std::move(out), {x}, [ty, tx, c_n, out_h, out_w](Node& self) {
    auto& g = self.parent(0).grad_buffer();
    for (int c = 0; c < c_n; ++c)
      for (int y = 0; y < out_h; ++y) {
        const auto& a = ty[static_cast<std::size_t>(y)];
        for (int xo = 0; xo < out_w; ++xo) {
          const auto& b = tx[static_cast<std::size_t>(xo)];
          const double v = self.grad.at(c, y, xo);
          g.at(c, a.i0, b.i0) += v * (1 - a.w1) * (1 - b.w1);
          g.at(c, a.i0, b.i1) += v * (1 - a.w1) * b.w1;
          g.at(c, a.i1, b.i0) += v * a.w1 * (1 - b.w1);
          g.at(c, a.i1, b.i1) += v * a.w1 * b.w1;
        }
      }
  });
}

Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) fail(ErrorKind::data, "concat of nothing");
  const int h = xs[0]->value.height(), w = xs[0]->value.width();
  int total = 0;
  for (const auto& v : xs) {
    require_rank3(v->value, "concat_channels");
    if (v->value.height() != h || v->value.width() != w) fail(ErrorKind::data, "concat_channels: spatial mismatch");
    total += v->value.channels();
  }
  Tensor out({total, h, w});
  std::size_t off = 0;
  for (const auto& v : xs) {
    std::copy(v->value.values().begin(), v->value.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(off));
    off += v->value.size();
  }
  return make_node(std::move(out), xs, [](Node& self) {
    std::size_t o = 0;
    for (auto& p : self.parents) {
      const std::size_t n = p->value.size();
      if (p->requires_grad) {
        auto& g = p->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[o + i];
      }
      o += n;
    }
  });
}

Var slice_channels(const Var& x, int first, int count) {
  const Tensor& in = x->value;
  require_rank3(in, "slice_channels");
  if (first < 0 || count < 1 || first + count > in.channels()) fail(ErrorKind::data, "slice_channels out of range");
  const std::size_t plane = in.plane_size();
  Tensor out({count, in.height(), in.width()});
  std::copy_n(in.data() + first * plane, count * plane, out.data());
  return make_node(std::move(out), {x}, [first, plane](Node& self) {
    auto& g = self.parent(0).grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[first * plane + i] += self.grad[i];
  });
}

Var reshape(const Var& x, std::vector<int> shape) {
  Tensor out = x->value.reshaped(std::move(shape));
  return make_node(std::move(out), {x}, [](Node& self) {
    auto& g = self.parent(0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var gather(const Var& x, const std::vector<int>& indices, std::vector<int> shape) {
  Tensor out(std::move(shape));
  if (out.size() != indices.size()) fail(ErrorKind::data, "gather: shape does not match index count");
  for (std::size_t i = 0; i < indices.size(); ++i) out[i] = x->value[static_cast<std::size_t>(indices[i])];
  return make_node(std::move(out), {x}, [indices](Node& self) {
    auto& g = self.parent(0).grad_buffer();
    for (std::size_t i = 0; i < indices.size(); ++i) g[static_cast<std::size_t>(indices[i])] += self.grad[i];
  });
}

Var depthwise_fixed(const Var& x, const Tensor& kernel) {
  const Tensor& in = x->value;
  require_rank3(in, "depthwise_fixed");
  const int k = kernel.dim(0), r = k / 2;
  const int c_n = in.channels(), h = in.height(), w = in.width();
  Tensor out = Tensor::zeros_like(in);
  for (int c = 0; c < c_n; ++c)
    for (int y = 0; y < h; ++y)
      for (int xo = 0; xo < w; ++xo) {
        double acc = 0.0;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = y + ky - r;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = xo + kx - r;
            if (ix >= 0 && ix < w) acc += kernel[static_cast<std::size_t>(ky * k + kx)] * in.at(c, iy, ix);
          }
        }
        out.at(c, y, xo) = acc;
      }
  return make_node(std::move(out), {x}, [kernel, k, r, c_n, h, w](Node& self) {
    auto& g = self.parent(0).grad_buffer();
    for (int c = 0; c < c_n; ++c)
      for (int y = 0; y < h; ++y)
        for (int xo = 0; xo < w; ++xo) {
          const double v = self.grad.at(c, y, xo);
          if (v == 0.0) continue;
          for (int ky = 0; ky < k; ++ky) {
            const int iy = y + ky - r;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = xo + kx - r;
              if (ix >= 0 && ix < w) g.at(c, iy, ix) += kernel[static_cast<std::size_t>(ky * k + kx)] * v;
            }
          }
        }
  });
}

int cell_begin(int extent, int cells, int i) { return (i * extent + cells - 1) / cells; }
int cell_of(int extent, int cells, int pos) { return pos * cells / extent; }

Var cell_mean(const Var& x, int grid) {
  const Tensor& in = x->value;
  require_rank3(in, "cell_mean");
  const int c_n = in.channels(), h = in.height(), w = in.width();
  std::vector<double> counts(static_cast<std::size_t>(grid) * grid, 0.0);
  for (int y = 0; y < h; ++y)
    for (int xo = 0; xo < w; ++xo)
      counts[static_cast<std::size_t>(cell_of(h, grid, y)) * grid + cell_of(w, grid, xo)] += c_n;
  Tensor out({1, grid, grid});
  for (int c = 0; c < c_n; ++c)
    for (int y = 0; y < h; ++y)
      for (int xo = 0; xo < w; ++xo) out[static_cast<std::size_t>(cell_of(h, grid, y)) * grid + cell_of(w, grid, xo)] += in.at(c, y, xo);
  for (std::size_t i = 0; i < counts.size(); ++i)
    if (counts[i] > 0) out[i] /= counts[i];
  return make_node(std::move(out), {x}, [counts, grid, c_n, h, w](Node& self) {
    auto& g = self.parent(0).grad_buffer();
    for (int c = 0; c < c_n; ++c)
      for (int y = 0; y < h; ++y)
        for (int xo = 0; xo < w; ++xo) {
          const std::size_t cell = static_cast<std::size_t>(cell_of(h, grid, y)) * grid + cell_of(w, grid, xo);
          g.at(c, y, xo) += self.grad[cell] / counts[cell];
        }
  });
}

Var cell_expand(const Var& x, int out_h, int out_w) {
  const Tensor& in = x->value;
  require_rank3(in, "cell_expand");
  const int c_n = in.channels(), grid = in.height();
  if (in.width() != grid) fail(ErrorKind::data, "cell_expand expects a square grid");
  Tensor out({c_n, out_h, out_w});
  for (int c = 0; c < c_n; ++c)
    for (int y = 0; y < out_h; ++y)
      for (int xo = 0; xo < out_w; ++xo) out.at(c, y, xo) = in.at(c, cell_of(out_h, grid, y), cell_of(out_w, grid, xo));
  return make_node(std::move(out), {x}, [c_n, grid, out_h, out_w](Node& self) {
    auto& g = self.parent(0).grad_buffer();
    for (int c = 0; c < c_n; ++c)
      for (int y = 0; y < out_h; ++y)
        for (int xo = 0; xo < out_w; ++xo)
          g.at(c, cell_of(out_h, grid, y), cell_of(out_w, grid, xo)) += self.grad.at(c, y, xo);
  });
}

Var channel_softmax(const Var& x) {
  const Tensor& in = x->value;
  require_rank3(in, "channel_softmax");
  const int k = in.channels();
  const std::size_t plane = in.plane_size();
  Tensor out = Tensor::zeros_like(in);
  for (std::size_t p = 0; p < plane; ++p) {
    double m = -1e300;
    for (int c = 0; c < k; ++c) m = std::max(m, in[c * plane + p]);
    double z = 0.0;
    for (int c = 0; c < k; ++c) z += (out[c * plane + p] = std::exp(in[c * plane + p] - m));
    for (int c = 0; c < k; ++c) out[c * plane + p] /= z;
  }
  Tensor saved = out;
  return make_node(std::move(out), {x}, [saved = std::move(saved), k, plane](Node& self) {
    auto& g = self.parent(0).grad_buffer();
    for (std::size_t p = 0; p < plane; ++p) {
      double dot = 0.0;
      for (int c = 0; c < k; ++c) dot += self.grad[c * plane + p] * saved[c * plane + p];
      for (int c = 0; c < k; ++c) g[c * plane + p] += saved[c * plane + p] * (self.grad[c * plane + p] - dot);
    }
  });
}

Var channel_mean(const Var& x) {
  const Tensor& in = x->value;
  require_rank3(in, "channel_mean");
  const int k = in.channels();
  const std::size_t plane = in.plane_size();
  Tensor out({1, in.height(), in.width()});
  for (int c = 0; c < k; ++c)
    for (std::size_t p = 0; p < plane; ++p) out[p] += in[c * plane + p] / k;
  return make_node(std::move(out), {x}, [k, plane](Node& self) {
    auto& g = self.parent(0).grad_buffer();
    for (int c = 0; c < k; ++c)
      for (std::size_t p = 0; p < plane; ++p) g[c * plane + p] += self.grad[p] / k;
  });
}

Var bce_with_logits(const Var& logits, const Tensor& targets) {
  const Tensor& z = logits->value;
  if (z.size() != targets.size()) fail(ErrorKind::data, "bce_with_logits: target size mismatch");
  const double n = static_cast<double>(std::max<std::size_t>(1, z.size()));
  double loss = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double v = z[i];
    // max(v,0) - v*t + log(1 + exp(-|v|))
    loss += std::max(v, 0.0) - v * targets[i] + std::log1p(std::exp(-std::abs(v)));
  }
  return make_node(Tensor::scalar(loss / n), {logits}, [targets, n](Node& self) {
    auto& px = self.parent(0);
    auto& g = px.grad_buffer();
    const double s = self.grad[0] / n;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = px.value[i];
      const double p = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      g[i] += s * (p - targets[i]);
    }
  });
}

Var smooth_l1(const Var& x, const Tensor& targets, double beta) {
  const Tensor& v = x->value;
  if (v.size() != targets.size()) fail(ErrorKind::data, "smooth_l1: target size mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = std::abs(v[i] - targets[i]);
    loss += d < beta ? 0.5 * d * d / beta : d - 0.5 * beta;
  }
  return make_node(Tensor::scalar(loss), {x}, [targets, beta](Node& self) {
    auto& px = self.parent(0);
    auto& g = px.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double d = px.value[i] - targets[i];
      const double dd = std::abs(d) < beta ? d / beta : (d > 0 ? 1.0 : -1.0);
      g[i] += self.grad[0] * dd;
    }
  });
}

Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels) {
  const Tensor& z = logits->value;
  require_rank3(z, "softmax_cross_entropy");
  const int k = z.channels();
  const std::size_t n = z.plane_size();
  if (labels.size() != n) fail(ErrorKind::data, "softmax_cross_entropy: label count mismatch");
  Tensor prob = Tensor::zeros_like(z);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double m = -1e300;
    for (int c = 0; c < k; ++c) m = std::max(m, z[c * n + i]);
    double s = 0.0;
    for (int c = 0; c < k; ++c) s += (prob[c * n + i] = std::exp(z[c * n + i] - m));
    for (int c = 0; c < k; ++c) prob[c * n + i] /= s;
    loss -= std::log(std::max(prob[static_cast<std::size_t>(labels[i]) * n + i], 1e-300));
  }
  const double denom = static_cast<double>(std::max<std::size_t>(1, n));
  return make_node(Tensor::scalar(loss / denom), {logits}, [prob, labels, k, n, denom](Node& self) {
    auto& g = self.parent(0).grad_buffer();
    const double s = self.grad[0] / denom;
    for (std::size_t i = 0; i < n; ++i)
      for (int c = 0; c < k; ++c)
        g[c * n + i] += s * (prob[c * n + i] - (labels[i] == c ? 1.0 : 0.0));
  });
}

RoiCrop roi_crop(const Var& x, const FeatureBox& box, int out) {
  const Tensor& in = x->value;
  require_rank3(in, "roi_crop");
  if (!(box.x1 > box.x0 && box.y1 > box.y0)) fail(ErrorKind::data, "roi_crop: box must have positive area");
  const int c_n = in.channels(), h = in.height(), w = in.width();
  RoiCrop result;
  result.outside = box.x1 <= 0.0 || box.y1 <= 0.0 || box.x0 >= w || box.y0 >= h;

  struct Sample1D {
    int i0, i1;
    double w1;
    bool valid;
  };
  auto axis = [out](double lo, double hi, int extent) {
    std::vector<Sample1D> s(static_cast<std::size_t>(out));
    for (int j = 0; j < out; ++j) {
      double u = lo + (j + 0.5) * (hi - lo) / out - 0.5;  // continuous -> index coordinates
      if (u < -1.0 || u > extent) {
        s[static_cast<std::size_t>(j)] = {0, 0, 0.0, false};
        continue;
      }
      u = std::clamp(u, 0.0, static_cast<double>(extent - 1));
      const int i0 = static_cast<int>(std::floor(u));
      const int i1 = std::min(i0 + 1, extent - 1);
      s[static_cast<std::size_t>(j)] = {i0, i1, u - i0, true};
    }
    return s;
  };
  const auto sy = axis(box.y0, box.y1, h), sx = axis(box.x0, box.x1, w);

  Tensor patch({c_n, out, out});
  if (!result.outside)
    for (int c = 0; c < c_n; ++c)
      for (int j = 0; j < out; ++j) {
        const auto& a = sy[static_cast<std::size_t>(j)];
        if (!a.valid) continue;
        for (int i = 0; i < out; ++i) {
          const auto& b = sx[static_cast<std::size_t>(i)];
          if (!b.valid) continue;
          const double top = in.at(c, a.i0, b.i0) * (1 - b.w1) + in.at(c, a.i0, b.i1) * b.w1;
          const double bot = in.at(c, a.i1, b.i0) * (1 - b.w1) + in.at(c, a.i1, b.i1) * b.w1;
          patch.at(c, j, i) = top * (1 - a.w1) + bot * a.w1;
        }
      }
  const bool outside = result.outside;
  result.patch = make_node(std::move(patch), {x}, [sy, sx, c_n, out, outside](Node& self) {
    if (outside) return;
    auto& g = self.parent(0).grad_buffer();
    for (int c = 0; c < c_n; ++c)
      for (int j = 0; j < out; ++j) {
        const auto& a = sy[static_cast<std::size_t>(j)];
        if (!a.valid) continue;
        for (int i = 0; i < out; ++i) {
          const auto& b = sx[static_cast<std::size_t>(i)];
          if (!b.valid) continue;
          const double v = self.grad.at(c, j, i);
          g.at(c, a.i0, b.i0) += v * (1 - a.w1) * (1 - b.w1);
          g.at(c, a.i0, b.i1) += v * (1 - a.w1) * b.w1;
          g.at(c, a.i1, b.i0) += v * a.w1 * (1 - b.w1);
          g.at(c, a.i1, b.i1) += v * a.w1 * b.w1;
        }
      }
  });
  return result;
}

}  // namespace lsbpan::nn
