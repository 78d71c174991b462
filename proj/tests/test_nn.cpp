#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"
#include "lsbpan/error.hpp"
#include "lsbpan/nn/ops.hpp"
#include "lsbpan/rng.hpp"

using namespace lsbpan;
using namespace lsbpan::nn;

namespace {

Tensor randn(std::vector<int> shape, Rng& rng, double sd = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = normal(rng, 0.0, sd);
  return t;
}

// Weighted sum with fixed random weights so every output element matters.
Var probe(const Var& y, Rng& rng) {
  return sum_all(mul(y, constant(randn(y->value.shape(), rng))));
}

double naive_conv(const Tensor& x, const Tensor& w, int o, int oy, int ox, int stride, int pad) {
  double s = 0.0;
  const int k = w.dim(2);
  for (int c = 0; c < x.channels(); ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
        if (iy < 0 || ix < 0 || iy >= x.height() || ix >= x.width()) continue;
        s += x.at(c, iy, ix) * w[((static_cast<std::size_t>(o) * x.channels() + c) * k + ky) * k + kx];
      }
  return s;
}

}  // namespace

TEST_CASE("conv2d matches a direct loop") {
  Rng rng(1);
  for (auto [k, stride, pad] : {std::tuple{3, 1, 1}, {3, 2, 1}, {1, 1, 0}, {5, 1, 2}}) {
    const Tensor x = randn({3, 9, 7}, rng), w = randn({4, 3, k, k}, rng);
    const Var y = conv2d(constant(x), constant(w), nullptr, stride, pad);
    for (int o = 0; o < 4; ++o)
      for (int oy = 0; oy < y->value.height(); ++oy)
        for (int ox = 0; ox < y->value.width(); ++ox)
          CHECK(y->value.at(o, oy, ox) == doctest::Approx(naive_conv(x, w, o, oy, ox, stride, pad)).epsilon(1e-12));
  }
}

TEST_CASE("conv2d gradients") {
  Rng rng(2);
  for (auto [k, stride, pad] : {std::tuple{3, 1, 1}, {3, 2, 1}, {1, 1, 0}}) {
    auto x = parameter(randn({2, 6, 5}, rng));
    auto w = parameter(randn({3, 2, k, k}, rng));
    auto b = parameter(randn({3, 1, 1}, rng));
    const Tensor weights = randn(conv2d(x, w, b, stride, pad)->value.shape(), rng);
    auto loss = [&] { return sum_all(mul(conv2d(x, w, b, stride, pad), constant(weights))); };
    CHECK(testutil::max_gradient_error(loss, {x, w, b}) < 1e-6);
  }
}

TEST_CASE("elementwise ops and broadcasting gradients") {
  Rng rng(3);
  auto a = parameter(randn({2, 3, 4}, rng));
  auto b = parameter(randn({2, 1, 1}, rng));
  auto c = parameter(randn({1, 3, 4}, rng));
  auto d = parameter(Tensor({1, 1, 1}, 1.7));
  const Tensor wts = randn({2, 3, 4}, rng);
  auto loss = [&] {
    Var y = add(mul(a, b), sub(sigmoid(a), c));
    y = div(y, add_scalar(square(c), 1.0));
    y = add(relu(y), scale(y, 0.3));
    y = mul(y, d);
    return sum_all(mul(y, constant(wts)));
  };
  CHECK(testutil::max_gradient_error(loss, {a, b, c, d}) < 1e-6);
}

TEST_CASE("resampling and indexing gradients") {
  Rng rng(4);
  auto x = parameter(randn({3, 4, 5}, rng));
  auto loss_up = [&] { Rng r(9); return probe(upsample_bilinear(x, 9, 7), r); };
  CHECK(testutil::max_gradient_error(loss_up, {x}) < 1e-6);
  auto loss_cat = [&] {
    Rng r(9);
    return probe(concat_channels({slice_channels(x, 1, 2), x, slice_channels(x, 0, 1)}), r);
  };
  CHECK(testutil::max_gradient_error(loss_cat, {x}) < 1e-6);
  auto loss_gather = [&] { Rng r(9); return probe(gather(x, {0, 5, 5, 17, 59}, {5, 1, 1}), r); };
  CHECK(testutil::max_gradient_error(loss_gather, {x}) < 1e-6);
}

TEST_CASE("upsampling a constant stays constant") {
  const Var y = upsample_bilinear(constant(Tensor({1, 3, 3}, 2.5)), 12, 12);
  for (std::size_t i = 0; i < y->value.size(); ++i) CHECK(y->value[i] == doctest::Approx(2.5));
}

TEST_CASE("cell partition covers the extent") {
  for (int extent : {8, 9, 13, 32}) {
    CHECK(cell_begin(extent, 8, 0) == 0);
    CHECK(cell_begin(extent, 8, 8) == extent);
    for (int p = 0; p < extent; ++p) {
      const int c = cell_of(extent, 8, p);
      CHECK(p >= cell_begin(extent, 8, c));
      CHECK(p < cell_begin(extent, 8, c + 1));
    }
  }
}

TEST_CASE("attention building blocks gradients") {
  Rng rng(5);
  auto x = parameter(randn({3, 10, 11}, rng));
  Tensor kernel = randn({5, 5}, rng);
  auto loss = [&] {
    Rng r(9);
    Var resp = depthwise_fixed(x, kernel);
    Var e = cell_mean(square(resp), 4);
    Var att = channel_softmax(concat_channels({e, scale(e, -1.0), add_scalar(e, 0.5)}));
    Var m = div(att, add_scalar(channel_mean(att), 0.1));
    return probe(mul(slice_channels(x, 0, 3), cell_expand(m, 10, 11)), r);
  };
  CHECK(testutil::max_gradient_error(loss, {x}) < 1e-5);
}

TEST_CASE("losses") {
  Rng rng(6);
  auto z = parameter(randn({1, 3, 4}, rng, 3.0));
  Tensor t({1, 3, 4});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = i % 3 == 0 ? 1.0 : 0.0;
  CHECK(testutil::max_gradient_error([&] { return bce_with_logits(z, t); }, {z}) < 1e-6);
  Tensor target = randn({1, 3, 4}, rng);
  CHECK(testutil::max_gradient_error([&] { return smooth_l1(z, target, 1.0 / 9.0); }, {z}) < 1e-5);
  auto logits = parameter(randn({4, 5, 1}, rng));
  CHECK(testutil::max_gradient_error([&] { return softmax_cross_entropy(logits, {0, 3, 2, 2, 1}); }, {logits}) <
        1e-6);
}

TEST_CASE("bce with logits value") {
  const Var z = constant(Tensor({1, 1, 2}, std::vector<double>{0.0, 2.0}));
  const Tensor t({1, 1, 2}, std::vector<double>{1.0, 0.0});
  const double expected = (std::log(2.0) + std::log1p(std::exp(2.0))) / 2.0;
  CHECK(bce_with_logits(z, t)->value.item() == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("roi_crop of an aligned region copies it") {
  Rng rng(7);
  const Tensor x = randn({2, 10, 12}, rng);
  const RoiCrop r = roi_crop(constant(x), {3.0, 2.0, 7.0, 6.0}, 4);
  CHECK_FALSE(r.outside);
  for (int c = 0; c < 2; ++c)
    for (int j = 0; j < 4; ++j)
      for (int i = 0; i < 4; ++i) CHECK(r.patch->value.at(c, j, i) == doctest::Approx(x.at(c, 2 + j, 3 + i)));
}

TEST_CASE("roi_crop reproduces constants and ramps") {
  Tensor konst({1, 8, 8}, 3.25);
  Tensor ramp({1, 8, 8});
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) ramp.at(0, y, x) = x;
  const FeatureBox box{1.3, 2.1, 6.2, 5.4};
  const RoiCrop a = roi_crop(constant(konst), box, 7);
  const RoiCrop b = roi_crop(constant(ramp), box, 7);
  for (int j = 0; j < 7; ++j)
    for (int i = 0; i < 7; ++i) {
      CHECK(std::abs(a.patch->value.at(0, j, i) - 3.25) < 1e-12);
      // Ramp value at a sample point is its index coordinate.
      const double px = box.x0 + (i + 0.5) * (box.x1 - box.x0) / 7 - 0.5;
      CHECK(std::abs(b.patch->value.at(0, j, i) - px) < 1e-5);
    }
}

TEST_CASE("roi_crop outside the map is flagged and zero") {
  const RoiCrop r = roi_crop(constant(Tensor({1, 4, 4}, 1.0)), {10.0, 10.0, 14.0, 12.0}, 3);
  CHECK(r.outside);
  for (std::size_t i = 0; i < r.patch->value.size(); ++i) CHECK(r.patch->value[i] == 0.0);
  CHECK_THROWS_AS(roi_crop(constant(Tensor({1, 4, 4})), {1.0, 1.0, 1.0, 3.0}, 3), Error);
}

TEST_CASE("roi_crop gradients") {
  Rng rng(8);
  auto x = parameter(randn({2, 7, 6}, rng));
  auto loss = [&] { Rng r(1); return probe(roi_crop(x, {-0.4, 0.7, 5.3, 6.8}, 5).patch, r); };
  CHECK(testutil::max_gradient_error(loss, {x}) < 1e-6);
}

TEST_CASE("no-grad guard stops recording") {
  auto w = parameter(Tensor({1, 1, 1}, 2.0));
  NoGradGuard guard;
  const Var y = mul(w, w);
  CHECK_FALSE(y->requires_grad);
  CHECK(y->parents.empty());
}
