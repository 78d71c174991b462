#include "lsbpan/imaging/transform.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "lsbpan/error.hpp"

namespace lsbpan::imaging {

using annotations::InstanceLabel;
using annotations::Mask;
using annotations::Sample;

namespace {

// Overlap weights of each output cell with the input pixels of a 1-D axis.
struct AxisWeights {
  std::vector<int> first;
  std::vector<std::vector<double>> weights;  // normalized to sum 1 per output cell
};

AxisWeights area_weights(int in_size, int out_size) {
  AxisWeights aw;
  aw.first.resize(out_size);
  aw.weights.resize(out_size);
  const double scale = static_cast<double>(in_size) / out_size;
  for (int o = 0; o < out_size; ++o) {
    const double lo = o * scale, hi = (o + 1) * scale;
    const int i0 = static_cast<int>(std::floor(lo));
    const int i1 = std::min(in_size - 1, static_cast<int>(std::ceil(hi)) - 1);
    aw.first[o] = i0;
    for (int i = i0; i <= i1; ++i) {
      const double ov = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
      aw.weights[o].push_back(std::max(0.0, ov) / scale);
    }
  }
  return aw;
}

template <class Get, class Put>
void resample_plane(int crop, int out, Get get, Put put) {
  const auto aw = area_weights(crop, out);
  std::vector<double> rows(static_cast<std::size_t>(out) * crop);
  // Horizontal pass then vertical pass.
  for (int y = 0; y < crop; ++y)
    for (int ox = 0; ox < out; ++ox) {
      double acc = 0.0;
      for (std::size_t k = 0; k < aw.weights[ox].size(); ++k) acc += aw.weights[ox][k] * get(y, aw.first[ox] + static_cast<int>(k));
      rows[static_cast<std::size_t>(y) * out + ox] = acc;
    }
  for (int oy = 0; oy < out; ++oy)
    for (int ox = 0; ox < out; ++ox) {
      double acc = 0.0;
      for (std::size_t k = 0; k < aw.weights[oy].size(); ++k)
        acc += aw.weights[oy][k] * rows[static_cast<std::size_t>(aw.first[oy] + static_cast<int>(k)) * out + ox];
      put(oy, ox, acc);
    }
}

void check_crop(int h, int w, int crop_size, int out_size) {
  if (crop_size < 1 || crop_size > std::min(h, w))
    fail(ErrorKind::data, "crop size " + std::to_string(crop_size) + " exceeds image extent " +
                              std::to_string(h) + "x" + std::to_string(w));
  if (out_size < 1) fail(ErrorKind::data, "output size must be >= 1");
}

}  // namespace

LsbImage center_crop_and_resize(const LsbImage& img, int crop_size, int out_size) {
  check_crop(img.height, img.width, crop_size, out_size);
  const int y0 = (img.height - crop_size) / 2, x0 = (img.width - crop_size) / 2;
  LsbImage out(out_size, out_size, img.channels);
  out.id = img.id;
  out.meta = img.meta;
  for (int c = 0; c < img.channels; ++c) {
    if (crop_size == out_size) {
      for (int y = 0; y < out_size; ++y)
        for (int x = 0; x < out_size; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
      continue;
    }
    resample_plane(
        crop_size, out_size, [&](int y, int x) { return static_cast<double>(img.at(c, y0 + y, x0 + x)); },
        [&](int y, int x, double v) { out.at(c, y, x) = static_cast<float>(v); });
  }
  return out;
}

Mask center_crop_and_resize(const Mask& m, int crop_size, int out_size) {
  check_crop(m.height, m.width, crop_size, out_size);
  const int y0 = (m.height - crop_size) / 2, x0 = (m.width - crop_size) / 2;
  Mask out(out_size, out_size);
  resample_plane(
      crop_size, out_size, [&](int y, int x) { return m.at(y0 + y, x0 + x) ? 1.0 : 0.0; },
      [&](int y, int x, double v) { out.set(y, x, v >= 0.5 - 1e-12); });
  return out;
}

Sample center_crop_and_resize(const Sample& s, int crop_size, int out_size) {
  Sample out;
  out.image = center_crop_and_resize(s.image, crop_size, out_size);
  out.galaxy_count = s.galaxy_count;
  out.dataset_version = s.dataset_version;
  for (const auto& inst : s.instances) {
    auto m = center_crop_and_resize(inst.mask, crop_size, out_size);
    if (m.empty()) continue;
    auto label = InstanceLabel::from_mask(inst.cls, std::move(m), inst.provenance);
    if (inst.region) label.region = center_crop_and_resize(*inst.region, crop_size, out_size);
    out.instances.push_back(std::move(label));
  }
  if (s.cirrus_mask) {
    auto m = center_crop_and_resize(*s.cirrus_mask, crop_size, out_size);
    if (!m.empty()) out.cirrus_mask = std::move(m);
  }
  return out;
}

Symmetry Symmetry::inverse() const {
  // Flips are involutions; a flip followed by k turns is its own inverse.
  if (flip) return *this;
  return {(4 - quarter_turns) % 4, false};
}

void map_point(Symmetry g, int h, int w, int y, int x, int& out_y, int& out_x) {
  if (g.flip) x = w - 1 - x;
  for (int k = 0; k < g.quarter_turns; ++k) {
    // Quarter turn of an h x w grid gives a w x h grid.
    const int ny = w - 1 - x, nx = y;
    y = ny;
    x = nx;
    std::swap(h, w);
  }
  out_y = y;
  out_x = x;
}

namespace {

template <class T>
void permute_plane(const T* src, T* dst, int h, int w, Symmetry g) {
  const int oh = (g.quarter_turns % 2) ? w : h;
  const int ow = (g.quarter_turns % 2) ? h : w;
  (void)oh;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int ny, nx;
      map_point(g, h, w, y, x, ny, nx);
      dst[static_cast<std::size_t>(ny) * ow + nx] = src[static_cast<std::size_t>(y) * w + x];
    }
}

}  // namespace

LsbImage apply_symmetry(const LsbImage& img, Symmetry g) {
  const bool swap = g.quarter_turns % 2 == 1;
  LsbImage out(swap ? img.width : img.height, swap ? img.height : img.width, img.channels);
  out.id = img.id;
  out.meta = img.meta;
  for (int c = 0; c < img.channels; ++c)
    permute_plane(img.plane(c).data(), out.plane(c).data(), img.height, img.width, g);
  return out;
}

Mask apply_symmetry(const Mask& m, Symmetry g) {
  const bool swap = g.quarter_turns % 2 == 1;
  Mask out(swap ? m.width : m.height, swap ? m.height : m.width);
  permute_plane(m.bits.data(), out.bits.data(), m.height, m.width, g);
  return out;
}

Sample apply_symmetry(const Sample& s, Symmetry g) {
  Sample out;
  out.image = apply_symmetry(s.image, g);
  out.galaxy_count = s.galaxy_count;
  out.dataset_version = s.dataset_version;
  for (const auto& inst : s.instances) {
    auto label = InstanceLabel::from_mask(inst.cls, apply_symmetry(inst.mask, g), inst.provenance);
    if (inst.region) label.region = apply_symmetry(*inst.region, g);
    out.instances.push_back(std::move(label));
  }
  if (s.cirrus_mask) out.cirrus_mask = apply_symmetry(*s.cirrus_mask, g);
  return out;
}

void add_gaussian_noise(LsbImage& img, Rng& rng, double sigma) {
  if (sigma <= 0.0) return;
  std::normal_distribution<double> noise(0.0, sigma);
  for (float& v : img.pixels) v = static_cast<float>(v + noise(rng));
}

Sample augment(const Sample& s, Rng& rng, double sigma) {
  const int h = s.image.height, w = s.image.width;
  for (const auto& inst : s.instances)
    if (inst.mask.height != h || inst.mask.width != w)
      fail(ErrorKind::data, "sample " + s.id() + ": instance mask shape differs from image");
  if (s.cirrus_mask && (s.cirrus_mask->height != h || s.cirrus_mask->width != w))
    fail(ErrorKind::data, "sample " + s.id() + ": cirrus mask shape differs from image");

  const auto g = Symmetry::from_index(uniform_int(rng, 0, 7));
  Sample out = apply_symmetry(s, g);
  add_gaussian_noise(out.image, rng, sigma);
  return out;
}

}  // namespace lsbpan::imaging
