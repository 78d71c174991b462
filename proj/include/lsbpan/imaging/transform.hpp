#pragma once

#include "lsbpan/annotations/labels.hpp"
#include "lsbpan/imaging/image.hpp"
#include "lsbpan/rng.hpp"

namespace lsbpan::imaging {

// Centered square crop of side crop_size, then area-averaged resampling to
// out_size x out_size. Throws ErrorKind::data when the crop does not fit.
LsbImage center_crop_and_resize(const LsbImage& img, int crop_size, int out_size);

// Mask counterpart: a pixel is set when at least half its area is covered.
annotations::Mask center_crop_and_resize(const annotations::Mask& m, int crop_size, int out_size);

// Crops/resizes image and every mask, recomputing bboxes. Instances that
// vanish are dropped.
annotations::Sample center_crop_and_resize(const annotations::Sample& s, int crop_size, int out_size);

// Element of the dihedral group of the square: k quarter turns
// (counter-clockwise in display orientation) after an optional horizontal flip.
struct Symmetry {
  int quarter_turns = 0;  // 0..3
  bool flip = false;

  static Symmetry from_index(int i) { return {i % 4, i >= 4}; }
  int index() const { return quarter_turns + (flip ? 4 : 0); }
  Symmetry inverse() const;
};

// Destination (y, x) of source pixel (y, x) in an h x w grid.
void map_point(Symmetry g, int h, int w, int y, int x, int& out_y, int& out_x);

LsbImage apply_symmetry(const LsbImage& img, Symmetry g);
annotations::Mask apply_symmetry(const annotations::Mask& m, Symmetry g);
annotations::Sample apply_symmetry(const annotations::Sample& s, Symmetry g);

// Adds i.i.d. N(0, sigma^2) noise to every pixel.
void add_gaussian_noise(LsbImage& img, Rng& rng, double sigma);

inline constexpr double kDefaultNoiseSigma = 0.1;

// Random flip/rot90 applied to image and all masks, then pixel noise.
annotations::Sample augment(const annotations::Sample& s, Rng& rng, double sigma = kDefaultNoiseSigma);

}  // namespace lsbpan::imaging
