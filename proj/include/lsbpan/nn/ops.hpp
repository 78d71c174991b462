#pragma once

#include <vector>

#include "lsbpan/nn/autograd.hpp"

namespace lsbpan::nn {

// Differentiable operations on rank-3 (C, H, W) tensors. Binary elementwise
// ops broadcast the second operand along any axis where it has extent 1.

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var square(const Var& x);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& x, double s);
Var add_scalar(const Var& x, double s);

Var sum_all(const Var& x);   // -> [1,1,1]
Var mean_all(const Var& x);  // -> [1,1,1]
Var add_all(const std::vector<Var>& terms);  // sum of equally shaped tensors

// Half-pixel-centered bilinear resize with edge clamping.
Var upsample_bilinear(const Var& x, int out_h, int out_w);

Var concat_channels(const std::vector<Var>& xs);
Var slice_channels(const Var& x, int first, int count);

// Same values under a new shape of equal size.
Var reshape(const Var& x, std::vector<int> shape);

// Flat-index gather; the result takes `shape`.
Var gather(const Var& x, const std::vector<int>& indices, std::vector<int> shape);

// Per-channel correlation with one fixed k x k kernel, zero padded, same size.
Var depthwise_fixed(const Var& x, const Tensor& kernel);

// Partition of an extent into `cells` contiguous ranges: [begin(i), begin(i+1)).
int cell_begin(int extent, int cells, int i);
int cell_of(int extent, int cells, int pos);

// Mean over channels and pixels of each grid cell: [C,H,W] -> [1,G,G].
Var cell_mean(const Var& x, int grid);
// Broadcasts per-cell values back to pixels: [C,G,G] -> [C,H,W].
Var cell_expand(const Var& x, int out_h, int out_w);

Var channel_softmax(const Var& x);
Var channel_mean(const Var& x);  // -> [1,H,W]

// Mean binary cross-entropy between sigmoid(logits) and targets in [0,1].
Var bce_with_logits(const Var& logits, const Tensor& targets);
// Sum of smooth-L1 terms with transition point beta.
Var smooth_l1(const Var& x, const Tensor& targets, double beta);
// Mean cross-entropy; logits are [K, N, 1] (classes along channels).
Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels);

// Continuous box in feature-map coordinates; pixel i spans [i, i+1).
struct FeatureBox {
  double x0, y0, x1, y1;
};

struct RoiCrop {
  Var patch;            // [C, out, out]
  bool outside = false; // box does not intersect the map (patch is zero)
};

// Bilinear sampling at the out x out grid of bin centers inside the box.
RoiCrop roi_crop(const Var& x, const FeatureBox& box, int out);

}  // namespace lsbpan::nn
