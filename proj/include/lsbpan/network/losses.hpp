#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lsbpan/annotations/labels.hpp"
#include "lsbpan/network/anchors.hpp"
#include "lsbpan/nn/ops.hpp"
#include "lsbpan/rng.hpp"

namespace lsbpan::network {

using nn::Tensor;
using nn::Var;

struct MatchConfig {
  double positive_iou = 0.5;
  double negative_iou = 0.3;
  bool keep_best_anchor = true;  // each GT's best anchor is positive
  int max_positives = 64;
  double negative_ratio = 3.0;
  int max_mask_rois = 16;
};

struct AnchorMatch {
  std::vector<int> label;    // 1 positive, 0 negative, -1 ignored
  std::vector<int> matched;  // GT index, -1 if none
  std::vector<double> iou;   // best IoU with any GT
};

AnchorMatch match_anchors(const std::vector<Box>& anchors, const std::vector<Box>& gts, const MatchConfig& cfg);

// Up to max_positives positives and negative_ratio * max(P, 1) negatives,
// chosen uniformly at random; both lists ascending.
void sample_anchors(const AnchorMatch& match, const MatchConfig& cfg, Rng& rng, std::vector<int>& positives,
                    std::vector<int>& negatives);

struct LossTargets {
  std::vector<int> sampled;        // positives then negatives
  Tensor objectness;               // [1,1,S] labels for `sampled`
  std::vector<int> positives;      // anchor indices
  std::vector<int> positive_gt;    // matched GT per positive
  std::vector<int> classes;        // class per positive
  Tensor box_targets;              // [1,1,4P], positive-major
  std::vector<Box> mask_rois;      // image-space boxes for the mask head
  std::vector<int> mask_classes;
  Tensor mask_targets;             // [R,S,S]
  std::optional<Tensor> cirrus;    // [1,H,W]
};

// Anchor matching, sampling and regression targets for one sample.
LossTargets build_targets(const annotations::Sample& sample, const AnchorSet& anchors, const MatchConfig& cfg, Rng& rng);

// The GT mask sampled at the centers of an S x S grid over `roi`.
Tensor mask_target(const annotations::Mask& mask, const Box& roi, int size);

// Chooses mask RoIs among the positives: the best-IoU positive of each GT
// first, then the rest in random order. A positive's RoI is its decoded
// predicted box when that box overlaps its GT at IoU >= 0.5, else the GT box.
void select_mask_rois(LossTargets& targets, const annotations::Sample& sample, const AnchorSet& anchors,
                      const Tensor& box_deltas, const MatchConfig& cfg, int mask_size, Rng& rng);

struct Predictions {
  Var objectness;    // [N,1,1]
  Var class_logits;  // [K,N,1]
  Var box_deltas;    // [4,N,1]
  Var mask_logits;   // [R,S,S] or null when there are no RoIs
  Var cirrus_logits; // [1,H,W] or null when the sample has no cirrus mask
};

struct LossWeights {
  double objectness = 1.0;
  double box = 1.0;
  double classification = 1.0;
  double mask = 1.0;
  double semantic = 1.0;
};

inline constexpr double kSmoothL1Beta = 1.0 / 9.0;

struct LossTerms {
  Var objectness, box, classification, mask, semantic, total;

  // Throws ErrorKind::numeric naming the first non-finite term.
  void check_finite() const;
};

// Objectness: mean BCE over sampled anchors. Box: smooth-L1 sum over
// positives divided by max(P, 1). Class: mean cross-entropy over positives.
// Mask: mean BCE over RoI pixels. Semantic: mean BCE over the image, and a
// constant zero outside the graph when the sample has no cirrus mask.
LossTerms compute_losses(const Predictions& predictions, const LossTargets& targets, const LossWeights& weights = {});

}  // namespace lsbpan::network
