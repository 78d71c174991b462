#include "lsbpan/network/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lsbpan/error.hpp"

namespace lsbpan::network {

using namespace lsbpan::nn;

AnchorMatch match_anchors(const std::vector<Box>& anchors, const std::vector<Box>& gts, const MatchConfig& cfg) {
  const std::size_t n = anchors.size();
  AnchorMatch m;
  m.label.assign(n, 0);
  m.matched.assign(n, -1);
  m.iou.assign(n, 0.0);
  std::vector<double> best_for_gt(gts.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double v = box_iou(anchors[i], gts[g]);
      if (v > m.iou[i]) {
        m.iou[i] = v;
        m.matched[i] = static_cast<int>(g);
      }
      best_for_gt[g] = std::max(best_for_gt[g], v);
    }
  for (std::size_t i = 0; i < n; ++i) {
    if (m.iou[i] >= cfg.positive_iou)
      m.label[i] = 1;
    else if (m.iou[i] >= cfg.negative_iou)
      m.label[i] = -1;
  }
  if (cfg.keep_best_anchor)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (best_for_gt[g] <= 0.0) continue;
        if (box_iou(anchors[i], gts[g]) == best_for_gt[g]) {
          m.label[i] = 1;
          m.matched[i] = static_cast<int>(g);
          m.iou[i] = best_for_gt[g];
        }
      }
  return m;
}

void sample_anchors(const AnchorMatch& match, const MatchConfig& cfg, Rng& rng, std::vector<int>& positives,
                    std::vector<int>& negatives) {
  std::vector<int> pos, neg;
  for (std::size_t i = 0; i < match.label.size(); ++i) {
    if (match.label[i] == 1) pos.push_back(static_cast<int>(i));
    if (match.label[i] == 0) neg.push_back(static_cast<int>(i));
  }
  auto pick = [&rng](std::vector<int>& v, std::size_t k) {
    if (v.size() > k) {
      // Partial Fisher-Yates.
      for (std::size_t i = 0; i < k; ++i) std::swap(v[i], v[i + static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(v.size() - i - 1)))]);
      v.resize(k);
    }
    std::sort(v.begin(), v.end());
  };
  pick(pos, static_cast<std::size_t>(cfg.max_positives));
  const auto n_neg = static_cast<std::size_t>(cfg.negative_ratio * static_cast<double>(std::max<std::size_t>(pos.size(), 1)));
  pick(neg, n_neg);
  positives = std::move(pos);
  negatives = std::move(neg);
}

LossTargets build_targets(const annotations::Sample& sample, const AnchorSet& anchors, const MatchConfig& cfg, Rng& rng) {
  std::vector<Box> gts;
  for (const auto& l : sample.instances) gts.push_back(to_box(l.bbox));
  const AnchorMatch match = match_anchors(anchors.boxes, gts, cfg);
  LossTargets t;
  std::vector<int> neg;
  sample_anchors(match, cfg, rng, t.positives, neg);
  t.sampled = t.positives;
  t.sampled.insert(t.sampled.end(), neg.begin(), neg.end());
  t.objectness = Tensor({1, 1, static_cast<int>(t.sampled.size())});
  for (std::size_t i = 0; i < t.positives.size(); ++i) t.objectness[i] = 1.0;
  t.box_targets = Tensor({1, 1, static_cast<int>(4 * t.positives.size())});
  for (std::size_t p = 0; p < t.positives.size(); ++p) {
    const auto a = static_cast<std::size_t>(t.positives[p]);
    const int g = match.matched[a];
    t.positive_gt.push_back(g);
    t.classes.push_back(static_cast<int>(sample.instances[static_cast<std::size_t>(g)].cls));
    const BoxDelta d = box_encode(gts[static_cast<std::size_t>(g)], anchors.boxes[a]);
    for (std::size_t j = 0; j < 4; ++j) t.box_targets[4 * p + j] = d[j];
  }
  if (sample.cirrus_mask) {
    const auto& m = *sample.cirrus_mask;
    Tensor c({1, m.height, m.width});
    for (std::size_t i = 0; i < m.bits.size(); ++i) c[i] = m.bits[i];
    t.cirrus = std::move(c);
  }
  return t;
}

Tensor mask_target(const annotations::Mask& mask, const Box& roi, int size) {
  Tensor t({1, size, size});
  for (int j = 0; j < size; ++j) {
    const int y = static_cast<int>(std::floor(roi.y0 + (j + 0.5) * roi.height() / size));
    for (int i = 0; i < size; ++i) {
      const int x = static_cast<int>(std::floor(roi.x0 + (i + 0.5) * roi.width() / size));
      if (mask.in_bounds(y, x) && mask.at(y, x)) t.at(0, j, i) = 1.0;
    }
  }
  return t;
}

void select_mask_rois(LossTargets& t, const annotations::Sample& sample, const AnchorSet& anchors,
                      const Tensor& box_deltas, const MatchConfig& cfg, int mask_size, Rng& rng) {
  const std::size_t n = anchors.size();
  const std::size_t P = t.positives.size();
  std::vector<std::size_t> order;
  std::vector<bool> used(P, false);
  // Best-overlapping positive per GT first.
  std::vector<int> best(sample.instances.size(), -1);
  std::vector<double> best_iou(sample.instances.size(), -1.0);
  for (std::size_t p = 0; p < P; ++p) {
    const auto g = static_cast<std::size_t>(t.positive_gt[p]);
    const double v = box_iou(anchors.boxes[static_cast<std::size_t>(t.positives[p])], to_box(sample.instances[g].bbox));
    if (v > best_iou[g]) {
      best_iou[g] = v;
      best[g] = static_cast<int>(p);
    }
  }
  for (int p : best)
    if (p >= 0) {
      order.push_back(static_cast<std::size_t>(p));
      used[static_cast<std::size_t>(p)] = true;
    }
  std::vector<std::size_t> rest;
  for (std::size_t p = 0; p < P; ++p)
    if (!used[p]) rest.push_back(p);
  std::shuffle(rest.begin(), rest.end(), rng);
  order.insert(order.end(), rest.begin(), rest.end());
  if (order.size() > static_cast<std::size_t>(cfg.max_mask_rois)) order.resize(static_cast<std::size_t>(cfg.max_mask_rois));

  t.mask_rois.clear();
  t.mask_classes.clear();
  const int H = sample.image.height, W = sample.image.width;
  t.mask_targets = Tensor({static_cast<int>(order.size()), mask_size, mask_size});
  const std::size_t plane = static_cast<std::size_t>(mask_size) * mask_size;
  for (std::size_t r = 0; r < order.size(); ++r) {
    const std::size_t p = order[r];
    const auto a = static_cast<std::size_t>(t.positives[p]);
    const auto& gt = sample.instances[static_cast<std::size_t>(t.positive_gt[p])];
    const Box gt_box = to_box(gt.bbox);
    Box roi = clip_box(box_decode({box_deltas[a], box_deltas[n + a], box_deltas[2 * n + a], box_deltas[3 * n + a]},
                                  anchors.boxes[a]),
                       H, W);
    if (roi.width() < 1.0 || roi.height() < 1.0 || box_iou(roi, gt_box) < 0.5) roi = gt_box;
    t.mask_rois.push_back(roi);
    t.mask_classes.push_back(t.classes[p]);
    const Tensor m = mask_target(gt.mask, roi, mask_size);
    std::copy(m.values().begin(), m.values().end(), t.mask_targets.values().begin() + static_cast<std::ptrdiff_t>(r * plane));
  }
}

void LossTerms::check_finite() const {
  const std::pair<const char*, const Var*> terms[] = {{"objectness", &objectness},
                                                      {"box", &box},
                                                      {"class", &classification},
                                                      {"mask", &mask},
                                                      {"semantic", &semantic}};
  for (const auto& [name, v] : terms)
    if (*v && !(*v)->value.all_finite()) fail(ErrorKind::numeric, std::string("non-finite ") + name + " loss");
}

LossTerms compute_losses(const Predictions& pr, const LossTargets& t, const LossWeights& w) {
  const int n = pr.objectness->value.channels();
  const auto zero = [] { return constant(Tensor::scalar(0.0)); };
  LossTerms L;
  L.objectness = t.sampled.empty() ? zero()
                                   : bce_with_logits(gather(pr.objectness, t.sampled, {1, 1, static_cast<int>(t.sampled.size())}),
                                                     t.objectness);
  const int P = static_cast<int>(t.positives.size());
  if (P == 0) {
    L.box = zero();
    L.classification = zero();
  } else {
    std::vector<int> box_idx, cls_idx;
    for (int p = 0; p < P; ++p)
      for (int j = 0; j < 4; ++j) box_idx.push_back(j * n + t.positives[static_cast<std::size_t>(p)]);
    const int K = pr.class_logits->value.channels();
    for (int k = 0; k < K; ++k)
      for (int p = 0; p < P; ++p) cls_idx.push_back(k * n + t.positives[static_cast<std::size_t>(p)]);
    L.box = scale(smooth_l1(gather(pr.box_deltas, box_idx, {1, 1, 4 * P}), t.box_targets, kSmoothL1Beta), 1.0 / P);
    L.classification = softmax_cross_entropy(gather(pr.class_logits, cls_idx, {K, P, 1}), t.classes);
  }
  L.mask = (pr.mask_logits && !t.mask_rois.empty()) ? bce_with_logits(pr.mask_logits, t.mask_targets) : zero();
  if (t.cirrus) {
    if (!pr.cirrus_logits) fail(ErrorKind::data, "cirrus target given without cirrus logits");
    L.semantic = bce_with_logits(pr.cirrus_logits, *t.cirrus);
  } else {
    L.semantic = zero();
  }
  L.total = add_all({scale(L.objectness, w.objectness), scale(L.box, w.box), scale(L.classification, w.classification),
                     scale(L.mask, w.mask), scale(L.semantic, w.semantic)});
  return L;
}

}  // namespace lsbpan::network
