#include "lsbpan/metrics/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "lsbpan/error.hpp"
#include "lsbpan/metrics/iou.hpp"

namespace lsbpan::metrics {

MatchResult match_detections(const std::vector<Detection>& preds, const std::vector<annotations::InstanceLabel>& gts,
                             InstanceClass cls, double iou_threshold) {
  MatchResult r;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i].cls == cls) r.order.push_back(i);
  std::stable_sort(r.order.begin(), r.order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });
  std::vector<std::size_t> gt_idx;
  for (std::size_t g = 0; g < gts.size(); ++g)
    if (gts[g].cls == cls) gt_idx.push_back(g);
  r.ground_truth = static_cast<int>(gt_idx.size());
  std::vector<bool> used(gt_idx.size(), false);
  int matched = 0;
  for (std::size_t p : r.order) {
    double best = -1.0;
    std::size_t best_g = 0;
    for (std::size_t k = 0; k < gt_idx.size(); ++k) {
      if (used[k]) continue;
      const double iou = mask_iou(preds[p].mask, gts[gt_idx[k]].mask);
      if (iou > best) {
        best = iou;
        best_g = k;
      }
    }
    const bool tp = best >= iou_threshold;
    if (tp) {
      used[best_g] = true;
      ++matched;
    }
    r.true_positive.push_back(tp);
  }
  r.false_negatives = r.ground_truth - matched;
  return r;
}

double ap_from_matches(std::vector<ScoredMatch> matches, int ground_truth) {
  if (ground_truth == 0) return matches.empty() ? 1.0 : 0.0;
  std::stable_sort(matches.begin(), matches.end(),
                   [](const ScoredMatch& a, const ScoredMatch& b) { return a.score > b.score; });
  const std::size_t n = matches.size();
  std::vector<double> precision(n), recall(n);
  int tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += matches[i].true_positive;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / ground_truth;
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

double average_precision(const std::vector<std::vector<Detection>>& preds,
                         const std::vector<std::vector<annotations::InstanceLabel>>& gts, InstanceClass cls,
                         double iou_threshold) {
  if (preds.size() != gts.size()) fail(ErrorKind::data, "average_precision: prediction and GT lists differ in length");
  std::vector<ScoredMatch> all;
  int gt = 0;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    const auto m = match_detections(preds[s], gts[s], cls, iou_threshold);
    for (std::size_t k = 0; k < m.order.size(); ++k) all.push_back({preds[s][m.order[k]].score, m.true_positive[k]});
    gt += m.ground_truth;
  }
  return ap_from_matches(std::move(all), gt);
}

std::string threshold_key(double threshold) { return "AP" + std::to_string(std::lround(threshold * 100)); }

const ClassResult& EvalReport::at(InstanceClass cls, double threshold) const {
  for (const auto& c : classes)
    if (c.cls == cls && std::abs(c.iou_threshold - threshold) < 1e-12) return c;
  fail(ErrorKind::not_found, "EvalReport: no result for " + std::string(annotations::to_string(cls)) + " at " +
                                 threshold_key(threshold));
}

EvalReport evaluate(const std::vector<panoptic::PanopticOutput>& predictions, const annotations::Dataset& dataset,
                    const std::vector<double>& thresholds) {
  if (thresholds.empty()) fail(ErrorKind::config, "evaluate: no IoU thresholds");
  std::map<std::string, const panoptic::PanopticOutput*> by_id;
  for (const auto& p : predictions) by_id[p.sample_id] = &p;
  std::vector<std::vector<Detection>> preds;
  std::vector<std::vector<annotations::InstanceLabel>> gts;
  EvalReport report;
  report.samples = static_cast<int>(dataset.size());
  report.thresholds = thresholds;
  std::size_t inter = 0, uni = 0;
  for (const auto& s : dataset) {
    const auto it = by_id.find(s.id());
    if (it == by_id.end()) fail(ErrorKind::data, "evaluate: no prediction for sample " + s.id());
    const auto& p = *it->second;
    if (p.height != s.image.height || p.width != s.image.width)
      fail(ErrorKind::data, "evaluate: prediction shape mismatch for sample " + s.id());
    preds.push_back(p.detections);
    gts.push_back(s.instances);
    if (s.cirrus_mask) {
      ++report.cirrus_samples;
      for (std::size_t i = 0; i < s.cirrus_mask->bits.size(); ++i) {
        const bool g = s.cirrus_mask->bits[i] != 0, q = p.cirrus_mask.bits[i] != 0;
        inter += g && q;
        uni += g || q;
      }
    }
  }
  if (report.cirrus_samples > 0) report.cirrus_iou = uni == 0 ? 1.0 : static_cast<double>(inter) / uni;

  for (double t : thresholds) {
    double sum = 0.0;
    int counted = 0;
    for (auto cls : annotations::kAllInstanceClasses) {
      ClassResult r;
      r.cls = cls;
      r.iou_threshold = t;
      std::vector<ScoredMatch> all;
      for (std::size_t s = 0; s < preds.size(); ++s) {
        const auto m = match_detections(preds[s], gts[s], cls, t);
        for (std::size_t k = 0; k < m.order.size(); ++k) {
          all.push_back({preds[s][m.order[k]].score, m.true_positive[k]});
          (m.true_positive[k] ? r.true_positives : r.false_positives)++;
        }
        r.false_negatives += m.false_negatives;
        r.ground_truth += m.ground_truth;
      }
      r.predictions = static_cast<int>(all.size());
      r.ap = ap_from_matches(std::move(all), r.ground_truth);
      if (r.ground_truth > 0 || r.predictions > 0) {
        sum += r.ap;
        ++counted;
      }
      report.classes.push_back(r);
    }
    report.mean_ap.push_back(counted == 0 ? 1.0 : sum / counted);
  }
  // class-major ordering
  std::stable_sort(report.classes.begin(), report.classes.end(),
                   [](const ClassResult& a, const ClassResult& b) { return a.cls < b.cls; });
  return report;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["samples"] = samples;
  j["thresholds"] = thresholds;
  nlohmann::json cls = nlohmann::json::object();
  for (const auto& c : classes) {
    cls[std::string(annotations::to_string(c.cls))][threshold_key(c.iou_threshold)] = {
        {"ap", c.ap},
        {"tp", c.true_positives},
        {"fp", c.false_positives},
        {"fn", c.false_negatives},
        {"gt", c.ground_truth},
        {"predictions", c.predictions}};
  }
  j["classes"] = cls;
  nlohmann::json m = nlohmann::json::object();
  for (std::size_t i = 0; i < thresholds.size(); ++i) m[threshold_key(thresholds[i])] = mean_ap[i];
  j["mean_ap"] = m;
  j["cirrus_iou"] = cirrus_iou ? nlohmann::json(*cirrus_iou) : nlohmann::json(nullptr);
  j["cirrus_samples"] = cirrus_samples;
  return j;
}

std::string EvalReport::to_text() const {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "samples: %d\n", samples);
  out += buf;
  std::snprintf(buf, sizeof buf, "%-16s %-6s %8s %5s %5s %5s %5s\n", "class", "iou", "AP", "TP", "FP", "FN", "GT");
  out += buf;
  for (const auto& c : classes) {
    std::snprintf(buf, sizeof buf, "%-16s %-6s %8.4f %5d %5d %5d %5d\n", std::string(annotations::to_string(c.cls)).c_str(),
                  threshold_key(c.iou_threshold).c_str(), c.ap, c.true_positives, c.false_positives, c.false_negatives,
                  c.ground_truth);
    out += buf;
  }
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    std::snprintf(buf, sizeof buf, "mean %s: %.4f\n", threshold_key(thresholds[i]).c_str(), mean_ap[i]);
    out += buf;
  }
  if (cirrus_iou) std::snprintf(buf, sizeof buf, "cirrus IoU: %.4f (%d samples)\n", *cirrus_iou, cirrus_samples);
  else std::snprintf(buf, sizeof buf, "cirrus IoU: n/a\n");
  out += buf;
  return out;
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.samples = j.at("samples").get<int>();
    r.thresholds = j.at("thresholds").get<std::vector<double>>();
    const auto& cls = j.at("classes");
    for (auto c : annotations::kAllInstanceClasses) {
      const std::string name(annotations::to_string(c));
      for (double t : r.thresholds) {
        const auto& e = cls.at(name).at(threshold_key(t));
        ClassResult x;
        x.cls = c;
        x.iou_threshold = t;
        x.ap = e.at("ap").get<double>();
        x.true_positives = e.at("tp").get<int>();
        x.false_positives = e.at("fp").get<int>();
        x.false_negatives = e.at("fn").get<int>();
        x.ground_truth = e.at("gt").get<int>();
        x.predictions = e.at("predictions").get<int>();
        r.classes.push_back(x);
      }
    }
    for (double t : r.thresholds) r.mean_ap.push_back(j.at("mean_ap").at(threshold_key(t)).get<double>());
    if (!j.at("cirrus_iou").is_null()) r.cirrus_iou = j.at("cirrus_iou").get<double>();
    r.cirrus_samples = j.at("cirrus_samples").get<int>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("eval report: ") + e.what());
  }
  return r;
}

}  // namespace lsbpan::metrics
