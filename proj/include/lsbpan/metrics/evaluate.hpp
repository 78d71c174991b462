#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "lsbpan/annotations/labels.hpp"
#include "lsbpan/panoptic/panoptic.hpp"

namespace lsbpan::metrics {

using annotations::InstanceClass;
using network::Detection;

struct MatchResult {
  std::vector<std::size_t> order;  // indices into preds of the requested class, descending score
  std::vector<bool> true_positive;  // parallel to order
  int false_negatives = 0;
  int ground_truth = 0;
};

// Greedy matching in descending score order: each prediction takes the
// unmatched GT of its class with the highest mask IoU, and is a TP when that
// IoU is >= iou_threshold.
MatchResult match_detections(const std::vector<Detection>& preds, const std::vector<annotations::InstanceLabel>& gts,
                             InstanceClass cls, double iou_threshold);

struct ScoredMatch {
  double score = 0.0;
  bool true_positive = false;
};

// Area under the all-point interpolated precision envelope. With no GT the
// result is 1 when there are no predictions and 0 otherwise. Ties in score
// keep the given order.
double ap_from_matches(std::vector<ScoredMatch> matches, int ground_truth);

double average_precision(const std::vector<std::vector<Detection>>& preds,
                         const std::vector<std::vector<annotations::InstanceLabel>>& gts, InstanceClass cls,
                         double iou_threshold);

struct ClassResult {
  InstanceClass cls = InstanceClass::galaxy;
  double iou_threshold = 0.5;
  double ap = 0.0;
  int true_positives = 0;
  int false_positives = 0;
  int false_negatives = 0;
  int ground_truth = 0;
  int predictions = 0;
  friend bool operator==(const ClassResult&, const ClassResult&) = default;
};

struct EvalReport {
  int samples = 0;
  std::vector<double> thresholds;
  std::vector<ClassResult> classes;  // class-major, then threshold
  // Mean over classes with any GT or prediction at that threshold.
  std::vector<double> mean_ap;
  // Micro-averaged over samples carrying a cirrus annotation.
  std::optional<double> cirrus_iou;
  int cirrus_samples = 0;

  const ClassResult& at(InstanceClass cls, double threshold) const;
  nlohmann::json to_json() const;
  std::string to_text() const;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// Every dataset sample must have a prediction with the same id; extra
// predictions are ignored. Throws ErrorKind::data naming a missing id.
EvalReport evaluate(const std::vector<panoptic::PanopticOutput>& predictions, const annotations::Dataset& dataset,
                    const std::vector<double>& thresholds = {0.5, 0.75});

std::string threshold_key(double threshold);

// Inverse of EvalReport::to_json. Throws ErrorKind::data on malformed input.
EvalReport eval_report_from_json(const nlohmann::json& j);

}  // namespace lsbpan::metrics
