#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "lsbpan/annotations/labels.hpp"
#include "lsbpan/panoptic/panoptic.hpp"
#include "lsbpan/rng.hpp"

namespace lsbpan::hitl {

using annotations::Dataset;
using annotations::InstanceClass;

struct HitlSchedule {
  std::vector<int> review_epochs;  // strictly increasing, last < total_epochs
  int total_epochs = 0;

  int rounds() const { return static_cast<int>(review_epochs.size()); }
  int final_phase() const { return total_epochs - review_epochs.back(); }
  // Training epochs before each review, then the final phase.
  std::vector<int> phase_lengths() const;
};

// Reviews after 30 epochs, then four 5-epoch and three 10-epoch phases.
// Throws ErrorKind::config when total_epochs <= 80.
HitlSchedule build_schedule(int total_epochs = 200);

// Tidal structures are annotated exhaustively and never reviewed.
bool reviewable(InstanceClass c);

enum class ReviewStatus { pending, accepted, rejected };
std::string_view to_string(ReviewStatus s);
ReviewStatus parse_review_status(std::string_view s);

struct ReviewItem {
  std::string id;  // "r<round>-<sample_id>-<k>"
  std::string sample_id;
  InstanceClass cls = InstanceClass::galaxy;
  double score = 0.0;
  annotations::Mask mask;
  annotations::PixelBox bbox;
  int round = 0;
  ReviewStatus status = ReviewStatus::pending;
  std::string decided_at;  // ISO 8601 UTC, empty while pending
};

nlohmann::json to_json(const ReviewItem& item, bool with_mask = true);
ReviewItem review_item_from_json(const nlohmann::json& j);

struct EnqueueConfig {
  double iou_threshold = 0.5;
  double score_min = 0.5;
};

// Reviewable detections with score >= score_min that match no annotation of
// their class at IoU >= iou_threshold. Samples without a prediction are an
// ErrorKind::data error.
std::vector<ReviewItem> enqueue_false_positives(const std::vector<panoptic::PanopticOutput>& predictions,
                                                const Dataset& dataset, int round, const EnqueueConfig& config = {});

struct Decision {
  std::string item_id;
  ReviewStatus status = ReviewStatus::accepted;
};

// Returns the next dataset version: every accepted item is appended to its
// sample as a label with provenance hitl(round). Existing labels are kept
// unchanged. Throws ErrorKind::not_found for an unknown item id and
// ErrorKind::data for a pending decision or an item of an unknown sample.
Dataset apply_decisions(const Dataset& dataset, const std::vector<ReviewItem>& items,
                        const std::vector<Decision>& decisions);

struct RateCount {
  long accepted = 0;
  long decided = 0;
  // Absent when nothing was decided.
  std::optional<double> rate() const;
};

struct AcceptanceStats {
  std::map<int, std::map<InstanceClass, RateCount>> by_round_class;
  std::map<int, RateCount> by_round;
  std::map<InstanceClass, RateCount> by_class;
  RateCount total;
  long pending = 0;

  // Pooled over the given rounds.
  RateCount over_rounds(int first, int last) const;
  nlohmann::json to_json() const;
};

AcceptanceStats acceptance_stats(const std::vector<ReviewItem>& items);

// Accepts an item iff its mask overlaps, at IoU >= iou_accept, an object of
// `hidden` with the same class that `current` does not yet contain (no
// same-class label at IoU >= iou_accept). Each hidden object is accepted
// at most once per call.
std::vector<Decision> oracle_reviewer(const std::vector<ReviewItem>& queue, const Dataset& hidden,
                                      const Dataset& current, double iou_accept = 0.5);

struct Withheld {
  Dataset visible;
  // sample id -> removed labels
  std::map<std::string, std::vector<annotations::InstanceLabel>> removed;
  std::size_t count() const;
};

// Removes round(fraction * N) of the N reviewable labels, chosen uniformly
// with a seeded shuffle.
Withheld withhold_labels(const Dataset& full, double fraction, std::uint64_t seed);

// Withheld objects matched (same class, IoU >= iou) by at least one item.
std::size_t withheld_enqueued(const Withheld& withheld, const std::vector<ReviewItem>& items, double iou = 0.5);

std::string utc_timestamp();

}  // namespace lsbpan::hitl
