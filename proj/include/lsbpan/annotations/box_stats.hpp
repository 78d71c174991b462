#pragma once

#include <vector>

#include "lsbpan/annotations/labels.hpp"

namespace lsbpan::annotations {

// Histogram over half-open bins [edges[i], edges[i+1]), mass normalized to 1.
struct Histogram {
  std::vector<double> edges;
  std::vector<double> mass;

  // Mass of the bin containing `value` (0 outside the edges).
  double mass_at(double value) const;
};

struct BoxStatistics {
  std::vector<double> widths;
  std::vector<double> heights;
  std::vector<double> aspect_ratios;  // height / width
  Histogram width_hist;
  Histogram height_hist;
  Histogram ratio_hist;
  double width_p5 = 0, width_p95 = 0;
  double height_p5 = 0, height_p95 = 0;
  double ratio_p5 = 0, ratio_p95 = 0;
  double side_p5 = 0, side_p95 = 0;  // over widths and heights pooled

  bool empty() const { return widths.empty(); }
};

// Linear-interpolated percentile, q in [0, 100].
double percentile(std::vector<double> values, double q);

BoxStatistics box_statistics_from_sizes(const std::vector<std::pair<double, double>>& width_height);
BoxStatistics compute_box_statistics(const Dataset& dataset);

struct AnchorConfig {
  std::vector<double> widths;         // strictly increasing
  std::vector<double> aspect_ratios;  // height / width, strictly increasing

  std::size_t total() const { return widths.size() * aspect_ratios.size(); }
  void validate() const;
  friend bool operator==(const AnchorConfig&, const AnchorConfig&) = default;
};

inline constexpr double kMinAnchorWidth = 32.0;
inline constexpr double kMaxAnchorWidth = 512.0;

// Consecutive powers of two from the largest <= p5 to the smallest >= p95 of
// box sides, clamped to [32, 512]; ratios are always {0.5, 1, 2}.
AnchorConfig select_anchor_config(const BoxStatistics& stats);

}  // namespace lsbpan::annotations
