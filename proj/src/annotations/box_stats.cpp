#include "lsbpan/annotations/box_stats.hpp"

#include <algorithm>
#include <cmath>

#include "lsbpan/error.hpp"

namespace lsbpan::annotations {

double Histogram::mass_at(double value) const {
  for (std::size_t i = 0; i + 1 < edges.size(); ++i)
    if (value >= edges[i] && value < edges[i + 1]) return mass[i];
  return 0.0;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) fail(ErrorKind::data, "percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(values.size() - 1, lo + 1);
  return values[lo] + (values[hi] - values[lo]) * (pos - static_cast<double>(lo));
}

namespace {

// Geometric bins with `per_octave` bins per factor of two.
Histogram log_histogram(const std::vector<double>& values, double lo, double hi, int per_octave) {
  Histogram h;
  const int n = static_cast<int>(std::round(std::log2(hi / lo) * per_octave));
  for (int i = 0; i <= n; ++i) h.edges.push_back(lo * std::exp2(static_cast<double>(i) / per_octave));
  h.mass.assign(static_cast<std::size_t>(n), 0.0);
  for (double v : values) {
    const int bin = static_cast<int>(std::floor(std::log2(v / lo) * per_octave + 1e-9));
    if (bin >= 0 && bin < n) h.mass[static_cast<std::size_t>(bin)] += 1.0;
  }
  if (!values.empty())
    for (double& m : h.mass) m /= static_cast<double>(values.size());
  return h;
}

}  // namespace

BoxStatistics box_statistics_from_sizes(const std::vector<std::pair<double, double>>& width_height) {
  BoxStatistics s;
  for (auto [w, h] : width_height) {
    s.widths.push_back(w);
    s.heights.push_back(h);
    s.aspect_ratios.push_back(h / w);
  }
  if (s.empty()) return s;
  s.width_hist = log_histogram(s.widths, 1.0, 8192.0, 4);
  s.height_hist = log_histogram(s.heights, 1.0, 8192.0, 4);
  s.ratio_hist = log_histogram(s.aspect_ratios, 1.0 / 64.0, 64.0, 4);
  s.width_p5 = percentile(s.widths, 5);
  s.width_p95 = percentile(s.widths, 95);
  s.height_p5 = percentile(s.heights, 5);
  s.height_p95 = percentile(s.heights, 95);
  s.ratio_p5 = percentile(s.aspect_ratios, 5);
  s.ratio_p95 = percentile(s.aspect_ratios, 95);
  std::vector<double> sides = s.widths;
  sides.insert(sides.end(), s.heights.begin(), s.heights.end());
  s.side_p5 = percentile(sides, 5);
  s.side_p95 = percentile(sides, 95);
  return s;
}

BoxStatistics compute_box_statistics(const Dataset& dataset) {
  if (dataset.empty()) fail(ErrorKind::data, "box statistics need a nonempty dataset");
  std::vector<std::pair<double, double>> sizes;
  for (const auto& s : dataset)
    for (const auto& inst : s.instances) sizes.emplace_back(inst.bbox.width(), inst.bbox.height());
  return box_statistics_from_sizes(sizes);
}

void AnchorConfig::validate() const {
  if (widths.empty() || aspect_ratios.empty()) fail(ErrorKind::config, "anchor config needs widths and ratios");
  for (std::size_t i = 0; i < widths.size(); ++i)
    if (widths[i] <= 0 || (i > 0 && widths[i] <= widths[i - 1]))
      fail(ErrorKind::config, "anchor widths must be positive and strictly increasing");
  for (std::size_t i = 0; i < aspect_ratios.size(); ++i)
    if (aspect_ratios[i] <= 0 || (i > 0 && aspect_ratios[i] <= aspect_ratios[i - 1]))
      fail(ErrorKind::config, "anchor aspect ratios must be positive and strictly increasing");
}

AnchorConfig select_anchor_config(const BoxStatistics& stats) {
  if (stats.empty()) fail(ErrorKind::data, "cannot select anchors from empty statistics");
  const double lo = std::exp2(std::floor(std::log2(stats.side_p5)));
  const double hi = std::exp2(std::ceil(std::log2(stats.side_p95)));
  const double first = std::clamp(lo, kMinAnchorWidth, kMaxAnchorWidth);
  const double last = std::clamp(hi, kMinAnchorWidth, kMaxAnchorWidth);
  AnchorConfig cfg;
  for (double w = first; w <= last; w *= 2.0) cfg.widths.push_back(w);
  cfg.aspect_ratios = {0.5, 1.0, 2.0};
  return cfg;
}

}  // namespace lsbpan::annotations
