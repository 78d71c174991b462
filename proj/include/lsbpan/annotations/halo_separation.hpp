#pragma once

#include <vector>

#include "lsbpan/annotations/labels.hpp"
#include "lsbpan/annotations/mask.hpp"

namespace lsbpan::annotations {

struct Ellipse {
  double cx = 0.0;
  double cy = 0.0;
  double a = 0.0;      // semi-major axis, px
  double b = 0.0;      // semi-minor axis, px (a >= b > 0)
  double angle = 0.0;  // major-axis direction from +x toward +y, in [0, pi)
};

struct EllipseFit {
  Ellipse ellipse;
  bool degenerate = false;  // minor axis was floored at 0.5 px
};

// Second-moment fit, axes scaled so that pi*a*b equals the pixel count.
// Requires at least 5 pixels (ErrorKind::data otherwise).
EllipseFit fit_ellipse(const Mask& mask);

// Pixels whose centers fall inside the ellipse.
Mask render_ellipse(const Ellipse& e, int height, int width);

// Exact Euclidean distance from each pixel to the nearest background pixel;
// pixels outside the image count as background.
std::vector<double> distance_transform(const Mask& mask);

struct Peak {
  double x = 0.0;  // centroid of the plateau
  double y = 0.0;
  double value = 0.0;
  std::vector<int> pixels;  // flat indices of the plateau
};

// Local maxima of `field` under a (2r+1)^2 maximum filter, restricted to the
// mask. Connected plateaus of equal value collapse to one peak.
std::vector<Peak> find_peaks(const std::vector<double>& field, const Mask& mask, int radius);

// Greedy farthest-point choice of `n` peaks, seeded at the highest peak.
std::vector<Peak> select_separated_peaks(const std::vector<Peak>& peaks, int n);

// Marker-controlled flooding of `surface` (lowest first) inside the mask.
// Returns a label per pixel: 0 outside the mask, k+1 for marker k. Pixels
// reached simultaneously from several markers go to the nearest marker
// centroid, which keeps the result equivariant under flips and rotations.
std::vector<int> watershed(const std::vector<double>& surface, const Mask& mask, const std::vector<Peak>& markers);

struct HaloPart {
  Mask region;
  Ellipse ellipse;
};

struct HaloSeparation {
  std::vector<HaloPart> parts;
  bool shortfall = false;  // fewer peaks than requested parts
};

inline constexpr int kPeakRadius = 5;

HaloSeparation separate_overlapping_halos(const Mask& mask, int n_parts, int peak_radius = kPeakRadius);

// Splits merged diffuse-halo labels of a sample. Each galaxy is assigned to
// the diffuse halo containing its centroid whose fitted center is nearest;
// halos owning k >= 2 galaxies are separated into k parts, stored as
// ellipse-rendered masks with the watershed region kept alongside.
Sample separate_sample_halos(const Sample& sample);

}  // namespace lsbpan::annotations
