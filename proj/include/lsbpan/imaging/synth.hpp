#pragma once

#include <cstdint>
#include <string>

#include "lsbpan/annotations/labels.hpp"
#include "lsbpan/rng.hpp"

namespace lsbpan::imaging {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double draw(Rng& rng) const { return hi > lo ? uniform(rng, lo, hi) : lo; }
};

struct IntRange {
  int lo = 0;
  int hi = 0;
  int draw(Rng& rng) const { return hi > lo ? uniform_int(rng, lo, hi) : lo; }
};

// Procedural scene parameters. Pixel quantities refer to image_size; the
// defaults describe a 1024 px field whose object boxes mostly fall in
// [32, 512] px. Intensities are in units where a bright galaxy core is ~1.
struct SynthConfig {
  int image_size = 1024;

  // Counts. The first galaxy is the field's target and sits near the center.
  IntRange galaxies{1, 3};
  double diffuse_halo_probability = 0.9;  // per galaxy
  IntRange ghosted_halos{0, 3};
  IntRange tidal_streams{0, 1};
  double cirrus_probability = 0.26;

  // Galaxies: I = I0 * exp(-(r_ell / r_e)^(1/n)).
  Range galaxy_radius{14.0, 30.0};
  Range galaxy_ellipticity{0.0, 0.4};
  Range galaxy_intensity{0.6, 1.0};
  Range sersic_index{0.7, 1.3};

  // Diffuse halos: exponential envelope around their galaxy.
  Range halo_extent{1.8, 2.6};      // halo mask radius / galaxy mask radius
  Range halo_intensity{0.15, 0.3};  // relative to the galaxy peak
  Range halo_ellipticity{0.0, 0.35};

  // Ghosted halos: near-circular disk with a brightened rim.
  Range ghost_radius{24.0, 90.0};
  Range ghost_rim_width{3.0, 8.0};
  Range ghost_intensity{0.15, 0.35};
  Range ghost_ellipticity{0.0, 0.08};

  // Tidal streams: circular arc leaving a galaxy, Gaussian cross-section.
  Range stream_length{120.0, 300.0};
  Range stream_width{5.0, 10.0};
  Range stream_curvature{1.0 / 400.0, 1.0 / 150.0};
  Range stream_intensity{0.1, 0.25};

  // Cirrus: anisotropic multi-octave value noise, thresholded.
  int cirrus_octaves = 5;
  double cirrus_persistence = 0.55;
  Range cirrus_coverage{0.45, 0.6};  // threshold on noise normalized to [0, 1]
  Range cirrus_scale{150.0, 300.0};   // largest feature size, px
  Range cirrus_anisotropy{2.0, 4.0};
  Range cirrus_orientation{0.0, 3.14159265358979323846};
  Range cirrus_intensity{0.15, 0.3};

  double mask_fraction = 0.1;  // mask = contribution > fraction * peak
  bool merge_overlapping_halos = true;
  double sky_level = 0.0;
  double sky_noise = 0.02;
  Range band_ratio{0.7, 1.3};  // second band relative to the first, per structure
  std::uint64_t seed = 0;

  // Throws ErrorKind::config on empty ranges or out-of-range probabilities.
  void validate() const;
  // Same scene statistics rescaled to another field size.
  SynthConfig scaled_to(int new_image_size, double object_scale) const;
};

// One procedural field with exhaustive labels. The image id is left empty.
annotations::Sample synthesize_sample(const SynthConfig& config, Rng& rng);

// Sample i of a dataset uses an independent stream derived from config.seed.
annotations::Dataset synthesize_dataset(const SynthConfig& config, int n);

std::string synthetic_id(int index);

// Oriented cirrus texture on its own (normalized to [0, 1]), for tests.
std::vector<double> cirrus_field(const SynthConfig& config, double orientation, Rng& rng);

}  // namespace lsbpan::imaging
