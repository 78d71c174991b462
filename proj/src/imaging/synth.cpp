#include "lsbpan/imaging/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include "lsbpan/error.hpp"

namespace lsbpan::imaging {

using annotations::InstanceClass;
using annotations::InstanceLabel;
using annotations::Mask;
using annotations::Sample;

void SynthConfig::validate() const {
  auto check = [](const Range& r, const char* name) {
    if (!(r.lo <= r.hi) || !std::isfinite(r.lo) || !std::isfinite(r.hi))
      fail(ErrorKind::config, std::string("synth range '") + name + "' is empty");
  };
  auto check_int = [](const IntRange& r, const char* name) {
    if (r.lo < 0 || r.lo > r.hi) fail(ErrorKind::config, std::string("synth count range '") + name + "' is empty");
  };
  if (image_size < 8) fail(ErrorKind::config, "synth image_size must be >= 8");
  check_int(galaxies, "galaxies");
  check_int(ghosted_halos, "ghosted_halos");
  check_int(tidal_streams, "tidal_streams");
  for (auto [r, n] : {std::pair{galaxy_radius, "galaxy_radius"}, {galaxy_ellipticity, "galaxy_ellipticity"},
                      {galaxy_intensity, "galaxy_intensity"}, {sersic_index, "sersic_index"},
                      {halo_extent, "halo_extent"}, {halo_intensity, "halo_intensity"},
                      {halo_ellipticity, "halo_ellipticity"}, {ghost_radius, "ghost_radius"},
                      {ghost_rim_width, "ghost_rim_width"}, {ghost_intensity, "ghost_intensity"},
                      {ghost_ellipticity, "ghost_ellipticity"}, {stream_length, "stream_length"},
                      {stream_width, "stream_width"}, {stream_curvature, "stream_curvature"},
                      {stream_intensity, "stream_intensity"}, {cirrus_coverage, "cirrus_coverage"},
                      {cirrus_scale, "cirrus_scale"}, {cirrus_anisotropy, "cirrus_anisotropy"},
                      {cirrus_orientation, "cirrus_orientation"}, {cirrus_intensity, "cirrus_intensity"},
                      {band_ratio, "band_ratio"}})
    check(r, n);
  if (cirrus_coverage.lo < 0.0 || cirrus_coverage.hi > 1.0)
    fail(ErrorKind::config, "cirrus coverage threshold must lie in [0, 1]");
  for (double p : {diffuse_halo_probability, cirrus_probability})
    if (p < 0.0 || p > 1.0) fail(ErrorKind::config, "synth probabilities must lie in [0, 1]");
  if (mask_fraction <= 0.0 || mask_fraction >= 1.0) fail(ErrorKind::config, "mask_fraction must lie in (0, 1)");
  if (galaxy_radius.lo <= 0.0 || ghost_radius.lo <= 0.0 || stream_width.lo <= 0.0 || cirrus_scale.lo <= 0.0)
    fail(ErrorKind::config, "synth sizes must be positive");
  if (galaxy_ellipticity.hi >= 1.0 || halo_ellipticity.hi >= 1.0 || ghost_ellipticity.hi >= 1.0)
    fail(ErrorKind::config, "ellipticity must be < 1");
  if (cirrus_octaves < 1) fail(ErrorKind::config, "cirrus_octaves must be >= 1");
}

SynthConfig SynthConfig::scaled_to(int new_image_size, double object_scale) const {
  SynthConfig c = *this;
  c.image_size = new_image_size;
  auto s = [object_scale](Range r) { return Range{r.lo * object_scale, r.hi * object_scale}; };
  c.galaxy_radius = s(galaxy_radius);
  c.ghost_radius = s(ghost_radius);
  c.ghost_rim_width = s(ghost_rim_width);
  c.stream_length = s(stream_length);
  c.stream_width = s(stream_width);
  c.stream_curvature = {stream_curvature.lo / object_scale, stream_curvature.hi / object_scale};
  c.cirrus_scale = s(cirrus_scale);
  return c;
}

std::string synthetic_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "synth_%05d", index);
  return buf;
}

namespace {

constexpr double kPi = std::numbers::pi;

struct Scene {
  int size;
  double mask_fraction;
  std::vector<double> band0, band1;

  explicit Scene(int n, double frac)
      : size(n), mask_fraction(frac), band0(static_cast<std::size_t>(n) * n, 0.0), band1(band0) {}

  // Evaluates `profile(x, y)` over the clipped window, adds it to both bands
  // and returns the pixels above mask_fraction * peak.
  template <class F>
  Mask render(double cx, double cy, double half_extent, double peak, double ratio, F&& profile) {
    Mask m(size, size);
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - half_extent)));
    const int x1 = std::min(size - 1, static_cast<int>(std::ceil(cx + half_extent)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - half_extent)));
    const int y1 = std::min(size - 1, static_cast<int>(std::ceil(cy + half_extent)));
    const double thresh = mask_fraction * peak;
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double v = profile(static_cast<double>(x), static_cast<double>(y));
        const std::size_t i = static_cast<std::size_t>(y) * size + x;
        band0[i] += v;
        band1[i] += v * ratio;
        if (v > thresh) m.bits[i] = 1;
      }
    return m;
  }
};

struct Galaxy {
  double cx, cy, radius, q, angle, intensity, sersic;
  double mask_radius(double frac) const { return radius * std::pow(std::log(1.0 / frac), sersic); }
};

double elliptical_radius(double dx, double dy, double angle, double q) {
  const double c = std::cos(angle), s = std::sin(angle);
  const double u = dx * c + dy * s, v = -dx * s + dy * c;
  return std::sqrt(u * u + (v / q) * (v / q));
}

double ghost_profile(double r, double radius, double width) {
  const double edge = 1.0 / (1.0 + std::exp((r - radius) / (0.5 * width)));
  const double rim = std::exp(-0.5 * ((r - radius) / width) * ((r - radius) / width));
  return 0.5 * edge + 0.5 * rim;
}

// Lattice value noise with smoothstep interpolation.
class ValueNoise {
 public:
  explicit ValueNoise(Rng& rng) {
    std::iota(perm_.begin(), perm_.end(), 0);
    for (int i = 255; i > 0; --i) std::swap(perm_[i], perm_[uniform_int(rng, 0, i)]);
    for (auto& v : values_) v = uniform(rng, 0.0, 1.0);
  }

  double operator()(double u, double v) const {
    const double fu = std::floor(u), fv = std::floor(v);
    const int iu = static_cast<int>(fu), iv = static_cast<int>(fv);
    const double tu = smooth(u - fu), tv = smooth(v - fv);
    const double a = lattice(iu, iv), b = lattice(iu + 1, iv);
    const double c = lattice(iu, iv + 1), d = lattice(iu + 1, iv + 1);
    return (a + (b - a) * tu) * (1.0 - tv) + (c + (d - c) * tu) * tv;
  }

 private:
  static double smooth(double t) { return t * t * (3.0 - 2.0 * t); }
  double lattice(int i, int j) const { return values_[perm_[(perm_[i & 255] + j) & 255]]; }

  std::array<int, 256> perm_{};
  std::array<double, 256> values_{};
};

std::vector<double> oriented_fractal(int size, int octaves, double persistence, double scale, double anisotropy,
                                     double orientation, Rng& rng) {
  std::vector<ValueNoise> layers;
  for (int o = 0; o < octaves; ++o) layers.emplace_back(rng);
  const double offset_u = uniform(rng, 0.0, 256.0), offset_v = uniform(rng, 0.0, 256.0);
  const double c = std::cos(orientation), s = std::sin(orientation);
  std::vector<double> field(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      // Long axis of features along `orientation`.
      const double u = (x * c + y * s) / (scale * anisotropy);
      const double v = (-x * s + y * c) / scale;
      double acc = 0.0, amp = 1.0, freq = 1.0;
      for (int o = 0; o < octaves; ++o) {
        acc += amp * layers[o](u * freq + offset_u, v * freq + offset_v);
        amp *= persistence;
        freq *= 2.0;
      }
      field[static_cast<std::size_t>(y) * size + x] = acc;
    }
  const auto [lo, hi] = std::minmax_element(field.begin(), field.end());
  const double mn = *lo, span = std::max(1e-12, *hi - *lo);
  for (double& v : field) v = (v - mn) / span;
  return field;
}

bool overlaps(const Mask& a, const Mask& b) {
  for (std::size_t i = 0; i < a.bits.size(); ++i)
    if (a.bits[i] && b.bits[i]) return true;
  return false;
}

}  // namespace

std::vector<double> cirrus_field(const SynthConfig& config, double orientation, Rng& rng) {
  return oriented_fractal(config.image_size, config.cirrus_octaves, config.cirrus_persistence,
                          config.cirrus_scale.draw(rng), config.cirrus_anisotropy.draw(rng), orientation, rng);
}

Sample synthesize_sample(const SynthConfig& config, Rng& rng) {
  config.validate();
  const int n = config.image_size;
  const double frac = config.mask_fraction;
  Scene scene(n, frac);
  Sample sample;

  // Galaxies: target near the center, companions spread over the field.
  const int n_gal = config.galaxies.draw(rng);
  std::vector<Galaxy> galaxies;
  for (int g = 0; g < n_gal; ++g) {
    Galaxy gal{};
    gal.radius = config.galaxy_radius.draw(rng);
    gal.q = 1.0 - config.galaxy_ellipticity.draw(rng);
    gal.angle = uniform(rng, 0.0, kPi);
    gal.intensity = config.galaxy_intensity.draw(rng);
    gal.sersic = config.sersic_index.draw(rng);
    const double rm = gal.mask_radius(frac);
    if (g == 0) {
      gal.cx = n / 2.0 + uniform(rng, -0.02, 0.02) * n;
      gal.cy = n / 2.0 + uniform(rng, -0.02, 0.02) * n;
    } else {
      const double margin = std::min(0.45 * n, rm + 0.05 * n);
      for (int attempt = 0; attempt < 30; ++attempt) {
        gal.cx = uniform(rng, margin, n - margin);
        gal.cy = uniform(rng, margin, n - margin);
        bool clear = true;
        for (const auto& other : galaxies)
          if (std::hypot(gal.cx - other.cx, gal.cy - other.cy) < 1.5 * (rm + other.mask_radius(frac))) clear = false;
        if (clear) break;
      }
    }
    galaxies.push_back(gal);
  }

  std::vector<InstanceLabel> labels;
  for (const auto& gal : galaxies) {
    const double ratio = config.band_ratio.draw(rng);
    const double extent = gal.radius * std::pow(std::log(1000.0), gal.sersic);
    auto m = scene.render(gal.cx, gal.cy, extent, gal.intensity, ratio, [&](double x, double y) {
      const double r = elliptical_radius(x - gal.cx, y - gal.cy, gal.angle, gal.q);
      return gal.intensity * std::exp(-std::pow(r / gal.radius, 1.0 / gal.sersic));
    });
    if (!m.empty()) labels.push_back(InstanceLabel::from_mask(InstanceClass::galaxy, std::move(m)));
  }

  // Diffuse halos enclose their galaxy.
  std::vector<Mask> halo_masks;
  for (const auto& gal : galaxies) {
    if (uniform(rng, 0.0, 1.0) >= config.diffuse_halo_probability) continue;
    const double extent = config.halo_extent.draw(rng) * gal.mask_radius(frac);
    const double scale_len = extent / std::log(1.0 / frac);
    const double peak = gal.intensity * config.halo_intensity.draw(rng);
    const double q = 1.0 - config.halo_ellipticity.draw(rng);
    const double angle = gal.angle + uniform(rng, -0.3, 0.3);
    const double ratio = config.band_ratio.draw(rng);
    auto m = scene.render(gal.cx, gal.cy, scale_len * std::log(1000.0), peak, ratio, [&](double x, double y) {
      return peak * std::exp(-elliptical_radius(x - gal.cx, y - gal.cy, angle, q) / scale_len);
    });
    if (!m.empty()) halo_masks.push_back(std::move(m));
  }
  if (config.merge_overlapping_halos) {
    // Annotators draw one outline around overlapping halos.
    bool merged = true;
    while (merged) {
      merged = false;
      for (std::size_t i = 0; i < halo_masks.size() && !merged; ++i)
        for (std::size_t j = i + 1; j < halo_masks.size() && !merged; ++j)
          if (overlaps(halo_masks[i], halo_masks[j])) {
            halo_masks[i] = annotations::mask_union(halo_masks[i], halo_masks[j]);
            halo_masks.erase(halo_masks.begin() + static_cast<std::ptrdiff_t>(j));
            merged = true;
          }
    }
  }
  for (auto& m : halo_masks) labels.push_back(InstanceLabel::from_mask(InstanceClass::diffuse_halo, std::move(m)));

  const int n_ghost = config.ghosted_halos.draw(rng);
  for (int k = 0; k < n_ghost; ++k) {
    const double radius = config.ghost_radius.draw(rng);
    const double width = config.ghost_rim_width.draw(rng);
    const double amp = config.ghost_intensity.draw(rng);
    const double q = 1.0 - config.ghost_ellipticity.draw(rng);
    const double angle = uniform(rng, 0.0, kPi);
    const double margin = std::min(0.45 * n, radius);
    const double cx = uniform(rng, margin, n - margin), cy = uniform(rng, margin, n - margin);
    const double ratio = config.band_ratio.draw(rng);
    double peak = 0.0;
    for (int i = 0; i <= 400; ++i) peak = std::max(peak, ghost_profile((radius + 5.0 * width) * i / 400.0, radius, width));
    peak *= amp;
    auto m = scene.render(cx, cy, radius + 6.0 * width, peak, ratio, [&](double x, double y) {
      return amp * ghost_profile(elliptical_radius(x - cx, y - cy, angle, q), radius, width);
    });
    if (!m.empty()) labels.push_back(InstanceLabel::from_mask(InstanceClass::ghosted_halo, std::move(m)));
  }

  const int n_stream = galaxies.empty() ? 0 : config.tidal_streams.draw(rng);
  for (int k = 0; k < n_stream; ++k) {
    const auto& host = galaxies[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(galaxies.size()) - 1))];
    const double length = config.stream_length.draw(rng);
    const double sigma = config.stream_width.draw(rng);
    const double kappa = config.stream_curvature.draw(rng) * (uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0);
    const double amp = config.stream_intensity.draw(rng);
    const double heading = uniform(rng, 0.0, 2.0 * kPi);
    const double ratio = config.band_ratio.draw(rng);
    const double start_r = 0.7 * host.mask_radius(frac);
    const double px = host.cx + start_r * std::cos(heading), py = host.cy + start_r * std::sin(heading);
    const int steps = std::max(8, static_cast<int>(std::ceil(length)));
    std::vector<std::array<double, 3>> pts;  // x, y, intensity
    for (int i = 0; i <= steps; ++i) {
      const double t = length * i / steps;
      const double phi = heading + kappa * t;
      pts.push_back({px + (std::sin(phi) - std::sin(heading)) / kappa, py + (std::cos(heading) - std::cos(phi)) / kappa,
                     amp * (1.0 - 0.6 * t / length)});
    }
    double cx = 0.0, cy = 0.0;
    for (const auto& p : pts) {
      cx += p[0];
      cy += p[1];
    }
    cx /= static_cast<double>(pts.size());
    cy /= static_cast<double>(pts.size());
    double reach = 0.0;
    for (const auto& p : pts) reach = std::max(reach, std::hypot(p[0] - cx, p[1] - cy));
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma), cutoff = 16.0 * sigma * sigma;
    auto m = scene.render(cx, cy, reach + 4.0 * sigma, amp, ratio, [&](double x, double y) {
      double best = 0.0;
      for (const auto& p : pts) {
        const double d2 = (x - p[0]) * (x - p[0]) + (y - p[1]) * (y - p[1]);
        if (d2 < cutoff) best = std::max(best, p[2] * std::exp(-d2 * inv2s2));
      }
      return best;
    });
    if (!m.empty()) labels.push_back(InstanceLabel::from_mask(InstanceClass::tidal_structure, std::move(m)));
  }

  if (uniform(rng, 0.0, 1.0) < config.cirrus_probability) {
    const double orientation = config.cirrus_orientation.draw(rng);
    const auto field = cirrus_field(config, orientation, rng);
    const double thresh = config.cirrus_coverage.draw(rng);
    const double amp = config.cirrus_intensity.draw(rng);
    const double ratio = config.band_ratio.draw(rng);
    Mask m(n, n);
    for (std::size_t i = 0; i < field.size(); ++i) {
      const double v = amp * std::max(0.0, field[i] - thresh) / std::max(1e-9, 1.0 - thresh);
      scene.band0[i] += v;
      scene.band1[i] += v * ratio;
      if (v > frac * amp) m.bits[i] = 1;
    }
    if (!m.empty()) sample.cirrus_mask = std::move(m);
  }

  sample.image = LsbImage(n, n, 2);
  for (std::size_t i = 0; i < scene.band0.size(); ++i) {
    sample.image.pixels[i] = static_cast<float>(config.sky_level + scene.band0[i] + normal(rng, 0.0, config.sky_noise));
    sample.image.pixels[scene.band0.size() + i] =
        static_cast<float>(config.sky_level + scene.band1[i] + normal(rng, 0.0, config.sky_noise));
  }
  sample.instances = std::move(labels);
  sample.galaxy_count = n_gal;
  return sample;
}

annotations::Dataset synthesize_dataset(const SynthConfig& config, int n) {
  annotations::Dataset ds;
  ds.reserve(static_cast<std::size_t>(std::max(0, n)));
  for (int i = 0; i < n; ++i) {
    auto rng = derive_rng(config.seed, static_cast<std::uint64_t>(i));
    auto s = synthesize_sample(config, rng);
    s.image.id = synthetic_id(i);
    ds.push_back(std::move(s));
  }
  return ds;
}

}  // namespace lsbpan::imaging
