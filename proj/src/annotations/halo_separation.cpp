#include "lsbpan/annotations/halo_separation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>

#include "lsbpan/error.hpp"

namespace lsbpan::annotations {

namespace {

constexpr double kInf = 1e20;

// Squared distance transform of a sampled function (Felzenszwalb & Huttenlocher).
void dt_1d(const double* f, double* d, int n, std::vector<int>& v, std::vector<double>& z) {
  v.assign(static_cast<std::size_t>(n), 0);
  z.assign(static_cast<std::size_t>(n) + 1, 0.0);
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    double s;
    while (true) {
      const int p = v[k];
      s = ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) / (2.0 * q - 2.0 * p);
      if (s <= z[k] && k > 0) {
        --k;
      } else {
        break;
      }
    }
    if (s <= z[k]) {
      // k == 0 and the new parabola dominates everywhere.
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double diff = q - v[k];
    d[q] = diff * diff + f[v[k]];
  }
}

}  // namespace

std::vector<double> distance_transform(const Mask& mask) {
  // One pixel of background padding all around.
  const int h = mask.height + 2, w = mask.width + 2;
  std::vector<double> grid(static_cast<std::size_t>(h) * w, 0.0);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(y, x)) grid[static_cast<std::size_t>(y + 1) * w + x + 1] = kInf;

  std::vector<int> v;
  std::vector<double> z;
  std::vector<double> in(static_cast<std::size_t>(std::max(h, w))), out(in.size());
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) in[y] = grid[static_cast<std::size_t>(y) * w + x];
    dt_1d(in.data(), out.data(), h, v, z);
    for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = out[y];
  }
  for (int y = 0; y < h; ++y) {
    double* row = grid.data() + static_cast<std::size_t>(y) * w;
    std::copy(row, row + w, in.begin());
    dt_1d(in.data(), out.data(), w, v, z);
    std::copy(out.begin(), out.begin() + w, row);
  }

  std::vector<double> edt(mask.size(), 0.0);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      edt[static_cast<std::size_t>(y) * mask.width + x] = std::sqrt(grid[static_cast<std::size_t>(y + 1) * w + x + 1]);
  return edt;
}

std::vector<Peak> find_peaks(const std::vector<double>& field, const Mask& mask, int radius) {
  const int h = mask.height, w = mask.width;
  // Separable maximum filter.
  std::vector<double> rowmax(field.size()), winmax(field.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double m = -std::numeric_limits<double>::infinity();
      for (int dx = std::max(0, x - radius); dx <= std::min(w - 1, x + radius); ++dx)
        m = std::max(m, field[static_cast<std::size_t>(y) * w + dx]);
      rowmax[static_cast<std::size_t>(y) * w + x] = m;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double m = -std::numeric_limits<double>::infinity();
      for (int dy = std::max(0, y - radius); dy <= std::min(h - 1, y + radius); ++dy)
        m = std::max(m, rowmax[static_cast<std::size_t>(dy) * w + x]);
      winmax[static_cast<std::size_t>(y) * w + x] = m;
    }

  std::vector<std::uint8_t> candidate(field.size(), 0);
  for (std::size_t i = 0; i < field.size(); ++i)
    candidate[i] = mask.bits[i] && field[i] > 0.0 && field[i] >= winmax[i];

  std::vector<Peak> peaks;
  std::vector<std::uint8_t> seen(field.size(), 0);
  std::vector<int> stack;
  for (int start = 0; start < static_cast<int>(field.size()); ++start) {
    if (!candidate[start] || seen[start]) continue;
    Peak pk;
    pk.value = field[start];
    stack.assign(1, start);
    seen[start] = 1;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      pk.pixels.push_back(p);
      const int py = p / w, px = p % w;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int ny = py + dy, nx = px + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          const int q = ny * w + nx;
          if (candidate[q] && !seen[q] && field[q] == pk.value) {
            seen[q] = 1;
            stack.push_back(q);
          }
        }
    }
    std::sort(pk.pixels.begin(), pk.pixels.end());
    for (int p : pk.pixels) {
      pk.x += p % w;
      pk.y += p / w;
    }
    pk.x /= static_cast<double>(pk.pixels.size());
    pk.y /= static_cast<double>(pk.pixels.size());
    peaks.push_back(std::move(pk));
  }
  return peaks;
}

std::vector<Peak> select_separated_peaks(const std::vector<Peak>& peaks, int n) {
  if (peaks.empty() || n <= 0) return {};
  std::vector<std::size_t> chosen;
  std::size_t best = 0;
  for (std::size_t i = 1; i < peaks.size(); ++i)
    if (peaks[i].value > peaks[best].value) best = i;
  chosen.push_back(best);
  while (static_cast<int>(chosen.size()) < n && chosen.size() < peaks.size()) {
    double best_d = -1.0;
    std::size_t pick = 0;
    for (std::size_t i = 0; i < peaks.size(); ++i) {
      if (std::find(chosen.begin(), chosen.end(), i) != chosen.end()) continue;
      double dmin = std::numeric_limits<double>::infinity();
      for (std::size_t c : chosen)
        dmin = std::min(dmin, std::hypot(peaks[i].x - peaks[c].x, peaks[i].y - peaks[c].y));
      if (dmin > best_d || (dmin == best_d && peaks[i].value > peaks[pick].value)) {
        best_d = dmin;
        pick = i;
      }
    }
    chosen.push_back(pick);
  }
  std::vector<Peak> out;
  for (std::size_t c : chosen) out.push_back(peaks[c]);
  return out;
}

std::vector<int> watershed(const std::vector<double>& surface, const Mask& mask, const std::vector<Peak>& markers) {
  const int h = mask.height, w = mask.width;
  std::vector<int> labels(mask.size(), 0);
  for (std::size_t k = 0; k < markers.size(); ++k)
    for (int p : markers[k].pixels)
      if (mask.bits[static_cast<std::size_t>(p)]) labels[static_cast<std::size_t>(p)] = static_cast<int>(k) + 1;

  // Equal heights are flooded in order of Euclidean distance to the claiming
  // marker, so plateaus split along the bisector rather than an L1 front.
  struct Entry {
    double value;
    double dist2;
    long long round;
    int pixel;
    int label;
  };
  auto later = [](const Entry& a, const Entry& b) {
    if (a.value != b.value) return a.value > b.value;
    if (a.dist2 != b.dist2) return a.dist2 > b.dist2;
    return a.round > b.round;
  };
  auto dist2 = [&](int pixel, int label) {
    const auto& m = markers[static_cast<std::size_t>(label - 1)];
    const double px = pixel % w - m.x, py = pixel / w - m.y;
    return px * px + py * py;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(later)> heap(later);
  const int dy4[4] = {-1, 1, 0, 0}, dx4[4] = {0, 0, -1, 1};
  auto push_neighbors = [&](int p, long long round) {
    const int py = p / w, px = p % w;
    for (int d = 0; d < 4; ++d) {
      const int ny = py + dy4[d], nx = px + dx4[d];
      if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
      const int q = ny * w + nx;
      if (!mask.bits[static_cast<std::size_t>(q)] || labels[static_cast<std::size_t>(q)] != 0) continue;
      const int label = labels[static_cast<std::size_t>(p)];
      heap.push({surface[static_cast<std::size_t>(q)], dist2(q, label), round, q, label});
    }
  };

  // Nearest marker centroid wins simultaneous claims; then higher marker, then lower index.
  auto prefer = [&](int pixel, int a, int b) {
    const double px = pixel % w, py = pixel / w;
    const auto& ma = markers[static_cast<std::size_t>(a - 1)];
    const auto& mb = markers[static_cast<std::size_t>(b - 1)];
    const double da = (px - ma.x) * (px - ma.x) + (py - ma.y) * (py - ma.y);
    const double db = (px - mb.x) * (px - mb.x) + (py - mb.y) * (py - mb.y);
    if (da != db) return da < db ? a : b;
    if (ma.value != mb.value) return ma.value > mb.value ? a : b;
    return std::min(a, b);
  };

  for (int p = 0; p < static_cast<int>(labels.size()); ++p)
    if (labels[static_cast<std::size_t>(p)] != 0) push_neighbors(p, 0);

  long long round = 0;
  std::vector<Entry> batch;
  std::vector<int> claimed;
  while (!heap.empty()) {
    const Entry top = heap.top();
    batch.clear();
    while (!heap.empty() && heap.top().value == top.value && heap.top().dist2 == top.dist2 &&
           heap.top().round == top.round) {
      batch.push_back(heap.top());
      heap.pop();
    }
    ++round;
    claimed.clear();
    std::vector<std::pair<int, int>> claims;  // pixel, label
    for (const auto& e : batch)
      if (labels[static_cast<std::size_t>(e.pixel)] == 0) claims.emplace_back(e.pixel, e.label);
    std::sort(claims.begin(), claims.end());
    for (std::size_t i = 0; i < claims.size();) {
      const int pixel = claims[i].first;
      int winner = claims[i].second;
      std::size_t j = i + 1;
      for (; j < claims.size() && claims[j].first == pixel; ++j)
        if (claims[j].second != winner) winner = prefer(pixel, winner, claims[j].second);
      labels[static_cast<std::size_t>(pixel)] = winner;
      claimed.push_back(pixel);
      i = j;
    }
    for (int p : claimed) push_neighbors(p, round);
  }

  // Mask components that hold no marker go to the nearest marker centroid.
  if (!markers.empty())
    for (int p = 0; p < static_cast<int>(labels.size()); ++p) {
      if (!mask.bits[static_cast<std::size_t>(p)] || labels[static_cast<std::size_t>(p)] != 0) continue;
      int winner = 1;
      for (int k = 2; k <= static_cast<int>(markers.size()); ++k) winner = prefer(p, winner, k);
      labels[static_cast<std::size_t>(p)] = winner;
    }
  return labels;
}

EllipseFit fit_ellipse(const Mask& mask) {
  double n = 0.0, sx = 0.0, sy = 0.0;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(y, x)) {
        n += 1.0;
        sx += x;
        sy += y;
      }
  if (n < 5.0) fail(ErrorKind::data, "ellipse fit needs at least 5 pixels");
  const double cx = sx / n, cy = sy / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(y, x)) {
        sxx += (x - cx) * (x - cx);
        syy += (y - cy) * (y - cy);
        sxy += (x - cx) * (y - cy);
      }
  sxx /= n;
  syy /= n;
  sxy /= n;
  const double mean = 0.5 * (sxx + syy);
  const double rad = std::sqrt(0.25 * (sxx - syy) * (sxx - syy) + sxy * sxy);
  const double l1 = mean + rad, l2 = std::max(0.0, mean - rad);

  EllipseFit fit;
  fit.ellipse.cx = cx;
  fit.ellipse.cy = cy;
  double angle = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
  if (angle < 0.0) angle += std::numbers::pi;
  if (angle >= std::numbers::pi) angle -= std::numbers::pi;
  fit.ellipse.angle = angle;

  // A uniform ellipse with semi-axes (a, b) has principal variances a^2/4, b^2/4.
  double a = 2.0 * std::sqrt(l1), b = 2.0 * std::sqrt(l2);
  if (b > 1e-9) {
    const double k = std::sqrt(n / (std::numbers::pi * a * b));
    a *= k;
    b *= k;
  }
  if (b < 0.5) {
    b = 0.5;
    fit.degenerate = true;
  }
  fit.ellipse.a = std::max(a, b);
  fit.ellipse.b = b;
  return fit;
}

Mask render_ellipse(const Ellipse& e, int height, int width) {
  Mask m(height, width);
  const double c = std::cos(e.angle), s = std::sin(e.angle);
  const int x0 = std::max(0, static_cast<int>(std::floor(e.cx - e.a - 1))),
            x1 = std::min(width - 1, static_cast<int>(std::ceil(e.cx + e.a + 1)));
  const int y0 = std::max(0, static_cast<int>(std::floor(e.cy - e.a - 1))),
            y1 = std::min(height - 1, static_cast<int>(std::ceil(e.cy + e.a + 1)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - e.cx, dy = y - e.cy;
      const double u = dx * c + dy * s, v = -dx * s + dy * c;
      if ((u * u) / (e.a * e.a) + (v * v) / (e.b * e.b) <= 1.0) m.set(y, x);
    }
  return m;
}

HaloSeparation separate_overlapping_halos(const Mask& mask, int n_parts, int peak_radius) {
  if (mask.empty()) fail(ErrorKind::data, "cannot separate an empty halo mask");
  if (n_parts < 1) fail(ErrorKind::data, "n_parts must be >= 1");
  const auto edt = distance_transform(mask);
  const auto peaks = find_peaks(edt, mask, peak_radius);
  HaloSeparation result;
  result.shortfall = static_cast<int>(peaks.size()) < n_parts;
  const auto markers = select_separated_peaks(peaks, n_parts);

  std::vector<double> surface(edt.size());
  std::transform(edt.begin(), edt.end(), surface.begin(), [](double d) { return -d; });
  const auto labels = watershed(surface, mask, markers);

  for (std::size_t k = 0; k < markers.size(); ++k) {
    HaloPart part;
    part.region = Mask(mask.height, mask.width);
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == static_cast<int>(k) + 1) part.region.bits[i] = 1;
    const auto count = part.region.count();
    if (count == 0) continue;
    if (count >= 5) {
      part.ellipse = fit_ellipse(part.region).ellipse;
    } else {
      double sx = 0.0, sy = 0.0;
      for (std::size_t i = 0; i < labels.size(); ++i)
        if (part.region.bits[i]) {
          sx += static_cast<double>(i % static_cast<std::size_t>(mask.width));
          sy += static_cast<double>(i / static_cast<std::size_t>(mask.width));
        }
      const double r = std::max(0.5, std::sqrt(static_cast<double>(count) / std::numbers::pi));
      part.ellipse = {sx / count, sy / count, r, r, 0.0};
    }
    result.parts.push_back(std::move(part));
  }
  return result;
}

Sample separate_sample_halos(const Sample& sample) {
  struct Point {
    double x, y;
  };
  auto centroid = [](const Mask& m) {
    double n = 0.0, sx = 0.0, sy = 0.0;
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width; ++x)
        if (m.at(y, x)) {
          n += 1.0;
          sx += x;
          sy += y;
        }
    return Point{sx / n, sy / n};
  };

  std::vector<std::size_t> halo_idx;
  std::vector<Point> halo_center;
  for (std::size_t i = 0; i < sample.instances.size(); ++i)
    if (sample.instances[i].cls == InstanceClass::diffuse_halo) {
      halo_idx.push_back(i);
      halo_center.push_back(centroid(sample.instances[i].mask));
    }
  std::vector<int> owned(halo_idx.size(), 0);
  for (const auto& inst : sample.instances) {
    if (inst.cls != InstanceClass::galaxy) continue;
    const auto c = centroid(inst.mask);
    const int gx = static_cast<int>(std::lround(c.x)), gy = static_cast<int>(std::lround(c.y));
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t h = 0; h < halo_idx.size(); ++h) {
      const auto& m = sample.instances[halo_idx[h]].mask;
      if (!m.in_bounds(gy, gx) || !m.at(gy, gx)) continue;
      const double d = std::hypot(halo_center[h].x - c.x, halo_center[h].y - c.y);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(h);
      }
    }
    if (best >= 0) ++owned[static_cast<std::size_t>(best)];
  }

  Sample out = sample;
  out.instances.clear();
  std::vector<InstanceLabel> split;
  for (std::size_t i = 0; i < sample.instances.size(); ++i) {
    const auto& inst = sample.instances[i];
    const auto it = std::find(halo_idx.begin(), halo_idx.end(), i);
    const int k = it == halo_idx.end() ? 0 : owned[static_cast<std::size_t>(it - halo_idx.begin())];
    if (k < 2) {
      out.instances.push_back(inst);
      continue;
    }
    const auto sep = separate_overlapping_halos(inst.mask, k);
    for (const auto& part : sep.parts) {
      auto shape = render_ellipse(part.ellipse, inst.mask.height, inst.mask.width);
      if (shape.empty()) shape = part.region;
      auto label = InstanceLabel::from_mask(InstanceClass::diffuse_halo, std::move(shape), inst.provenance);
      label.region = part.region;
      out.instances.push_back(std::move(label));
    }
  }
  return out;
}

}  // namespace lsbpan::annotations
