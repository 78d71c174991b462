#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "lsbpan/annotations/box_stats.hpp"
#include "lsbpan/annotations/dataset_io.hpp"
#include "lsbpan/annotations/halo_separation.hpp"
#include "lsbpan/error.hpp"
#include "lsbpan/imaging/synth.hpp"
#include "lsbpan/imaging/transform.hpp"

using namespace lsbpan;
using namespace lsbpan::annotations;

namespace {

Mask disk(int h, int w, double cx, double cy, double r) {
  Mask m(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m.set(y, x);
  return m;
}

double iou(const Mask& a, const Mask& b) {
  const double u = static_cast<double>(mask_union(a, b).count());
  return u == 0 ? 0.0 : static_cast<double>(mask_intersection(a, b).count()) / u;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("rle") {
  Mask m(3, 4);
  m.set(0, 0);
  m.set(0, 1);
  m.set(2, 3);
  const auto runs = rle_encode(m);
  CHECK(runs == std::vector<std::uint32_t>{0, 2, 9, 1});
  CHECK(rle_decode(runs, 3, 4) == m);
  const Mask empty(2, 2);
  CHECK(rle_encode(empty) == std::vector<std::uint32_t>{4});
  const std::vector<std::uint32_t> short_runs{1, 2};
  CHECK_THROWS_AS(rle_decode(short_runs, 2, 2), Error);
}

TEST_CASE("label model") {
  CHECK(parse_instance_class("ghosted_halo") == InstanceClass::ghosted_halo);
  CHECK(to_string(InstanceClass::tidal_structure) == "tidal_structure");
  CHECK_THROWS_AS(parse_instance_class("cirrus"), Error);
  CHECK(Provenance::parse("hitl:3") == Provenance::hitl(3));
  CHECK(Provenance::hitl(2).to_string() == "hitl:2");
  CHECK(Provenance::parse("human").is_human());
  CHECK_THROWS_AS(InstanceLabel::from_mask(InstanceClass::galaxy, Mask(3, 3)), Error);
  Mask m(5, 5);
  m.set(1, 2);
  m.set(3, 4);
  const auto l = InstanceLabel::from_mask(InstanceClass::galaxy, m);
  CHECK(l.bbox == PixelBox{2, 1, 4, 3});
}

TEST_CASE("fit_ellipse") {
  SUBCASE("axis-aligned ellipse") {
    const Ellipse e{60.0, 50.0, 30.0, 10.0, 0.0};
    const auto fit = fit_ellipse(render_ellipse(e, 100, 120));
    CHECK(std::abs(fit.ellipse.a - 30.0) / 30.0 < 0.03);
    CHECK(std::abs(fit.ellipse.b - 10.0) / 10.0 < 0.03);
    const double d = std::min(fit.ellipse.angle, std::numbers::pi - fit.ellipse.angle);
    CHECK(d < 0.05);
    CHECK_FALSE(fit.degenerate);
  }
  SUBCASE("rotated ellipse") {
    const Ellipse e{60.0, 50.0, 30.0, 10.0, 0.7};
    const auto fit = fit_ellipse(render_ellipse(e, 100, 120));
    CHECK(std::abs(fit.ellipse.angle - 0.7) < 0.05);
  }
  SUBCASE("disk") {
    const auto fit = fit_ellipse(disk(64, 64, 31.5, 30.0, 20.0));
    CHECK(std::abs(fit.ellipse.a - 20.0) / 20.0 < 0.03);
    CHECK(std::abs(fit.ellipse.b - 20.0) / 20.0 < 0.03);
  }
  SUBCASE("translation equivariance") {
    const Mask a = render_ellipse({30.0, 30.0, 14.0, 6.0, 1.1}, 80, 80);
    Mask b(80, 80);
    for (int y = 0; y < 80; ++y)
      for (int x = 0; x < 80; ++x)
        if (a.at(y, x)) b.set(y + 9, x + 13);
    const auto fa = fit_ellipse(a).ellipse, fb = fit_ellipse(b).ellipse;
    CHECK(fb.cx - fa.cx == doctest::Approx(13.0));
    CHECK(fb.cy - fa.cy == doctest::Approx(9.0));
    CHECK(fb.a == doctest::Approx(fa.a));
    CHECK(fb.b == doctest::Approx(fa.b));
    CHECK(fb.angle == doctest::Approx(fa.angle));
  }
  SUBCASE("collinear mask is flagged") {
    Mask line(10, 10);
    for (int x = 1; x < 8; ++x) line.set(4, x);
    const auto fit = fit_ellipse(line);
    CHECK(fit.degenerate);
    CHECK(fit.ellipse.b == doctest::Approx(0.5));
  }
  SUBCASE("too few pixels") {
    Mask m(4, 4);
    m.set(1, 1);
    CHECK_THROWS_AS(fit_ellipse(m), Error);
  }
}

TEST_CASE("distance transform") {
  Mask m(5, 7);
  for (int y = 1; y < 4; ++y)
    for (int x = 1; x < 6; ++x) m.set(y, x);
  const auto d = distance_transform(m);
  CHECK(d[0] == 0.0);
  CHECK(d[2 * 7 + 3] == doctest::Approx(2.0));
  CHECK(d[1 * 7 + 1] == doctest::Approx(1.0));
  // Against brute force on a blob.
  const Mask blob = mask_union(disk(30, 30, 10, 12, 7), disk(30, 30, 18, 16, 6));
  const auto edt = distance_transform(blob);
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 30; ++x) {
      double best = 1e9;
      for (int v = -1; v <= 30; ++v)
        for (int u = -1; u <= 30; ++u)
          if (!blob.in_bounds(v, u) || !blob.at(v, u)) best = std::min(best, std::hypot(u - x, v - y));
      CHECK(edt[static_cast<std::size_t>(y) * 30 + x] == doctest::Approx(blob.at(y, x) ? best : 0.0));
    }
}

TEST_CASE("halo separation") {
  SUBCASE("single disk") {
    const Mask d = disk(80, 80, 40, 40, 20);
    const auto sep = separate_overlapping_halos(d, 1);
    REQUIRE(sep.parts.size() == 1);
    CHECK(sep.parts[0].region == d);
    CHECK(std::abs(sep.parts[0].ellipse.a - 20.0) / 20.0 < 0.05);
    CHECK(std::abs(sep.parts[0].ellipse.b - 20.0) / 20.0 < 0.05);
  }
  SUBCASE("disjoint disks") {
    const Mask a = disk(64, 128, 30, 32, 15), b = disk(64, 128, 90, 32, 15);
    const auto sep = separate_overlapping_halos(mask_union(a, b), 2);
    REQUIRE(sep.parts.size() == 2);
    for (const auto& p : sep.parts) CHECK(std::max(iou(p.region, a), iou(p.region, b)) >= 0.99);
  }
  SUBCASE("overlapping disks split on the bisector") {
    const Mask u = mask_union(disk(80, 100, 35, 40, 20), disk(80, 100, 65, 40, 20));
    const auto sep = separate_overlapping_halos(u, 2);
    REQUIRE(sep.parts.size() == 2);
    const double a0 = static_cast<double>(sep.parts[0].region.count());
    const double a1 = static_cast<double>(sep.parts[1].region.count());
    CHECK(std::abs(a0 - a1) / std::max(a0, a1) < 0.05);
    CHECK(mask_union(sep.parts[0].region, sep.parts[1].region) == u);
    CHECK(mask_intersection(sep.parts[0].region, sep.parts[1].region).empty());
    // Boundary pixels: 4-neighbours with different labels; bisector is x = 50.
    for (int y = 0; y < 80; ++y)
      for (int x = 0; x + 1 < 100; ++x) {
        const bool l = sep.parts[0].region.at(y, x), r = sep.parts[0].region.at(y, x + 1);
        if (u.at(y, x) && u.at(y, x + 1) && l != r) CHECK(std::abs(x + 0.5 - 50.0) <= 2.0);
      }
  }
  SUBCASE("shortfall") {
    const auto sep = separate_overlapping_halos(disk(40, 40, 20, 20, 10), 3);
    CHECK(sep.shortfall);
    CHECK(sep.parts.size() == 1);
  }
  SUBCASE("empty mask rejected") { CHECK_THROWS_AS(separate_overlapping_halos(Mask(8, 8), 1), Error); }
  SUBCASE("equivariant under the symmetry group") {
    const Mask u = mask_union(mask_union(disk(90, 90, 30, 35, 18), disk(90, 90, 55, 45, 14)), disk(90, 90, 40, 66, 11));
    const auto base = separate_overlapping_halos(u, 3);
    for (int i = 1; i < 8; ++i) {
      const auto g = imaging::Symmetry::from_index(i);
      const auto moved = separate_overlapping_halos(imaging::apply_symmetry(u, g), 3);
      REQUIRE(moved.parts.size() == base.parts.size());
      for (const auto& p : base.parts) {
        const Mask t = imaging::apply_symmetry(p.region, g);
        CHECK(std::any_of(moved.parts.begin(), moved.parts.end(), [&](const HaloPart& q) { return q.region == t; }));
      }
    }
  }
}

TEST_CASE("sample halo separation splits shared halos") {
  Sample s;
  s.image = imaging::LsbImage(80, 120, 2);
  s.image.id = "pair";
  const Mask ga = disk(80, 120, 40, 40, 6), gb = disk(80, 120, 80, 40, 6);
  s.instances.push_back(InstanceLabel::from_mask(InstanceClass::galaxy, ga));
  s.instances.push_back(InstanceLabel::from_mask(InstanceClass::galaxy, gb));
  s.instances.push_back(
      InstanceLabel::from_mask(InstanceClass::diffuse_halo, mask_union(disk(80, 120, 40, 40, 26), disk(80, 120, 80, 40, 26))));
  s.galaxy_count = 2;
  const Sample t = separate_sample_halos(s);
  CHECK(t.count(InstanceClass::diffuse_halo) == 2);
  CHECK(t.count(InstanceClass::galaxy) == 2);
  for (const auto& l : t.instances)
    if (l.cls == InstanceClass::diffuse_halo) CHECK(l.region.has_value());
  t.validate();
}

TEST_CASE("box statistics") {
  SUBCASE("single box") {
    const auto st = box_statistics_from_sizes({{64, 64}});
    CHECK(st.width_hist.mass_at(64) == doctest::Approx(1.0));
    CHECK(st.ratio_hist.mass_at(1.0) == doctest::Approx(1.0));
  }
  SUBCASE("two ratios") {
    const auto st = box_statistics_from_sizes({{64, 32}, {64, 64}});
    CHECK(st.aspect_ratios == std::vector<double>{0.5, 1.0});
    CHECK(st.ratio_hist.mass_at(0.5) == doctest::Approx(0.5));
    CHECK(st.ratio_hist.mass_at(1.0) == doctest::Approx(0.5));
  }
  SUBCASE("percentile interpolation") {
    CHECK(percentile({1, 2, 3, 4, 5}, 50) == doctest::Approx(3.0));
    CHECK(percentile({0, 10}, 5) == doctest::Approx(0.5));
  }
  SUBCASE("empty dataset rejected") { CHECK_THROWS_AS(compute_box_statistics(Dataset{}), Error); }
  SUBCASE("default generator sizes") {
    imaging::SynthConfig cfg;
    cfg.seed = 5;
    const auto data = imaging::synthesize_dataset(cfg, 12);
    const auto st = compute_box_statistics(data);
    std::size_t inside = 0;
    for (std::size_t i = 0; i < st.widths.size(); ++i)
      if (st.widths[i] >= 32 && st.widths[i] <= 512 && st.heights[i] >= 32 && st.heights[i] <= 512) ++inside;
    CHECK(static_cast<double>(inside) >= 0.9 * static_cast<double>(st.widths.size()));
  }
}

TEST_CASE("anchor selection") {
  const std::vector<double> ratios{0.5, 1.0, 2.0};
  SUBCASE("paper statistics") {
    std::vector<std::pair<double, double>> sizes;
    for (int i = 0; i <= 100; ++i) {
      const double s = 40.0 + 4.6 * i;
      sizes.emplace_back(s, s);
    }
    const auto cfg = select_anchor_config(box_statistics_from_sizes(sizes));
    CHECK(cfg.widths == std::vector<double>{32, 64, 128, 256, 512});
    CHECK(cfg.aspect_ratios == ratios);
    CHECK(cfg.total() == 15);
  }
  SUBCASE("single scale") {
    const auto cfg = select_anchor_config(box_statistics_from_sizes({{64, 64}, {64, 64}}));
    CHECK(cfg.widths == std::vector<double>{64});
    CHECK(cfg.total() == 3);
  }
  SUBCASE("100 to 200") {
    std::vector<std::pair<double, double>> sizes;
    for (int i = 0; i <= 100; ++i) sizes.emplace_back(100.0 + i, 100.0 + i);
    const auto st = box_statistics_from_sizes(sizes);
    // Powers of two covering [p5, p95] of the pooled sides.
    const double lo = std::exp2(std::floor(std::log2(st.side_p5)));
    const double hi = std::exp2(std::ceil(std::log2(st.side_p95)));
    std::vector<double> expected;
    for (double w = lo; w <= hi; w *= 2) expected.push_back(w);
    CHECK(expected == std::vector<double>{64, 128, 256});
    CHECK(select_anchor_config(st).widths == expected);
  }
  SUBCASE("empty rejected") { CHECK_THROWS_AS(select_anchor_config(BoxStatistics{}), Error); }
}

TEST_CASE("dataset persistence") {
  imaging::SynthConfig cfg = imaging::SynthConfig{}.scaled_to(128, 0.3);
  cfg.seed = 9;
  cfg.cirrus_probability = 0.5;
  Dataset data = imaging::synthesize_dataset(cfg, 4);
  data[1].instances[0].provenance = Provenance::hitl(1);
  data[2].dataset_version = 3;
  data[2].image.meta["origin"] = "test";
  const auto dir = temp_dir("lsbpan_test_ds");
  save_dataset(data, dir);
  const Dataset back = load_dataset(dir);
  REQUIRE(back.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(back[i].id() == data[i].id());
    CHECK(back[i].image.same_pixels(data[i].image));
    CHECK(same_labels(back[i], data[i]));
    CHECK(back[i].dataset_version == data[i].dataset_version);
    CHECK(back[i].galaxy_count == data[i].galaxy_count);
  }
  CHECK(back[1].instances[0].provenance == Provenance::hitl(1));
  CHECK(back[2].image.meta.at("origin") == "test");

  std::filesystem::remove(dir / "masks" / (data[2].id() + "_0.json"));
  try {
    load_dataset(dir);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(data[2].id()) != std::string::npos);
    CHECK(e.kind() == ErrorKind::data);
  }
  std::filesystem::remove_all(dir);
}
