#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "lsbpan/error.hpp"
#include "lsbpan/imaging/image.hpp"
#include "lsbpan/imaging/synth.hpp"
#include "lsbpan/imaging/transform.hpp"

using namespace lsbpan;
using namespace lsbpan::imaging;
using annotations::InstanceClass;
using annotations::InstanceLabel;
using annotations::Mask;
using annotations::Sample;

namespace {

LsbImage ramp_image(int h, int w) {
  LsbImage img(h, w, 2);
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) img.at(c, y, x) = static_cast<float>(c * 1000 + y * w + x);
  return img;
}

Sample toy_sample() {
  Sample s;
  s.image = ramp_image(6, 6);
  s.image.id = "toy";
  Mask m(6, 6);
  m.set(1, 2);
  m.set(1, 3);
  m.set(2, 3);
  s.instances.push_back(InstanceLabel::from_mask(InstanceClass::galaxy, m));
  Mask cirrus(6, 6);
  cirrus.set(5, 0);
  cirrus.set(4, 0);
  s.cirrus_mask = cirrus;
  s.galaxy_count = 1;
  return s;
}

}  // namespace

TEST_CASE("lsb container round trip") {
  LsbImage img = ramp_image(3, 5);
  img.id = "abc";
  const auto bytes = encode_lsb(img);
  CHECK(bytes.size() == 16 + 3 * 5 * 2 * 4);
  CHECK(bytes[0] == 'L');
  CHECK(bytes[4] == 3);
  CHECK(bytes[8] == 5);
  CHECK(bytes[12] == 2);
  const LsbImage back = decode_lsb(bytes);
  CHECK(back.same_pixels(img));
  auto bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(decode_lsb(bad), Error);

  const auto dir = std::filesystem::temp_directory_path() / "lsbpan_test_img";
  std::filesystem::create_directories(dir);
  write_lsb(img, dir / "abc.lsb");
  const LsbImage loaded = read_lsb(dir / "abc.lsb");
  CHECK(loaded.id == "abc");
  CHECK(loaded.same_pixels(img));
  std::filesystem::remove_all(dir);
}

TEST_CASE("center crop and resize") {
  SUBCASE("identity") {
    const LsbImage img = ramp_image(4, 4);
    CHECK(center_crop_and_resize(img, 4, 4).same_pixels(img));
  }
  SUBCASE("constant stays constant") {
    const LsbImage img(4, 4, 2, 7.0f);
    const LsbImage out = center_crop_and_resize(img, 2, 2);
    CHECK(out.height == 2);
    for (float v : out.pixels) CHECK(v == 7.0f);
    const LsbImage odd = center_crop_and_resize(LsbImage(9, 11, 2, 7.0f), 9, 4);
    for (float v : odd.pixels) CHECK(v == doctest::Approx(7.0f));
  }
  SUBCASE("area averaging") {
    const LsbImage img = ramp_image(4, 4);
    const LsbImage out = center_crop_and_resize(img, 4, 2);
    // Top-left block holds 0, 1, 4, 5.
    CHECK(out.at(0, 0, 0) == doctest::Approx(2.5));
    CHECK(out.at(1, 1, 1) == doctest::Approx(1000 + (10 + 11 + 14 + 15) / 4.0));
  }
  SUBCASE("paper-scale crop") {
    const LsbImage big(6000, 6000, 2, 1.0f);
    const LsbImage out = center_crop_and_resize(big, 3000, 1024);
    CHECK(out.height == 1024);
    CHECK(out.width == 1024);
    CHECK(out.channels == 2);
  }
  SUBCASE("crop too large") { CHECK_THROWS_AS(center_crop_and_resize(ramp_image(4, 6), 5, 2), Error); }
}

TEST_CASE("symmetry group") {
  const Sample s = toy_sample();
  for (int i = 0; i < 8; ++i) {
    const Symmetry g = Symmetry::from_index(i);
    const Sample t = apply_symmetry(s, g);
    CHECK(apply_symmetry(t, g.inverse()).image.same_pixels(s.image));
    CHECK(annotations::same_labels(apply_symmetry(t, g.inverse()), s));
    CHECK(t.instances[0].mask.count() == s.instances[0].mask.count());
    CHECK(t.cirrus_mask->count() == s.cirrus_mask->count());
    t.validate();
    // Image and masks move together: the labelled pixel values are preserved.
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) {
        int ny = 0, nx = 0;
        map_point(g, 6, 6, y, x, ny, nx);
        CHECK(t.image.at(1, ny, nx) == s.image.at(1, y, x));
        CHECK(t.instances[0].mask.at(ny, nx) == s.instances[0].mask.at(y, x));
      }
  }
  SUBCASE("four quarter turns return the original") {
    Sample t = s;
    for (int k = 0; k < 4; ++k) t = apply_symmetry(t, Symmetry{1, false});
    CHECK(t.image.same_pixels(s.image));
    CHECK(annotations::same_labels(t, s));
  }
  SUBCASE("flip twice is identity") {
    const Sample t = apply_symmetry(apply_symmetry(s, Symmetry{0, true}), Symmetry{0, true});
    CHECK(t.image.same_pixels(s.image));
  }
}

TEST_CASE("augment") {
  const Sample s = toy_sample();
  SUBCASE("sigma 0 gives a group element") {
    Rng rng(4);
    for (int trial = 0; trial < 10; ++trial) {
      const Sample t = augment(s, rng, 0.0);
      bool found = false;
      for (int i = 0; i < 8; ++i) found = found || apply_symmetry(s, Symmetry::from_index(i)).image.same_pixels(t.image);
      CHECK(found);
      CHECK(t.instances[0].mask.count() == 3);
    }
  }
  SUBCASE("noise statistics on a 1024 field") {
    Sample z;
    z.image = LsbImage(1024, 1024, 1, 0.0f);
    Rng rng(2024);
    const Sample t = augment(z, rng, kDefaultNoiseSigma);
    double sum = 0.0, sq = 0.0;
    for (float v : t.image.pixels) {
      sum += v;
      sq += static_cast<double>(v) * v;
    }
    const double n = static_cast<double>(t.image.pixels.size());
    const double mean = sum / n;
    const double sd = std::sqrt(sq / n - mean * mean);
    CHECK(std::abs(mean) < 0.001);
    CHECK(sd > 0.099);
    CHECK(sd < 0.101);
  }
  SUBCASE("shape mismatch rejected") {
    Sample bad = s;
    bad.cirrus_mask = Mask(5, 6);
    Rng rng(1);
    CHECK_THROWS_AS(augment(bad, rng), Error);
  }
}

TEST_CASE("synthesis") {
  SynthConfig cfg = SynthConfig{}.scaled_to(256, 0.5);
  cfg.seed = 17;
  SUBCASE("empty scene") {
    SynthConfig e = cfg;
    e.galaxies = {0, 0};
    e.ghosted_halos = {0, 0};
    e.tidal_streams = {0, 0};
    e.cirrus_probability = 0.0;
    Rng rng(1);
    const Sample s = synthesize_sample(e, rng);
    CHECK(s.instances.empty());
    CHECK_FALSE(s.cirrus_mask.has_value());
    CHECK(s.image.all_finite());
  }
  SUBCASE("halo contains its galaxy centroid") {
    SynthConfig one = cfg;
    one.galaxies = {1, 1};
    one.diffuse_halo_probability = 1.0;
    one.ghosted_halos = {0, 0};
    one.tidal_streams = {0, 0};
    one.cirrus_probability = 0.0;
    for (int seed = 0; seed < 10; ++seed) {
      Rng rng(static_cast<std::uint64_t>(seed));
      const Sample s = synthesize_sample(one, rng);
      REQUIRE(s.count(InstanceClass::galaxy) == 1);
      REQUIRE(s.count(InstanceClass::diffuse_halo) == 1);
      const auto& gal = *std::find_if(s.instances.begin(), s.instances.end(),
                                      [](const auto& l) { return l.cls == InstanceClass::galaxy; });
      const auto& halo = *std::find_if(s.instances.begin(), s.instances.end(),
                                       [](const auto& l) { return l.cls == InstanceClass::diffuse_halo; });
      double sx = 0, sy = 0;
      for (int y = 0; y < gal.mask.height; ++y)
        for (int x = 0; x < gal.mask.width; ++x)
          if (gal.mask.at(y, x)) {
            sx += x;
            sy += y;
          }
      const double n = static_cast<double>(gal.mask.count());
      CHECK(halo.mask.at(static_cast<int>(std::lround(sy / n)), static_cast<int>(std::lround(sx / n))));
      CHECK(halo.mask.count() > gal.mask.count());
    }
  }
  SUBCASE("deterministic and well formed") {
    const auto a = synthesize_dataset(cfg, 6);
    const auto b = synthesize_dataset(cfg, 6);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].image.same_pixels(b[i].image));
      CHECK(annotations::same_labels(a[i], b[i]));
      CHECK(a[i].id() == synthetic_id(static_cast<int>(i)));
      a[i].validate();
      CHECK(a[i].image.channels == 2);
      CHECK(a[i].image.all_finite());
      for (const auto& l : a[i].instances) CHECK_FALSE(l.mask.empty());
      if (a[i].cirrus_mask) CHECK_FALSE(a[i].cirrus_mask->empty());
    }
  }
  SUBCASE("invalid config") {
    SynthConfig bad = cfg;
    bad.galaxy_radius = {5.0, 2.0};
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = cfg;
    bad.cirrus_probability = 1.5;
    CHECK_THROWS_AS(bad.validate(), Error);
  }
}
