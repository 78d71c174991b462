#include <cmath>
#include <filesystem>

#include "ap_cases.hpp"
#include "doctest.h"
#include "lsbpan/error.hpp"
#include "lsbpan/imaging/synth.hpp"
#include "lsbpan/metrics/evaluate.hpp"
#include "lsbpan/metrics/iou.hpp"
#include "lsbpan/panoptic/panoptic.hpp"
#include "lsbpan/rng.hpp"

using namespace lsbpan;
using annotations::InstanceClass;
using annotations::InstanceLabel;
using annotations::Mask;
using metrics::mask_iou;
using network::Detection;

namespace {

Mask rect(int h, int w, int y0, int x0, int y1, int x1) {
  Mask m(h, w);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) m.set(y, x);
  return m;
}

Detection det(InstanceClass c, double score, Mask m) {
  Detection d;
  d.cls = c;
  d.score = score;
  d.mask = std::move(m);
  return d;
}

// Perfect predictions rebuilt from a dataset's labels.
std::vector<panoptic::PanopticOutput> oracle_outputs(const annotations::Dataset& data) {
  std::vector<panoptic::PanopticOutput> outs;
  for (const auto& s : data) {
    std::vector<Detection> dets;
    for (const auto& l : s.instances) dets.push_back(det(l.cls, 0.9, l.mask));
    std::vector<float> cirrus(s.image.plane_size(), 0.0f);
    if (s.cirrus_mask)
      for (std::size_t i = 0; i < cirrus.size(); ++i) cirrus[i] = s.cirrus_mask->bits[i] ? 1.0f : 0.0f;
    panoptic::FuseConfig cfg;
    cfg.nms_iou = 1.01;
    auto o = panoptic::fuse(dets, cirrus, s.image.height, s.image.width, cfg);
    o.sample_id = s.id();
    outs.push_back(std::move(o));
  }
  return outs;
}

}  // namespace

TEST_CASE("mask IoU") {
  const Mask a = rect(6, 8, 0, 0, 1, 3), b = rect(6, 8, 0, 2, 1, 5);
  CHECK(mask_iou(a, b) == doctest::Approx(1.0 / 3.0));
  CHECK(mask_iou(b, a) == mask_iou(a, b));
  CHECK(mask_iou(a, a) == 1.0);
  CHECK(mask_iou(a, rect(6, 8, 4, 0, 5, 3)) == 0.0);
  CHECK(mask_iou(Mask(6, 8), Mask(6, 8)) == 0.0);
  CHECK_THROWS_AS(mask_iou(a, Mask(6, 9)), Error);
}

TEST_CASE("match detections") {
  const Mask g = rect(10, 10, 0, 0, 0, 7);
  const std::vector<InstanceLabel> gts{InstanceLabel::from_mask(InstanceClass::galaxy, g)};

  auto m = metrics::match_detections({det(InstanceClass::galaxy, 0.9, g)}, gts, InstanceClass::galaxy, 0.5);
  CHECK(m.true_positive == std::vector<bool>{true});
  CHECK(m.false_negatives == 0);

  m = metrics::match_detections({det(InstanceClass::galaxy, 0.3, g), det(InstanceClass::galaxy, 0.8, g)}, gts,
                                InstanceClass::galaxy, 0.5);
  CHECK(m.order == std::vector<std::size_t>{1, 0});
  CHECK(m.true_positive == std::vector<bool>{true, false});

  // 8-pixel strips shifted by 2: |and| = 6, |or| = 10
  const Mask shifted = rect(10, 10, 0, 2, 0, 9);
  CHECK(mask_iou(g, shifted) == doctest::Approx(0.6));
  CHECK(metrics::match_detections({det(InstanceClass::galaxy, 0.9, shifted)}, gts, InstanceClass::galaxy, 0.5)
            .true_positive[0]);
  m = metrics::match_detections({det(InstanceClass::galaxy, 0.9, shifted)}, gts, InstanceClass::galaxy, 0.75);
  CHECK(!m.true_positive[0]);
  CHECK(m.false_negatives == 1);

  // never across classes
  m = metrics::match_detections({det(InstanceClass::diffuse_halo, 0.9, g)}, gts, InstanceClass::galaxy, 0.5);
  CHECK(m.order.empty());
  CHECK(m.false_negatives == 1);
  m = metrics::match_detections({det(InstanceClass::diffuse_halo, 0.9, g)}, gts, InstanceClass::diffuse_halo, 0.5);
  CHECK(m.true_positive == std::vector<bool>{false});
  CHECK(m.ground_truth == 0);
}

TEST_CASE("average precision on hand-enumerated cases") {
  for (const auto& c : testutil::ap_cases()) {
    const auto inst = testutil::build_case(c);
    const double ap = metrics::average_precision({inst.predictions}, {inst.ground_truth}, InstanceClass::galaxy, 0.5);
    CHECK_MESSAGE(ap == doctest::Approx(c.expected).epsilon(1e-12), "gt=" << c.ground_truth);
  }
  CHECK(testutil::ap_cases().size() >= 20);
}

TEST_CASE("AP only depends on score order") {
  const auto inst = testutil::build_case(testutil::ap_cases()[11]);
  auto preds = inst.predictions;
  const double base = metrics::average_precision({preds}, {inst.ground_truth}, InstanceClass::galaxy, 0.5);
  for (auto& d : preds) d.score = std::exp(5 * d.score) - 3;
  CHECK(metrics::average_precision({preds}, {inst.ground_truth}, InstanceClass::galaxy, 0.5) == base);
}

TEST_CASE("AP is non-increasing in the IoU threshold") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const auto inst = testutil::random_instance(rng);
    const auto& preds = inst.predictions;
    const auto& gts = inst.ground_truth;
    double prev = 2.0;
    for (double t : {0.1, 0.3, 0.5, 0.6, 0.75, 0.9}) {
      const double ap = metrics::average_precision({preds}, {gts}, InstanceClass::galaxy, t);
      REQUIRE(ap >= 0.0);
      REQUIRE(ap <= 1.0);
      REQUIRE(ap <= prev + 1e-12);
      prev = ap;
    }
  }
}

TEST_CASE("fuse") {
  SUBCASE("empty") {
    const auto out = panoptic::fuse({}, std::vector<float>(16, 0.0f), 4, 4);
    CHECK(out.detections.empty());
    CHECK(out.cirrus_mask.empty());
  }
  SUBCASE("same-class suppression and cross-class survival") {
    const Mask a = rect(10, 10, 0, 0, 9, 9);
    Mask b = a;
    for (int x = 0; x < 10; ++x) b.set(9, x, false);  // IoU 0.9
    const std::vector<Detection> raw{det(InstanceClass::galaxy, 0.8, b), det(InstanceClass::galaxy, 0.9, a),
                                     det(InstanceClass::diffuse_halo, 0.7, a), det(InstanceClass::galaxy, 0.4, a)};
    const auto out = panoptic::fuse(raw, std::vector<float>(100, 0.0f), 10, 10);
    REQUIRE(out.detections.size() == 2);
    CHECK(out.detections[0].score == 0.9);
    CHECK(out.detections[1].cls == InstanceClass::diffuse_halo);
    const auto again = panoptic::fuse(out);
    REQUIRE(again.detections.size() == out.detections.size());
    for (std::size_t i = 0; i < out.detections.size(); ++i) CHECK(again.detections[i].mask == out.detections[i].mask);
    CHECK(again.cirrus_mask == out.cirrus_mask);
  }
  SUBCASE("galaxy inside cirrus keeps both layers") {
    std::vector<float> cirrus(100, 0.9f);
    const auto out = panoptic::fuse({det(InstanceClass::galaxy, 0.9, rect(10, 10, 3, 3, 5, 5))}, cirrus, 10, 10);
    CHECK(out.detections.size() == 1);
    CHECK(out.cirrus_mask.count() == 100);
  }
  SUBCASE("threshold boundary") {
    std::vector<float> cirrus{0.49f, 0.5f, 0.51f, 0.0f};
    const auto out = panoptic::fuse({}, cirrus, 2, 2);
    CHECK(out.cirrus_mask.bits == std::vector<std::uint8_t>{0, 1, 1, 0});
  }
  CHECK_THROWS_AS(panoptic::fuse({}, std::vector<float>(3), 2, 2), Error);
}

TEST_CASE("evaluate against ground truth") {
  auto cfg = imaging::SynthConfig{}.scaled_to(96, 0.3);
  cfg.seed = 4;
  cfg.cirrus_probability = 0.7;
  const auto data = imaging::synthesize_dataset(cfg, 3);
  const auto report = metrics::evaluate(oracle_outputs(data), data);
  for (const auto& c : report.classes) CHECK(c.ap == 1.0);
  CHECK(report.mean_ap == std::vector<double>{1.0, 1.0});
  bool any_cirrus = false;
  for (const auto& s : data) any_cirrus = any_cirrus || s.cirrus_mask.has_value();
  if (any_cirrus) CHECK(report.cirrus_iou.value() == 1.0);
  const auto j = report.to_json();
  CHECK(j["mean_ap"]["AP50"] == 1.0);
  CHECK(report.to_text().find("mean AP75") != std::string::npos);

  auto partial = oracle_outputs(data);
  partial.pop_back();
  try {
    metrics::evaluate(partial, data);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(data.back().id()) != std::string::npos);
  }
}

TEST_CASE("evaluate counts and monotonicity") {
  auto cfg = imaging::SynthConfig{}.scaled_to(96, 0.3);
  cfg.seed = 8;
  const auto data = imaging::synthesize_dataset(cfg, 4);
  auto outs = oracle_outputs(data);
  Rng rng(3);
  for (auto& o : outs)
    for (auto& d : o.detections) {
      d.score = uniform(rng, 0.5, 1.0);
      // erode a random fraction of each mask
      for (auto& b : d.mask.bits)
        if (b && uniform(rng, 0, 1) < 0.3) b = 0;
    }
  const auto r = metrics::evaluate(outs, data);
  for (auto cls : annotations::kAllInstanceClasses) {
    const auto& a50 = r.at(cls, 0.5);
    const auto& a75 = r.at(cls, 0.75);
    CHECK(a75.ap <= a50.ap);
    CHECK(a50.true_positives + a50.false_negatives == a50.ground_truth);
    CHECK(a50.true_positives + a50.false_positives == a50.predictions);
  }
}

TEST_CASE("prediction dump round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "lsbpan_pred_test";
  std::filesystem::remove_all(dir);
  auto cfg = imaging::SynthConfig{}.scaled_to(64, 0.25);
  cfg.seed = 2;
  const auto data = imaging::synthesize_dataset(cfg, 2);
  auto outs = oracle_outputs(data);
  outs[0].cirrus_map.assign(outs[0].cirrus_map.size(), 0.3f);
  panoptic::save_predictions(outs, dir, "data", 1);
  const auto back = panoptic::load_predictions(dir);
  REQUIRE(back.size() == outs.size());
  for (std::size_t i = 0; i < outs.size(); ++i) {
    CHECK(back[i].sample_id == outs[i].sample_id);
    REQUIRE(back[i].detections.size() == outs[i].detections.size());
    for (std::size_t k = 0; k < outs[i].detections.size(); ++k) {
      CHECK(back[i].detections[k].mask == outs[i].detections[k].mask);
      CHECK(back[i].detections[k].score == outs[i].detections[k].score);
      CHECK(back[i].detections[k].cls == outs[i].detections[k].cls);
    }
    for (std::size_t p = 0; p < outs[i].cirrus_map.size(); ++p)
      REQUIRE(std::abs(back[i].cirrus_map[p] - outs[i].cirrus_map[p]) <= 0.5 / 255 + 1e-7);
  }
  CHECK(panoptic::quantize_probabilities({0.0f, 1.0f, 0.5f}) == std::vector<std::uint8_t>{0, 255, 128});
  std::filesystem::remove_all(dir);
}
