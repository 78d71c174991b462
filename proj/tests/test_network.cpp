#include <cmath>
#include <filesystem>
#include <numbers>

#include "doctest.h"
#include "gradcheck.hpp"
#include "lsbpan/annotations/box_stats.hpp"
#include "lsbpan/error.hpp"
#include "lsbpan/imaging/synth.hpp"
#include "lsbpan/io_util.hpp"
#include "lsbpan/network/checkpoint.hpp"
#include "lsbpan/network/train.hpp"
#include "lsbpan/nn/ops.hpp"

using namespace lsbpan;
using namespace lsbpan::network;
using annotations::InstanceClass;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.anchors = {{16, 32}, {0.5, 1.0, 2.0}};
  c.stem_channels = 4;
  c.stage_channels = {4, 6, 8, 8};
  c.head_channels = 6;
  c.mask_roi_size = 8;
  c.mask_size = 16;
  c.mask_channels = 4;
  c.decoder_channels = 4;
  c.gga.dim = 4;
  c.gga.grid = 2;
  c.gga.kernel = 5;
  c.init_seed = 11;
  return c;
}

annotations::Dataset tiny_dataset(int n, std::uint64_t seed) {
  auto cfg = imaging::SynthConfig{}.scaled_to(64, 0.25);
  cfg.seed = seed;
  cfg.cirrus_probability = 0.5;
  return imaging::synthesize_dataset(cfg, n);
}

Tensor random_tensor(std::vector<int> shape, Rng& rng, double sd = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = normal(rng, 0.0, sd);
  return t;
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

TEST_CASE("anchors: paper configuration gives 15 shapes summed over levels") {
  const annotations::AnchorConfig cfg{{32, 64, 128, 256, 512}, {0.5, 1.0, 2.0}};
  const auto set = generate_anchors(cfg, 256, 256);
  std::size_t shapes = 0, total = 0;
  for (const auto& l : set.levels) {
    shapes += l.shapes.size();
    total += l.count();
    CHECK(l.grid_h == level_extent(256, l.level));
  }
  CHECK(shapes == 15);
  CHECK(total == set.size());
  CHECK(level_for_width(32) == 0);
  CHECK(level_for_width(64) == 1);
  CHECK(level_for_width(128) == 2);
  CHECK(level_for_width(256) == 3);
  CHECK(level_for_width(512) == 3);
}

TEST_CASE("anchors: fixed width, height from the ratio, centered on cells") {
  const auto set = generate_anchors({{64}, {1.0, 2.0}}, 64, 64);
  REQUIRE(set.levels.size() == 1);
  const auto& l = set.levels[0];
  CHECK(l.stride == 8);
  CHECK(l.shapes[0].width == doctest::Approx(64));
  CHECK(l.shapes[0].height == doctest::Approx(64));
  CHECK(l.shapes[1].width == doctest::Approx(64.0));
  CHECK(l.shapes[1].height == doctest::Approx(128.0));
  const Box& first = set.boxes[0];
  CHECK(first.cx() == doctest::Approx(4.0));
  CHECK(first.cy() == doctest::Approx(4.0));
  // shape 1, row 0, column 1
  const Box& b = set.boxes[l.grid_h * l.grid_w + 1];
  CHECK(b.cx() == doctest::Approx(12.0));
  CHECK(b.height() == doctest::Approx(128.0));
}

TEST_CASE("box encode and decode round trip") {
  Rng rng(5);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double ax = uniform(rng, 0, 200), ay = uniform(rng, 0, 200);
    const Box anchor{ax, ay, ax + uniform(rng, 8, 300), ay + uniform(rng, 8, 300)};
    const double bx = uniform(rng, 0, 200), by = uniform(rng, 0, 200);
    const Box box{bx, by, bx + uniform(rng, 4, 300), by + uniform(rng, 4, 300)};
    const Box back = box_decode(box_encode(box, anchor), anchor);
    worst = std::max({worst, std::abs(back.x0 - box.x0), std::abs(back.y0 - box.y0), std::abs(back.x1 - box.x1),
                      std::abs(back.y1 - box.y1)});
  }
  CHECK(worst < 1e-5);

  const Box a{10, 20, 42, 84};
  const auto zero = box_encode(a, a);
  for (double d : zero) CHECK(d == doctest::Approx(0.0));
  const auto twice = box_encode({10, 20, 74, 84}, a);
  CHECK(twice[2] == doctest::Approx(std::log(2.0)));
  CHECK(twice[0] == doctest::Approx(0.5));
  CHECK_THROWS_AS(box_encode(a, Box{5, 5, 5, 9}), Error);
  CHECK_THROWS_AS(box_encode(Box{5, 5, 9, 5}, a), Error);
}

TEST_CASE("box IoU and pixel conversions") {
  CHECK(box_iou({0, 0, 10, 10}, {5, 0, 15, 10}) == doctest::Approx(1.0 / 3.0));
  CHECK(box_iou({0, 0, 10, 10}, {20, 20, 30, 30}) == 0.0);
  const annotations::PixelBox p{3, 4, 7, 9};
  const Box b = to_box(p);
  CHECK(b.width() == 5.0);
  CHECK(b.height() == 6.0);
  const auto back = to_pixel_box(b, 20, 20);
  CHECK(back == p);
}

TEST_CASE("gabor bank is zero mean and unit norm") {
  GgaConfig cfg;
  const auto bank = gabor_bank(cfg);
  REQUIRE(bank.size() == static_cast<std::size_t>(cfg.orientations));
  for (const auto& k : bank) {
    double s = 0, s2 = 0;
    for (double v : k.values()) {
      s += v;
      s2 += v * v;
    }
    CHECK(std::abs(s) < 1e-12);
    CHECK(s2 == doctest::Approx(1.0));
  }
}

TEST_CASE("GGA block gradient on a 16x16 toy") {
  Rng rng(3);
  ParamStore store;
  GgaConfig cfg;
  cfg.dim = 3;
  cfg.orientations = 4;
  cfg.grid = 4;
  cfg.kernel = 5;
  GgaBlock block(store, "gga", 2, cfg, rng);
  const Var x = nn::parameter(random_tensor({2, 16, 16}, rng));
  const Tensor u = random_tensor({3, 16, 16}, rng);
  const Tensor ua = random_tensor({4, 4, 4}, rng);
  auto loss = [&] {
    const auto out = block(x);
    return nn::add(nn::sum_all(nn::mul(out.modulated, nn::constant(u))),
                   nn::sum_all(nn::mul(out.attention, nn::constant(ua))));
  };
  std::vector<Var> leaves{x};
  for (auto& p : store.params()) leaves.push_back(p.var);
  CHECK(testutil::max_gradient_error(loss, leaves, 1e-6, 96) < 1e-3);
}

TEST_CASE("mask head gradient on a 16x16 toy") {
  PanopticModel model(tiny_config());
  Rng rng(8);
  const Var roi = nn::parameter(random_tensor({4, 8, 8}, rng));
  const Tensor u = random_tensor({annotations::kNumInstanceClasses, 16, 16}, rng);
  auto loss = [&] { return nn::sum_all(nn::mul(model.mask_head(roi), nn::constant(u))); };
  std::vector<Var> leaves{roi};
  for (auto& p : model.params().params())
    if (p.name.rfind("mask.", 0) == 0) leaves.push_back(p.var);
  REQUIRE(leaves.size() == 9);
  CHECK(testutil::max_gradient_error(loss, leaves, 1e-6, 64) < 1e-3);
}

TEST_CASE("GGA attention follows texture orientation") {
  Rng rng(1);
  ParamStore store;
  GgaConfig cfg;
  cfg.dim = 1;
  cfg.grid = 1;
  GgaBlock block(store, "gga", 1, cfg, rng);
  store.find("gga.projection.weight")->var->value.fill(1.0);
  const int n = 32, k = cfg.orientations;
  auto argmax_for = [&](bool vertical) {
    Tensor t({1, n, n});
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        t.at(0, y, x) = std::cos(2 * std::numbers::pi * (vertical ? y : x) / cfg.wavelength);
    const auto out = block(nn::constant(t));
    int best = 0;
    for (int i = 1; i < k; ++i)
      if (out.attention->value[i] > out.attention->value[best]) best = i;
    return best;
  };
  const int a = argmax_for(false), b = argmax_for(true);
  CHECK(a != b);
  CHECK(b == (a + k / 2) % k);
}

TEST_CASE("zero features give a constant cirrus map") {
  PanopticModel model(tiny_config());
  Features f;
  f.input = nn::constant(Tensor({4, 64, 64}));
  const int ch[4] = {4, 6, 8, 8};
  for (int l = 0; l < 4; ++l)
    f.levels[l] = nn::constant(Tensor({ch[l], level_extent(64, l), level_extent(64, l)}));
  const auto out = model.semantic(f, 64, 64);
  const auto& v = out.logits->value;
  REQUIRE(v.channels() == 1);
  for (std::size_t i = 1; i < v.size(); ++i) REQUIRE(v[i] == v[0]);
}

TEST_CASE("channel expansion") {
  Rng rng(2);
  const Tensor w3 = random_tensor({5, 3, 3, 3}, rng);
  const Tensor w4 = expand_input_channels(w3);
  REQUIRE(w4.shape() == std::vector<int>{5, 4, 3, 3});
  for (int o = 0; o < 5; ++o)
    for (int i = 0; i < 9; ++i) {
      CHECK(w4[(o * 4 + 3) * 9 + i] == w3[(o * 3 + 2) * 9 + i]);
      CHECK(w4[(o * 4 + 0) * 9 + i] == w3[(o * 3 + 0) * 9 + i]);
    }
  const Tensor bias = random_tensor({5, 1, 1}, rng);
  const Tensor x3 = random_tensor({3, 12, 12}, rng);
  Tensor x4({4, 12, 12});
  std::copy(x3.values().begin(), x3.values().end(), x4.values().begin());
  const auto y3 = nn::conv2d(nn::constant(x3), nn::constant(w3), nn::constant(bias), 1, 1)->value;
  const auto y4 = nn::conv2d(nn::constant(x4), nn::constant(w4), nn::constant(bias), 1, 1)->value;
  double worst = 0;
  for (std::size_t i = 0; i < y3.size(); ++i) worst = std::max(worst, std::abs(y3[i] - y4[i]));
  CHECK(worst < 1e-12);

  // channel 4 = -channel 3 cancels channel 3
  Tensor x4n = x4, x3z = x3;
  for (std::size_t i = 0; i < 144; ++i) {
    x4n[3 * 144 + i] = -x3[2 * 144 + i];
    x3z[2 * 144 + i] = 0.0;
  }
  const auto yc = nn::conv2d(nn::constant(x4n), nn::constant(w4), nn::constant(bias), 1, 1)->value;
  const auto yz = nn::conv2d(nn::constant(x3z), nn::constant(w3), nn::constant(bias), 1, 1)->value;
  worst = 0;
  for (std::size_t i = 0; i < yc.size(); ++i) worst = std::max(worst, std::abs(yc[i] - yz[i]));
  CHECK(worst < 1e-12);

  CHECK_THROWS_AS(expand_input_channels(random_tensor({5, 4, 3, 3}, rng)), Error);
  CHECK_THROWS_AS(expand_input_channels(random_tensor({5, 3, 3}, rng)), Error);
}

TEST_CASE("orthogonal init rows are orthogonal") {
  Rng rng(4);
  const Tensor w = orthogonal_init({6, 3, 3, 3}, 2.0, rng);
  for (int a = 0; a < 6; ++a)
    for (int b = 0; b < 6; ++b) {
      double d = 0;
      for (int i = 0; i < 27; ++i) d += w[a * 27 + i] * w[b * 27 + i];
      CHECK(d == doctest::Approx(a == b ? 4.0 : 0.0).epsilon(1e-9).scale(1.0));
    }
}

TEST_CASE("anchor matching") {
  const std::vector<Box> anchors{{0, 0, 10, 10}, {0, 0, 20, 20}, {50, 50, 60, 60}, {4, 0, 14, 10}};
  const std::vector<Box> gts{{0, 0, 10, 10}};
  MatchConfig cfg;
  const auto m = match_anchors(anchors, gts, cfg);
  CHECK(m.label == std::vector<int>{1, 0, 0, -1});
  CHECK(m.matched[0] == 0);
  // a GT nobody overlaps above 0.5 still gets its best anchor
  const auto weak = match_anchors(anchors, {{0, 0, 30, 30}}, cfg);
  CHECK(weak.label[1] == 1);
  cfg.keep_best_anchor = false;
  CHECK(match_anchors(anchors, {{0, 0, 30, 30}}, cfg).label[1] == -1);
}

TEST_CASE("all-background objectness BCE") {
  const Tensor zeros({1, 1, 4});
  CHECK(nn::bce_with_logits(nn::constant(Tensor({1, 1, 4})), zeros)->value.item() ==
        doctest::Approx(std::log(2.0)));
  const std::vector<double> z{-2.0, 0.5, 1.0, 3.0};
  const double expect = (softplus(z[0]) + softplus(z[1]) + softplus(z[2]) + softplus(z[3])) / 4;
  CHECK(nn::bce_with_logits(nn::constant(Tensor({1, 1, 4}, z)), zeros)->value.item() == doctest::Approx(expect));
}

TEST_CASE("perfect predictions give near-zero losses") {
  const auto data = tiny_dataset(4, 21);
  const annotations::Sample* sample = nullptr;
  for (const auto& s : data)
    if (!s.instances.empty() && s.cirrus_mask) sample = &s;
  REQUIRE(sample != nullptr);
  const int H = sample->image.height, W = sample->image.width;
  const auto anchors = generate_anchors(tiny_config().anchors, H, W);
  Rng rng(1);
  MatchConfig cfg;
  auto t = build_targets(*sample, anchors, cfg, rng);
  REQUIRE(!t.positives.empty());
  const int n = static_cast<int>(anchors.size()), k = annotations::kNumInstanceClasses;
  const double big = 30.0;
  Tensor obj({n, 1, 1}, -big), cls({k, n, 1}, 0.0), deltas({4, n, 1});
  for (std::size_t i = 0; i < t.sampled.size(); ++i) obj[t.sampled[i]] = t.objectness[i] > 0.5 ? big : -big;
  for (std::size_t p = 0; p < t.positives.size(); ++p) {
    cls[t.classes[p] * n + t.positives[p]] = big;
    for (int c = 0; c < 4; ++c) deltas[c * n + t.positives[p]] = t.box_targets[4 * p + c];
  }
  select_mask_rois(t, *sample, anchors, deltas, cfg, 16, rng);
  Tensor masks = t.mask_targets;
  for (auto& v : masks.values()) v = v > 0.5 ? big : -big;
  Tensor cirrus = *t.cirrus;
  for (auto& v : cirrus.values()) v = v > 0.5 ? big : -big;
  Predictions pr{nn::constant(obj), nn::constant(cls), nn::constant(deltas), nn::constant(masks),
                 nn::constant(cirrus)};
  const auto terms = compute_losses(pr, t);
  CHECK(terms.objectness->value.item() < 1e-10);
  CHECK(terms.box->value.item() < 1e-12);
  CHECK(terms.classification->value.item() < 1e-10);
  CHECK(terms.mask->value.item() < 1e-10);
  CHECK(terms.semantic->value.item() < 1e-10);
  CHECK(terms.total->value.item() < 1e-9);
}

TEST_CASE("non-finite loss names the term") {
  const auto data = tiny_dataset(2, 3);
  const auto anchors = generate_anchors(tiny_config().anchors, 64, 64);
  Rng rng(1);
  auto t = build_targets(data[0], anchors, {}, rng);
  const int n = static_cast<int>(anchors.size());
  Tensor obj({n, 1, 1});
  obj[t.sampled[0]] = std::nan("");
  Predictions pr{nn::constant(obj), nn::constant(Tensor({4, n, 1})), nn::constant(Tensor({4, n, 1})), nullptr,
                 nullptr};
  t.mask_rois.clear();
  t.mask_classes.clear();
  t.mask_targets = Tensor();
  t.cirrus.reset();
  const auto terms = compute_losses(pr, t);
  try {
    terms.check_finite();
    FAIL("expected a numeric error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::numeric);
    CHECK(std::string(e.what()).find("objectness") != std::string::npos);
  }
}

TEST_CASE("learning-rate schedule") {
  TrainSchedule s;
  CHECK(s.instance_lr_at(0) == doctest::Approx(0.01));
  CHECK(s.instance_lr_at(24) == doctest::Approx(0.01));
  CHECK(s.instance_lr_at(25) == doctest::Approx(0.005));
  CHECK(s.instance_lr_at(199) == doctest::Approx(0.01 / 128));
  CHECK(s.semantic_lr_at(0) == doctest::Approx(1e-3));
  CHECK(s.semantic_lr_at(10) == doctest::Approx(1e-3 * std::pow(0.98, 10)));
  auto j = to_json(s);
  CHECK(train_schedule_from_json(j).instance_lr == s.instance_lr);
  j["bogus"] = 1;
  CHECK_THROWS_AS(train_schedule_from_json(j), Error);
}

TEST_CASE("sample without cirrus leaves semantic weights without gradient") {
  auto data = tiny_dataset(6, 5);
  const annotations::Sample* plain = nullptr;
  for (const auto& s : data)
    if (!s.cirrus_mask) plain = &s;
  REQUIRE(plain != nullptr);
  PanopticModel model(tiny_config());
  Trainer trainer(model, {});
  Rng rng(1);
  const auto losses = trainer.accumulate(*plain, rng);
  CHECK(losses.semantic == 0.0);
  int instance_with_grad = 0;
  for (const auto& p : model.params().params()) {
    if (p.group == ParamGroup::semantic) {
      bool zero = true;
      for (double g : p.var->grad.values()) zero = zero && g == 0.0;
      CHECK_MESSAGE(zero, p.name);
    } else if (!p.var->grad.empty()) {
      ++instance_with_grad;
    }
  }
  CHECK(instance_with_grad > 0);
}

TEST_CASE("training is deterministic and reduces the loss") {
  const auto data = tiny_dataset(2, 9);
  TrainSchedule s;
  s.seed = 4;
  s.augment = false;
  s.instance_lr_halving_epochs = 1000;
  PanopticModel m1(tiny_config()), m2(tiny_config());
  Trainer t1(m1, s), t2(m2, s);
  const auto r1 = train(t1, data, 3);
  const auto r2 = train(t2, data, 3);
  REQUIRE(r1.size() == 3);
  for (int e = 0; e < 3; ++e) CHECK(r1[e].mean.total == r2[e].mean.total);
  for (std::size_t i = 0; i < m1.params().params().size(); ++i)
    CHECK(m1.params().params()[i].var->value.values() == m2.params().params()[i].var->value.values());

  const double first = r1[0].mean.total;
  const auto rest = train(t1, data, 200);
  CHECK(t1.steps() == 200);
  CHECK(rest.back().mean.total < 0.5 * first);
}

TEST_CASE("checkpoint round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "lsbpan_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto data = tiny_dataset(2, 2);
  PanopticModel model(tiny_config());
  TrainSchedule s;
  s.seed = 1;
  Trainer trainer(model, s);
  train(trainer, data, 2);
  save_checkpoint(dir / "a.ckpt", model, &trainer);

  const auto ck = read_checkpoint(dir / "a.ckpt");
  CHECK(ck.epoch == 2);
  CHECK(ck.steps == trainer.steps());
  REQUIRE(ck.schedule.has_value());
  CHECK(ck.schedule->seed == 1);
  auto restored = model_from_checkpoint(ck);
  CHECK(to_json(restored->config()) == to_json(model.config()));
  for (std::size_t i = 0; i < model.params().params().size(); ++i) {
    const auto& a = model.params().params()[i].var->value;
    const auto& b = restored->params().params()[i].var->value;
    REQUIRE(a.same_shape(b));
    for (std::size_t j = 0; j < a.size(); ++j) REQUIRE(b[j] == static_cast<double>(static_cast<float>(a[j])));
  }
  Trainer resumed(*restored, *ck.schedule);
  restore_trainer(resumed, ck);
  CHECK(resumed.epoch() == 2);
  CHECK(resumed.optimizer_state().velocity.size() == trainer.optimizer_state().velocity.size());

  // wrong magic
  io::write_text_atomic(dir / "bad.ckpt", "nope");
  CHECK_THROWS_AS(read_checkpoint(dir / "bad.ckpt"), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("predict returns a well formed raw prediction") {
  const auto data = tiny_dataset(1, 6);
  PanopticModel model(tiny_config());
  InferenceConfig inf;
  inf.prefilter_score = 0.0;
  const auto raw = model.predict(data[0].image, inf);
  CHECK(raw.height == 64);
  CHECK(raw.cirrus_prob.size() == 64u * 64u);
  CHECK(static_cast<int>(raw.detections.size()) <= inf.max_detections);
  for (std::size_t i = 1; i < raw.detections.size(); ++i)
    CHECK(raw.detections[i - 1].score >= raw.detections[i].score);
  for (const auto& d : raw.detections) CHECK(!d.mask.empty());
}
