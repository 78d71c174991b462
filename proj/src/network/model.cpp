#include "lsbpan/network/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lsbpan/error.hpp"
#include "lsbpan/scaling/scaling.hpp"

namespace lsbpan::network {

using namespace lsbpan::nn;
using annotations::kNumInstanceClasses;

void ModelConfig::validate() const {
  anchors.validate();
  if (input_bands != 2) fail(ErrorKind::config, "model.input_bands must be 2");
  if (stem_channels < 1 || head_channels < 1 || mask_channels < 1 || decoder_channels < 1)
    fail(ErrorKind::config, "model channel counts must be positive");
  for (int c : stage_channels)
    if (c < 1) fail(ErrorKind::config, "model.stage_channels must be positive");
  if (mask_roi_size < 2 || mask_size < mask_roi_size) fail(ErrorKind::config, "model mask sizes are invalid");
  if (!(objectness_prior > 0 && objectness_prior < 1)) fail(ErrorKind::config, "model.objectness_prior must be in (0,1)");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"anchor_widths", c.anchors.widths},
          {"anchor_ratios", c.anchors.aspect_ratios},
          {"input_bands", c.input_bands},
          {"stem_channels", c.stem_channels},
          {"stage_channels", c.stage_channels},
          {"head_channels", c.head_channels},
          {"mask_roi_size", c.mask_roi_size},
          {"mask_size", c.mask_size},
          {"mask_channels", c.mask_channels},
          {"decoder_channels", c.decoder_channels},
          {"residual_gain", c.residual_gain},
          {"objectness_prior", c.objectness_prior},
          {"gga",
           {{"dim", c.gga.dim},
            {"orientations", c.gga.orientations},
            {"grid", c.gga.grid},
            {"kernel", c.gga.kernel},
            {"sigma", c.gga.sigma},
            {"wavelength", c.gga.wavelength},
            {"gamma", c.gga.gamma},
            {"eps", c.gga.eps}}},
          {"init_seed", c.init_seed}};
}

namespace {

template <class T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::config, std::string("model.") + key + ": " + e.what());
    }
  }
}

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) fail(ErrorKind::config, where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (std::none_of(keys.begin(), keys.end(), [&](const char* s) { return k == s; }))
      fail(ErrorKind::config, "unknown key " + where + "." + k);
}

}  // namespace

ModelConfig model_config_from_json(const nlohmann::json& j) {
  reject_unknown(j,
                 {"anchor_widths", "anchor_ratios", "input_bands", "stem_channels", "stage_channels", "head_channels",
                  "mask_roi_size", "mask_size", "mask_channels", "decoder_channels", "residual_gain",
                  "objectness_prior", "gga", "init_seed"},
                 "model");
  ModelConfig c;
  read_key(j, "anchor_widths", c.anchors.widths);
  read_key(j, "anchor_ratios", c.anchors.aspect_ratios);
  read_key(j, "input_bands", c.input_bands);
  read_key(j, "stem_channels", c.stem_channels);
  read_key(j, "stage_channels", c.stage_channels);
  read_key(j, "head_channels", c.head_channels);
  read_key(j, "mask_roi_size", c.mask_roi_size);
  read_key(j, "mask_size", c.mask_size);
  read_key(j, "mask_channels", c.mask_channels);
  read_key(j, "decoder_channels", c.decoder_channels);
  read_key(j, "residual_gain", c.residual_gain);
  read_key(j, "objectness_prior", c.objectness_prior);
  read_key(j, "init_seed", c.init_seed);
  if (j.contains("gga")) {
    const auto& g = j.at("gga");
    reject_unknown(g, {"dim", "orientations", "grid", "kernel", "sigma", "wavelength", "gamma", "eps"}, "model.gga");
    read_key(g, "dim", c.gga.dim);
    read_key(g, "orientations", c.gga.orientations);
    read_key(g, "grid", c.gga.grid);
    read_key(g, "kernel", c.gga.kernel);
    read_key(g, "sigma", c.gga.sigma);
    read_key(g, "wavelength", c.gga.wavelength);
    read_key(g, "gamma", c.gga.gamma);
    read_key(g, "eps", c.gga.eps);
  }
  c.validate();
  return c;
}

Tensor image_tensor(const imaging::LsbImage& img) {
  if (img.channels != 2) fail(ErrorKind::data, "image " + img.id + " must have 2 bands");
  Tensor t({2, img.height, img.width});
  for (std::size_t i = 0; i < img.pixels.size(); ++i) t[i] = img.pixels[i];
  return t;
}

Var PanopticModel::ResidualBlock::operator()(const Var& x) const { return relu(add(x, second(relu(first(x))))); }

PanopticModel::PanopticModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  Rng rng(config_.init_seed);
  const auto I = ParamGroup::instance, S = ParamGroup::semantic;
  scale_a_ = store_.add("scaling.a", Tensor({2, 1, 1}, 1.0), I);
  scale_b_ = store_.add("scaling.b", Tensor({2, 1, 1}, 0.0), I);
  stem1_ = make_conv(store_, "backbone.stem1", {.in = 4, .out = config_.stem_channels, .stride = 2}, I, rng);
  stem2_ = make_conv(store_, "backbone.stem2",
                     {.in = config_.stem_channels, .out = config_.stage_channels[0], .stride = 2}, I, rng);
  for (int l = 0; l < 4; ++l) {
    const int c = config_.stage_channels[static_cast<std::size_t>(l)];
    const std::string name = "backbone.stage" + std::to_string(l);
    if (l > 0)
      down_[static_cast<std::size_t>(l)] = make_conv(
          store_, name + ".down", {.in = config_.stage_channels[static_cast<std::size_t>(l - 1)], .out = c, .stride = 2},
          I, rng);
    stages_[static_cast<std::size_t>(l)] = {
        make_conv(store_, name + ".conv1", {.in = c, .out = c}, I, rng),
        make_conv(store_, name + ".conv2", {.in = c, .out = c, .gain = config_.residual_gain}, I, rng)};
  }

  // One head per level that carries anchors.
  std::array<int, 4> shapes{};
  for (double w : config_.anchors.widths)
    shapes[static_cast<std::size_t>(level_for_width(w))] += static_cast<int>(config_.anchors.aspect_ratios.size());
  const double prior = -std::log((1.0 - config_.objectness_prior) / config_.objectness_prior);
  for (int l = 0; l < 4; ++l) {
    const int a = shapes[static_cast<std::size_t>(l)];
    if (a == 0) continue;
    const std::string name = "instance.level" + std::to_string(l);
    const int hc = config_.head_channels;
    LevelHead h;
    h.level = l;
    h.shapes = a;
    h.tower = make_conv(store_, name + ".tower", {.in = config_.stage_channels[static_cast<std::size_t>(l)], .out = hc}, I,
                        rng);
    h.objectness =
        make_conv(store_, name + ".objectness", {.in = hc, .out = a, .kernel = 1, .gain = 0.1, .bias_init = prior}, I, rng);
    h.classes = make_conv(store_, name + ".classes", {.in = hc, .out = a * kNumInstanceClasses, .kernel = 1, .gain = 0.1},
                          I, rng);
    h.deltas = make_conv(store_, name + ".deltas", {.in = hc, .out = a * 4, .kernel = 1, .gain = 0.1}, I, rng);
    heads_.push_back(std::move(h));
  }

  const int c0 = config_.stage_channels[0], mc = config_.mask_channels;
  mask1_ = make_conv(store_, "mask.conv1", {.in = c0, .out = mc}, I, rng);
  mask2_ = make_conv(store_, "mask.conv2", {.in = mc, .out = mc}, I, rng);
  mask3_ = make_conv(store_, "mask.conv3", {.in = mc, .out = std::max(1, mc / 2)}, I, rng);
  mask_out_ = make_conv(store_, "mask.logits", {.in = std::max(1, mc / 2), .out = kNumInstanceClasses, .kernel = 1, .gain = 1.0},
                        I, rng);

  gga_ = GgaBlock(store_, "semantic.gga", config_.stage_channels[3], config_.gga, rng);
  const int dc = config_.decoder_channels;
  dec32_ = make_conv(store_, "semantic.dec32", {.in = config_.gga.dim, .out = dc, .kernel = 1}, S, rng);
  lat16_ = make_conv(store_, "semantic.lat16", {.in = config_.stage_channels[2], .out = dc, .kernel = 1, .gain = 1.0}, S, rng);
  dec16_ = make_conv(store_, "semantic.dec16", {.in = dc, .out = dc, .kernel = 1}, S, rng);
  lat8_ = make_conv(store_, "semantic.lat8", {.in = config_.stage_channels[1], .out = dc, .kernel = 1, .gain = 1.0}, S, rng);
  dec_out_ = make_conv(store_, "semantic.logits", {.in = dc, .out = 1, .kernel = 1, .gain = 1.0}, S, rng);
}

AnchorSet PanopticModel::anchors(int height, int width) const { return generate_anchors(config_.anchors, height, width); }

Features PanopticModel::backbone(const Tensor& image) const {
  if (image.rank() != 3 || image.channels() != 2) fail(ErrorKind::data, "backbone expects a [2,H,W] image");
  Features f;
  f.input = scaling::scale_layer(constant(image), scale_a_, scale_b_);
  Var x = relu(stem2_(relu(stem1_(f.input))));
  for (std::size_t l = 0; l < 4; ++l) {
    if (l > 0) x = relu(down_[l](x));
    x = stages_[l](x);
    f.levels[l] = x;
  }
  return f;
}

DenseOutput PanopticModel::instance_dense(const Features& f, const AnchorSet& anchors) const {
  if (anchors.levels.size() != heads_.size()) fail(ErrorKind::data, "anchor levels do not match the model heads");
  const std::size_t n = anchors.size();
  std::vector<Var> obj, cls, box;
  std::vector<int> cls_index(kNumInstanceClasses * n), box_index(4 * n);
  std::size_t flat_offset = 0;
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    const LevelHead& h = heads_[i];
    const AnchorLevel& lvl = anchors.levels[i];
    if (lvl.level != h.level || static_cast<int>(lvl.shapes.size()) != h.shapes)
      fail(ErrorKind::data, "anchor layout does not match the model heads");
    const Var t = relu(h.tower(f.levels[static_cast<std::size_t>(h.level)]));
    const Var o = h.objectness(t), c = h.classes(t), d = h.deltas(t);
    if (o->value.height() != lvl.grid_h || o->value.width() != lvl.grid_w)
      fail(ErrorKind::data, "feature grid does not match the anchor grid");
    const std::size_t count = lvl.count();
    obj.push_back(reshape(o, {static_cast<int>(count), 1, 1}));
    cls.push_back(reshape(c, {static_cast<int>(count) * kNumInstanceClasses, 1, 1}));
    box.push_back(reshape(d, {static_cast<int>(count) * 4, 1, 1}));
    const std::size_t plane = static_cast<std::size_t>(lvl.grid_h) * lvl.grid_w;
    for (std::size_t local = 0; local < count; ++local) {
      const std::size_t a = local / plane, p = local % plane, anchor = lvl.offset + local;
      for (int k = 0; k < kNumInstanceClasses; ++k)
        cls_index[k * n + anchor] = static_cast<int>(kNumInstanceClasses * flat_offset + (a * kNumInstanceClasses + k) * plane + p);
      for (int j = 0; j < 4; ++j) box_index[j * n + anchor] = static_cast<int>(4 * flat_offset + (a * 4 + j) * plane + p);
    }
    flat_offset += count;
  }
  DenseOutput out;
  out.objectness = concat_channels(obj);
  out.class_logits = gather(concat_channels(cls), cls_index, {kNumInstanceClasses, static_cast<int>(n), 1});
  out.box_deltas = gather(concat_channels(box), box_index, {4, static_cast<int>(n), 1});
  return out;
}

Var PanopticModel::mask_head(const Var& roi_features) const {
  Var h = relu(mask2_(relu(mask1_(roi_features))));
  h = upsample_bilinear(h, config_.mask_size, config_.mask_size);
  return mask_out_(relu(mask3_(h)));
}

Var PanopticModel::mask_logits(const Features& f, const std::vector<Box>& rois, const std::vector<int>& classes) const {
  if (rois.size() != classes.size()) fail(ErrorKind::data, "mask_logits: one class per box required");
  if (rois.empty()) return nullptr;
  const double stride = kLevelStrides[0];
  std::vector<Var> per_roi;
  for (std::size_t r = 0; r < rois.size(); ++r) {
    const Box& b = rois[r];
    const auto crop = roi_crop(f.levels[0], {b.x0 / stride, b.y0 / stride, b.x1 / stride, b.y1 / stride},
                               config_.mask_roi_size);
    per_roi.push_back(slice_channels(mask_head(crop.patch), classes[r], 1));
  }
  return concat_channels(per_roi);
}

SemanticOutput PanopticModel::semantic(const Features& f, int height, int width) const {
  const GgaOutput g = gga_(f.levels[3]);
  const Var& f16 = f.levels[2];
  const Var& f8 = f.levels[1];
  Var x = relu(dec32_(g.modulated));
  x = dec16_(relu(add(upsample_bilinear(x, f16->value.height(), f16->value.width()), lat16_(f16))));
  x = dec_out_(relu(add(upsample_bilinear(x, f8->value.height(), f8->value.width()), lat8_(f8))));
  return {upsample_bilinear(x, height, width), g.attention};
}

RawPrediction PanopticModel::predict(const imaging::LsbImage& image, const InferenceConfig& inference) const {
  NoGradGuard no_grad;
  const Tensor x = image_tensor(image);
  const int H = image.height, W = image.width;
  const AnchorSet anchors_set = anchors(H, W);
  const Features f = backbone(x);
  const DenseOutput dense = instance_dense(f, anchors_set);
  const std::size_t n = anchors_set.size();
  const Tensor& obj = dense.objectness->value;
  const Tensor& cls = dense.class_logits->value;
  const Tensor& del = dense.box_deltas->value;

  std::vector<std::size_t> candidates;
  std::vector<double> cand_score;
  std::vector<int> cand_class;
  for (std::size_t i = 0; i < n; ++i) {
    double m = -1e300;
    int best = 0;
    for (int k = 0; k < kNumInstanceClasses; ++k)
      if (cls[k * n + i] > m) {
        m = cls[k * n + i];
        best = k;
      }
    double z = 0.0;
    for (int k = 0; k < kNumInstanceClasses; ++k) z += std::exp(cls[k * n + i] - m);
    const double score = (1.0 / (1.0 + std::exp(-obj[i]))) / z;
    if (score >= inference.prefilter_score) {
      candidates.push_back(i);
      cand_score.push_back(score);
      cand_class.push_back(best);
    }
  }
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cand_score[a] > cand_score[b]; });
  if (order.size() > static_cast<std::size_t>(inference.pre_nms_top)) order.resize(static_cast<std::size_t>(inference.pre_nms_top));

  std::vector<Box> boxes;
  std::vector<double> scores;
  std::vector<int> classes;
  for (std::size_t o : order) {
    const std::size_t i = candidates[o];
    const Box b = clip_box(box_decode({del[i], del[n + i], del[2 * n + i], del[3 * n + i]}, anchors_set.boxes[i]), H, W);
    if (b.width() < 1.0 || b.height() < 1.0) continue;
    boxes.push_back(b);
    scores.push_back(cand_score[o]);
    classes.push_back(cand_class[o]);
  }
  auto kept = box_nms(boxes, scores, classes, inference.box_nms_iou);
  if (kept.size() > static_cast<std::size_t>(inference.max_detections)) kept.resize(static_cast<std::size_t>(inference.max_detections));

  RawPrediction out;
  out.height = H;
  out.width = W;
  std::vector<Box> rois;
  std::vector<int> roi_classes;
  for (std::size_t k : kept) {
    rois.push_back(boxes[k]);
    roi_classes.push_back(classes[k]);
  }
  if (!rois.empty()) {
    const Tensor logits = mask_logits(f, rois, roi_classes)->value;
    const int s = config_.mask_size;
    const std::size_t plane = static_cast<std::size_t>(s) * s;
    for (std::size_t r = 0; r < rois.size(); ++r) {
      std::vector<double> patch(plane);
      for (std::size_t p = 0; p < plane; ++p) patch[p] = 1.0 / (1.0 + std::exp(-logits[r * plane + p]));
      Detection d;
      d.cls = static_cast<annotations::InstanceClass>(roi_classes[r]);
      d.score = scores[kept[r]];
      d.mask = paste_mask(patch, s, rois[r], H, W, inference.mask_threshold);
      const auto bb = annotations::tight_bbox(d.mask);
      if (!bb) continue;
      d.bbox = *bb;
      out.detections.push_back(std::move(d));
    }
  }

  const SemanticOutput sem = semantic(f, H, W);
  out.cirrus_prob.resize(static_cast<std::size_t>(H) * W);
  for (std::size_t p = 0; p < out.cirrus_prob.size(); ++p)
    out.cirrus_prob[p] = static_cast<float>(1.0 / (1.0 + std::exp(-sem.logits->value[p])));
  return out;
}

}  // namespace lsbpan::network
