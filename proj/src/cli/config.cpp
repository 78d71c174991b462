#include "lsbpan/cli/config.hpp"

#include <stdexcept>

#include "lsbpan/error.hpp"
#include "lsbpan/io_util.hpp"

namespace lsbpan::cli {

using nlohmann::json;

namespace {

// Calls f(name, field) for every scene parameter.
template <class C, class F>
void visit_scene(C& c, F&& f) {
  f("galaxies", c.galaxies);
  f("diffuse_halo_probability", c.diffuse_halo_probability);
  f("ghosted_halos", c.ghosted_halos);
  f("tidal_streams", c.tidal_streams);
  f("cirrus_probability", c.cirrus_probability);
  f("galaxy_radius", c.galaxy_radius);
  f("galaxy_ellipticity", c.galaxy_ellipticity);
  f("galaxy_intensity", c.galaxy_intensity);
  f("sersic_index", c.sersic_index);
  f("halo_extent", c.halo_extent);
  f("halo_intensity", c.halo_intensity);
  f("halo_ellipticity", c.halo_ellipticity);
  f("ghost_radius", c.ghost_radius);
  f("ghost_rim_width", c.ghost_rim_width);
  f("ghost_intensity", c.ghost_intensity);
  f("ghost_ellipticity", c.ghost_ellipticity);
  f("stream_length", c.stream_length);
  f("stream_width", c.stream_width);
  f("stream_curvature", c.stream_curvature);
  f("stream_intensity", c.stream_intensity);
  f("cirrus_octaves", c.cirrus_octaves);
  f("cirrus_persistence", c.cirrus_persistence);
  f("cirrus_coverage", c.cirrus_coverage);
  f("cirrus_scale", c.cirrus_scale);
  f("cirrus_anisotropy", c.cirrus_anisotropy);
  f("cirrus_orientation", c.cirrus_orientation);
  f("cirrus_intensity", c.cirrus_intensity);
  f("mask_fraction", c.mask_fraction);
  f("merge_overlapping_halos", c.merge_overlapping_halos);
  f("sky_level", c.sky_level);
  f("sky_noise", c.sky_noise);
  f("band_ratio", c.band_ratio);
}

json value_json(const imaging::Range& r) { return json::array({r.lo, r.hi}); }
json value_json(const imaging::IntRange& r) { return json::array({r.lo, r.hi}); }
template <class T>
json value_json(const T& v) {
  return v;
}

void read_value(const json& j, imaging::Range& r) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 2) throw std::invalid_argument("expected [lo, hi]");
  r = {v[0], v[1]};
}
void read_value(const json& j, imaging::IntRange& r) {
  const auto v = j.get<std::vector<int>>();
  if (v.size() != 2) throw std::invalid_argument("expected [lo, hi]");
  r = {v[0], v[1]};
}
template <class T>
void read_value(const json& j, T& out) {
  out = j.get<T>();
}

void check_keys(const json& j, const json& reference, const std::string& where) {
  if (!j.is_object()) fail(ErrorKind::config, where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!reference.contains(k)) fail(ErrorKind::config, "unknown key " + where + "." + k);
    if (reference.at(k).is_object()) check_keys(v, reference.at(k), where + "." + k);
  }
}

template <class T>
void get_to(const json& j, const std::string& key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    read_value(j.at(key), out);
  } catch (const std::exception& e) {
    fail(ErrorKind::config, where + "." + key + ": " + e.what());
  }
}

json synth_json(const SynthSection& s) {
  json j = {{"count", s.count}, {"image_size", s.image_size}, {"object_scale", s.object_scale}, {"seed", s.scene.seed}};
  json scene = json::object();
  visit_scene(s.scene, [&](const char* name, const auto& v) { scene[name] = value_json(v); });
  j["scene"] = scene;
  return j;
}

json eval_json(const EvalSection& e) {
  return {{"iou_thresholds", e.iou_thresholds},
          {"score_threshold", e.fuse.score_threshold},
          {"nms_iou", e.fuse.nms_iou},
          {"cirrus_threshold", e.fuse.cirrus_threshold},
          {"inference",
           {{"prefilter_score", e.inference.prefilter_score},
            {"pre_nms_top", e.inference.pre_nms_top},
            {"box_nms_iou", e.inference.box_nms_iou},
            {"max_detections", e.inference.max_detections},
            {"mask_threshold", e.inference.mask_threshold}}}};
}

}  // namespace

imaging::SynthConfig SynthSection::resolved(std::uint64_t seed) const {
  auto c = scene.scaled_to(image_size, object_scale);
  c.seed = seed;
  return c;
}

void RunConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorKind::config, m); };
  if (synth.count < 1) bad("synth.count must be >= 1");
  if (synth.image_size < 32) bad("synth.image_size must be >= 32");
  if (!(synth.object_scale > 0)) bad("synth.object_scale must be positive");
  synth.resolved(0).validate();
  if (prepare.crop_size < 0 || prepare.out_size < 0) bad("prepare sizes must be >= 0");
  if (!(prepare.train_fraction > 0 && prepare.train_fraction <= 1)) bad("prepare.train_fraction must be in (0, 1]");
  if (train.checkpoint_every < 0) bad("train.checkpoint_every must be >= 0");
  train.schedule.validate();
  model.config.validate();
  if (hitl.samples < 1) bad("hitl.samples must be >= 1");
  if (!(hitl.withhold >= 0 && hitl.withhold <= 1)) bad("hitl.withhold must be in [0, 1]");
  if (hitl.port < 0 || hitl.port > 65535) bad("hitl.port out of range");
  if (eval.iou_thresholds.empty()) bad("eval.iou_thresholds must not be empty");
  for (double t : eval.iou_thresholds)
    if (!(t > 0 && t <= 1)) bad("eval.iou_thresholds must lie in (0, 1]");
}

json to_json(const RunConfig& c) {
  json train = network::to_json(c.train.schedule);
  train["checkpoint_every"] = c.train.checkpoint_every;
  json model = network::to_json(c.model.config);
  model["auto_anchors"] = c.model.auto_anchors;
  return {{"synth", synth_json(c.synth)},
          {"prepare",
           {{"crop_size", c.prepare.crop_size},
            {"out_size", c.prepare.out_size},
            {"separate_halos", c.prepare.separate_halos},
            {"train_fraction", c.prepare.train_fraction}}},
          {"train", train},
          {"model", model},
          {"hitl",
           {{"samples", c.hitl.samples},
            {"withhold", c.hitl.withhold},
            {"oracle_iou", c.hitl.oracle_iou},
            {"enqueue_iou", c.hitl.enqueue_iou},
            {"score_min", c.hitl.score_min},
            {"use_http", c.hitl.use_http},
            {"host", c.hitl.host},
            {"port", c.hitl.port}}},
          {"eval", eval_json(c.eval)}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  const json ref = to_json(c);
  if (!j.is_object()) fail(ErrorKind::config, "config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!ref.contains(k)) fail(ErrorKind::config, "unknown key " + k);

  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    check_keys(s, ref.at("synth"), "synth");
    get_to(s, "count", c.synth.count, "synth");
    get_to(s, "image_size", c.synth.image_size, "synth");
    get_to(s, "object_scale", c.synth.object_scale, "synth");
    get_to(s, "seed", c.synth.scene.seed, "synth");
    if (s.contains("scene"))
      visit_scene(c.synth.scene, [&](const char* name, auto& v) { get_to(s.at("scene"), name, v, "synth.scene"); });
  }
  if (j.contains("prepare")) {
    const auto& p = j.at("prepare");
    check_keys(p, ref.at("prepare"), "prepare");
    get_to(p, "crop_size", c.prepare.crop_size, "prepare");
    get_to(p, "out_size", c.prepare.out_size, "prepare");
    get_to(p, "separate_halos", c.prepare.separate_halos, "prepare");
    get_to(p, "train_fraction", c.prepare.train_fraction, "prepare");
  }
  if (j.contains("train")) {
    json t = j.at("train");
    if (!t.is_object()) fail(ErrorKind::config, "train must be an object");
    get_to(t, "checkpoint_every", c.train.checkpoint_every, "train");
    t.erase("checkpoint_every");
    c.train.schedule = network::train_schedule_from_json(t);
  }
  if (j.contains("model")) {
    json m = j.at("model");
    if (!m.is_object()) fail(ErrorKind::config, "model must be an object");
    get_to(m, "auto_anchors", c.model.auto_anchors, "model");
    m.erase("auto_anchors");
    c.model.config = network::model_config_from_json(m);
  }
  if (j.contains("hitl")) {
    const auto& h = j.at("hitl");
    check_keys(h, ref.at("hitl"), "hitl");
    get_to(h, "samples", c.hitl.samples, "hitl");
    get_to(h, "withhold", c.hitl.withhold, "hitl");
    get_to(h, "oracle_iou", c.hitl.oracle_iou, "hitl");
    get_to(h, "enqueue_iou", c.hitl.enqueue_iou, "hitl");
    get_to(h, "score_min", c.hitl.score_min, "hitl");
    get_to(h, "use_http", c.hitl.use_http, "hitl");
    get_to(h, "host", c.hitl.host, "hitl");
    get_to(h, "port", c.hitl.port, "hitl");
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    check_keys(e, ref.at("eval"), "eval");
    get_to(e, "iou_thresholds", c.eval.iou_thresholds, "eval");
    get_to(e, "score_threshold", c.eval.fuse.score_threshold, "eval");
    get_to(e, "nms_iou", c.eval.fuse.nms_iou, "eval");
    get_to(e, "cirrus_threshold", c.eval.fuse.cirrus_threshold, "eval");
    if (e.contains("inference")) {
      const auto& i = e.at("inference");
      get_to(i, "prefilter_score", c.eval.inference.prefilter_score, "eval.inference");
      get_to(i, "pre_nms_top", c.eval.inference.pre_nms_top, "eval.inference");
      get_to(i, "box_nms_iou", c.eval.inference.box_nms_iou, "eval.inference");
      get_to(i, "max_detections", c.eval.inference.max_detections, "eval.inference");
      get_to(i, "mask_threshold", c.eval.inference.mask_threshold, "eval.inference");
    }
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::config, "config file not found: " + path.string());
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    fail(ErrorKind::config, path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

void echo_config(const RunConfig& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  io::write_text_atomic(dir / "config.json", to_json(c).dump(2) + "\n");
}

}  // namespace lsbpan::cli
