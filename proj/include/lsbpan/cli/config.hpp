#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "lsbpan/imaging/synth.hpp"
#include "lsbpan/network/model.hpp"
#include "lsbpan/network/train.hpp"
#include "lsbpan/panoptic/panoptic.hpp"

namespace lsbpan::cli {

struct SynthSection {
  int count = 40;
  int image_size = 256;
  double object_scale = 0.5;  // object sizes relative to the 1024 px reference scene
  imaging::SynthConfig scene;  // reference scene; `scene.image_size` is ignored

  // The scene rescaled to image_size, with `seed`.
  imaging::SynthConfig resolved(std::uint64_t seed) const;
};

struct PrepareSection {
  int crop_size = 0;  // 0 keeps the full field
  int out_size = 0;   // 0 keeps the cropped size
  bool separate_halos = true;
  double train_fraction = 0.8;
};

struct TrainSection {
  network::TrainSchedule schedule;
  int checkpoint_every = 10;  // 0 disables
};

struct ModelSection {
  network::ModelConfig config;
  bool auto_anchors = true;  // anchors from the training set's box statistics
};

struct HitlSection {
  int samples = 20;  // synthesized when no dataset is given
  double withhold = 0.5;
  double oracle_iou = 0.5;
  double enqueue_iou = 0.5;
  double score_min = 0.5;
  bool use_http = true;
  std::string host = "127.0.0.1";
  int port = 8080;
};

struct EvalSection {
  std::vector<double> iou_thresholds{0.5, 0.75};
  panoptic::FuseConfig fuse;
  network::InferenceConfig inference;
};

struct RunConfig {
  SynthSection synth;
  PrepareSection prepare;
  TrainSection train;
  ModelSection model;
  HitlSection hitl;
  EvalSection eval;

  void validate() const;
};

// Every field, defaults included.
nlohmann::json to_json(const RunConfig& c);
// Missing keys keep their defaults; unknown keys and wrong types are
// ErrorKind::config with the offending key path in the message.
RunConfig run_config_from_json(const nlohmann::json& j);
// Reads and parses a config file. A missing file is ErrorKind::config.
RunConfig load_run_config(const std::filesystem::path& path);
// Writes config.json into `dir`.
void echo_config(const RunConfig& c, const std::filesystem::path& dir);

}  // namespace lsbpan::cli
