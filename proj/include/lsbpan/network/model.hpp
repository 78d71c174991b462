#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "lsbpan/annotations/box_stats.hpp"
#include "lsbpan/imaging/image.hpp"
#include "lsbpan/network/anchors.hpp"
#include "lsbpan/network/detection.hpp"
#include "lsbpan/network/gga.hpp"
#include "lsbpan/network/layers.hpp"

namespace lsbpan::network {

struct ModelConfig {
  annotations::AnchorConfig anchors{{32, 64, 128, 256, 512}, {0.5, 1.0, 2.0}};
  int input_bands = 2;
  int stem_channels = 16;
  std::array<int, 4> stage_channels{32, 64, 128, 256};
  int head_channels = 64;
  int mask_roi_size = 14;
  int mask_size = 28;
  int mask_channels = 32;
  int decoder_channels = 32;
  double residual_gain = 0.2;       // init gain of each residual branch's last conv
  double objectness_prior = 0.01;   // initial foreground probability
  GgaConfig gga;
  std::uint64_t init_seed = 0;

  void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
// Missing keys keep their defaults; unknown keys are a config error.
ModelConfig model_config_from_json(const nlohmann::json& j);

struct InferenceConfig {
  double prefilter_score = 0.05;
  int pre_nms_top = 1000;
  double box_nms_iou = 0.7;
  int max_detections = 50;
  double mask_threshold = 0.5;
};

struct Features {
  Var input;                  // [4,H,W] after intensity scaling
  std::array<Var, 4> levels;  // strides 4, 8, 16, 32
};

// Per-anchor outputs in anchor order (see AnchorSet).
struct DenseOutput {
  Var objectness;    // [N,1,1]
  Var class_logits;  // [K,N,1]
  Var box_deltas;    // [4,N,1]
};

struct SemanticOutput {
  Var logits;     // [1,H,W]
  Var attention;  // [K,G,G]
};

// Raw model output for one image, before panoptic fusion.
struct RawPrediction {
  std::vector<Detection> detections;  // descending score
  std::vector<float> cirrus_prob;     // H*W, row-major
  int height = 0;
  int width = 0;
};

Tensor image_tensor(const imaging::LsbImage& img);

class PanopticModel {
 public:
  explicit PanopticModel(ModelConfig config);
  PanopticModel(const PanopticModel&) = delete;
  PanopticModel& operator=(const PanopticModel&) = delete;

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  AnchorSet anchors(int height, int width) const;

  Features backbone(const Tensor& image) const;
  DenseOutput instance_dense(const Features& f, const AnchorSet& anchors) const;
  // Class-specific mask logits [R, S, S] for boxes in image coordinates.
  Var mask_logits(const Features& f, const std::vector<Box>& rois, const std::vector<int>& classes) const;
  // The mask head applied to a level-0 feature patch; exposed for tests.
  Var mask_head(const Var& roi_features) const;  // [C,r,r] -> [K,S,S]
  SemanticOutput semantic(const Features& f, int height, int width) const;
  GgaOutput gga(const Var& coarsest) const { return gga_(coarsest); }

  RawPrediction predict(const imaging::LsbImage& image, const InferenceConfig& inference = {}) const;

 private:
  struct ResidualBlock {
    Conv first, second;
    Var operator()(const Var& x) const;
  };
  struct LevelHead {
    int level = 0;
    int shapes = 0;
    Conv tower, objectness, classes, deltas;
  };

  ModelConfig config_;
  ParamStore store_;
  Var scale_a_, scale_b_;
  Conv stem1_, stem2_;
  std::array<Conv, 4> down_;  // down_[0] unused
  std::array<ResidualBlock, 4> stages_;
  std::vector<LevelHead> heads_;
  Conv mask1_, mask2_, mask3_, mask_out_;
  GgaBlock gga_;
  Conv dec32_, lat16_, dec16_, lat8_, dec_out_;
};

}  // namespace lsbpan::network
