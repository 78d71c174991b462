#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lsbpan/annotations/mask.hpp"
#include "lsbpan/network/detection.hpp"

namespace lsbpan::panoptic {

using network::Detection;

// Instances and the cirrus layer overlap freely (multi-label).
struct PanopticOutput {
  std::string sample_id;
  int height = 0;
  int width = 0;
  std::vector<Detection> detections;  // descending score
  std::vector<float> cirrus_map;      // probabilities, row-major
  annotations::Mask cirrus_mask;      // cirrus_map >= cirrus_threshold
};

struct FuseConfig {
  double score_threshold = 0.5;
  double nms_iou = 0.5;  // on mask IoU, within a class
  double cirrus_threshold = 0.5;
};

// Drops detections below the score threshold, then greedy per-class
// suppression in descending score order: a detection is removed when its
// mask IoU with a kept detection of the same class is >= nms_iou.
PanopticOutput fuse(const std::vector<Detection>& raw, std::vector<float> cirrus_map, int height, int width,
                    const FuseConfig& config = {});
PanopticOutput fuse(const PanopticOutput& output, const FuseConfig& config = {});

// Prediction dump: manifest.jsonl with one line per sample holding id,
// image, version, height, width, instances [{class, bbox, mask_rle (inline),
// score}] and cirrus_prob, the path of an 8-bit PGM (P5) plane.
void save_predictions(const std::vector<PanopticOutput>& outputs, const std::filesystem::path& dir,
                      const std::string& image_root = "", int version = 0);
std::vector<PanopticOutput> load_predictions(const std::filesystem::path& dir, const FuseConfig& config = {});

std::vector<std::uint8_t> quantize_probabilities(const std::vector<float>& p);

}  // namespace lsbpan::panoptic
