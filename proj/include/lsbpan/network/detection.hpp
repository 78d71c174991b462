#pragma once

#include <vector>

#include "lsbpan/annotations/labels.hpp"
#include "lsbpan/network/anchors.hpp"

namespace lsbpan::network {

struct Detection {
  annotations::InstanceClass cls = annotations::InstanceClass::galaxy;
  double score = 0.0;
  annotations::PixelBox bbox;
  annotations::Mask mask;
};

// Resamples a square probability patch into the box and thresholds it.
annotations::Mask paste_mask(const std::vector<double>& patch, int patch_size, const Box& box, int height, int width,
                             double threshold = 0.5);

// Greedy class-wise suppression on box IoU; returns kept indices in score order.
std::vector<std::size_t> box_nms(const std::vector<Box>& boxes, const std::vector<double>& scores,
                                 const std::vector<int>& classes, double iou_threshold);

}  // namespace lsbpan::network
