#pragma once

#include "lsbpan/annotations/mask.hpp"

namespace lsbpan::metrics {

// |a & b| / |a | b|, and 0 when both masks are empty. Throws ErrorKind::data
// on a shape mismatch.
double mask_iou(const annotations::Mask& a, const annotations::Mask& b);

}  // namespace lsbpan::metrics
