#include "lsbpan/metrics/iou.hpp"

#include "lsbpan/error.hpp"

namespace lsbpan::metrics {

double mask_iou(const annotations::Mask& a, const annotations::Mask& b) {
  if (!a.same_shape(b)) fail(ErrorKind::data, "mask_iou: shape mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    const bool x = a.bits[i] != 0, y = b.bits[i] != 0;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace lsbpan::metrics
