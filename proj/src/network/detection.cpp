#include "lsbpan/network/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lsbpan::network {

annotations::Mask paste_mask(const std::vector<double>& patch, int patch_size, const Box& box, int height, int width,
                             double threshold) {
  annotations::Mask m(height, width);
  if (box.area() <= 0) return m;
  const auto pb = to_pixel_box(clip_box(box, height, width), height, width);
  const double sx = patch_size / box.width(), sy = patch_size / box.height();
  auto sample = [&](double u, double v) {
    u = std::clamp(u, 0.0, patch_size - 1.0);
    v = std::clamp(v, 0.0, patch_size - 1.0);
    const int i0 = static_cast<int>(u), j0 = static_cast<int>(v);
    const int i1 = std::min(i0 + 1, patch_size - 1), j1 = std::min(j0 + 1, patch_size - 1);
    const double fu = u - i0, fv = v - j0;
    auto at = [&](int j, int i) { return patch[static_cast<std::size_t>(j) * patch_size + i]; };
    return (at(j0, i0) * (1 - fu) + at(j0, i1) * fu) * (1 - fv) + (at(j1, i0) * (1 - fu) + at(j1, i1) * fu) * fv;
  };
  for (int y = pb.y_min; y <= pb.y_max; ++y) {
    const double v = (y + 0.5 - box.y0) * sy - 0.5;
    for (int x = pb.x_min; x <= pb.x_max; ++x) {
      const double u = (x + 0.5 - box.x0) * sx - 0.5;
      if (sample(u, v) >= threshold) m.set(y, x);
    }
  }
  return m;
}

std::vector<std::size_t> box_nms(const std::vector<Box>& boxes, const std::vector<double>& scores,
                                 const std::vector<int>& classes, double iou_threshold) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    bool suppressed = false;
    for (std::size_t k : kept)
      if (classes[k] == classes[i] && box_iou(boxes[k], boxes[i]) > iou_threshold) {
        suppressed = true;
        break;
      }
    if (!suppressed) kept.push_back(i);
  }
  return kept;
}

}  // namespace lsbpan::network
