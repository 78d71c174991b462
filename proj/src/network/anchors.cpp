#include "lsbpan/network/anchors.hpp"

#include <algorithm>
#include <cmath>

#include "lsbpan/error.hpp"

namespace lsbpan::network {

namespace {
const double kMaxLogRatio = std::log(1000.0 / 16.0);
}

Box to_box(const annotations::PixelBox& b) {
  return {static_cast<double>(b.x_min), static_cast<double>(b.y_min), static_cast<double>(b.x_max + 1),
          static_cast<double>(b.y_max + 1)};
}

annotations::PixelBox to_pixel_box(const Box& b, int height, int width) {
  annotations::PixelBox p;
  p.x_min = std::clamp(static_cast<int>(std::ceil(b.x0 - 0.5)), 0, width - 1);
  p.y_min = std::clamp(static_cast<int>(std::ceil(b.y0 - 0.5)), 0, height - 1);
  p.x_max = std::clamp(static_cast<int>(std::ceil(b.x1 - 0.5)) - 1, p.x_min, width - 1);
  p.y_max = std::clamp(static_cast<int>(std::ceil(b.y1 - 0.5)) - 1, p.y_min, height - 1);
  return p;
}

Box clip_box(const Box& b, int height, int width) {
  return {std::clamp(b.x0, 0.0, static_cast<double>(width)), std::clamp(b.y0, 0.0, static_cast<double>(height)),
          std::clamp(b.x1, 0.0, static_cast<double>(width)), std::clamp(b.y1, 0.0, static_cast<double>(height))};
}

double box_iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double ih = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

int level_for_width(double width) {
  const int l = static_cast<int>(std::lround(std::log2(width / 32.0)));
  return std::clamp(l, 0, kNumLevels - 1);
}

int level_extent(int input_extent, int level) {
  int e = input_extent;
  for (int i = 0; i < level + 2; ++i) e = (e + 1) / 2;
  return e;
}

AnchorSet generate_anchors(const annotations::AnchorConfig& config, int input_h, int input_w) {
  config.validate();
  if (input_h <= 0 || input_w <= 0) fail(ErrorKind::data, "generate_anchors: empty input");
  AnchorSet set;
  for (int l = 0; l < kNumLevels; ++l) {
    AnchorLevel lvl;
    lvl.level = l;
    lvl.stride = kLevelStrides[static_cast<std::size_t>(l)];
    lvl.grid_h = level_extent(input_h, l);
    lvl.grid_w = level_extent(input_w, l);
    for (double w : config.widths)
      if (level_for_width(w) == l)
        for (double r : config.aspect_ratios) lvl.shapes.push_back({w, w * r});
    if (lvl.shapes.empty()) continue;
    lvl.offset = set.boxes.size();
    for (const auto& s : lvl.shapes)
      for (int y = 0; y < lvl.grid_h; ++y)
        for (int x = 0; x < lvl.grid_w; ++x) {
          const double cx = (x + 0.5) * lvl.stride, cy = (y + 0.5) * lvl.stride;
          set.boxes.push_back({cx - 0.5 * s.width, cy - 0.5 * s.height, cx + 0.5 * s.width, cy + 0.5 * s.height});
        }
    set.levels.push_back(std::move(lvl));
  }
  return set;
}

BoxDelta box_encode(const Box& box, const Box& anchor) {
  if (anchor.area() <= 0) fail(ErrorKind::data, "box_encode: zero-area anchor");
  if (box.area() <= 0) fail(ErrorKind::data, "box_encode: zero-area box");
  return {(box.cx() - anchor.cx()) / anchor.width(), (box.cy() - anchor.cy()) / anchor.height(),
          std::log(box.width() / anchor.width()), std::log(box.height() / anchor.height())};
}

Box box_decode(const BoxDelta& d, const Box& anchor) {
  if (anchor.area() <= 0) fail(ErrorKind::data, "box_decode: zero-area anchor");
  const double cx = anchor.cx() + d[0] * anchor.width();
  const double cy = anchor.cy() + d[1] * anchor.height();
  const double w = anchor.width() * std::exp(std::min(d[2], kMaxLogRatio));
  const double h = anchor.height() * std::exp(std::min(d[3], kMaxLogRatio));
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

}  // namespace lsbpan::network
