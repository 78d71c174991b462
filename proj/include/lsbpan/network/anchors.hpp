#pragma once

#include <array>
#include <vector>

#include "lsbpan/annotations/box_stats.hpp"
#include "lsbpan/annotations/mask.hpp"

namespace lsbpan::network {

// Continuous image-space box; pixel i covers [i, i+1).
struct Box {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double cx() const { return 0.5 * (x0 + x1); }
  double cy() const { return 0.5 * (y0 + y1); }
  double area() const { return width() > 0 && height() > 0 ? width() * height() : 0.0; }
};

Box to_box(const annotations::PixelBox& b);
// Pixels whose centers lie inside the box, clipped to the image (at least one).
annotations::PixelBox to_pixel_box(const Box& b, int height, int width);
Box clip_box(const Box& b, int height, int width);
double box_iou(const Box& a, const Box& b);

inline constexpr std::array<int, 4> kLevelStrides = {4, 8, 16, 32};
inline constexpr int kNumLevels = 4;

// Feature level for an anchor width: 32 -> stride 4, 64 -> 8, 128 -> 16,
// 256 and above -> 32.
int level_for_width(double width);

// Spatial extent of a level's feature map for an input extent (each stride-2
// stage rounds up).
int level_extent(int input_extent, int level);

struct AnchorShape {
  double width = 0.0;
  double height = 0.0;
};

struct AnchorLevel {
  int level = 0;
  int stride = 0;
  int grid_h = 0;
  int grid_w = 0;
  std::vector<AnchorShape> shapes;
  std::size_t offset = 0;  // index of this level's first anchor

  std::size_t count() const { return shapes.size() * static_cast<std::size_t>(grid_h) * grid_w; }
};

// Anchors are ordered by level, then shape, then row, then column. An anchor
// at grid cell (y, x) is centered on ((x + 0.5) * stride, (y + 0.5) * stride).
struct AnchorSet {
  std::vector<AnchorLevel> levels;
  std::vector<Box> boxes;

  std::size_t size() const { return boxes.size(); }
};

AnchorSet generate_anchors(const annotations::AnchorConfig& config, int input_h, int input_w);

// Regression targets (dx, dy, dw, dh): center offsets over anchor size and
// log size ratios. Throws ErrorKind::data for a zero-area anchor or box.
using BoxDelta = std::array<double, 4>;
BoxDelta box_encode(const Box& box, const Box& anchor);
// Size deltas are clamped at ln(1000/16) before exponentiation.
Box box_decode(const BoxDelta& delta, const Box& anchor);

}  // namespace lsbpan::network
