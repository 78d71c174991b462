#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace lsbpan::annotations {

// Binary H x W mask, row-major, one byte per pixel (0 or 1).
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int h, int w) : height(h), width(w), bits(static_cast<std::size_t>(h) * w, 0) {}

  std::size_t size() const { return bits.size(); }
  bool at(int y, int x) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int y, int x, bool v = true) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  bool in_bounds(int y, int x) const { return y >= 0 && y < height && x >= 0 && x < width; }
  bool same_shape(const Mask& o) const { return height == o.height && width == o.width; }

  std::size_t count() const;
  bool empty() const { return count() == 0; }

  friend bool operator==(const Mask&, const Mask&) = default;
};

// Inclusive pixel bounding box.
struct PixelBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  int width() const { return x_max - x_min + 1; }
  int height() const { return y_max - y_min + 1; }
  friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

std::optional<PixelBox> tight_bbox(const Mask& m);

Mask mask_union(const Mask& a, const Mask& b);
Mask mask_intersection(const Mask& a, const Mask& b);

// Row-major run lengths alternating 0-runs and 1-runs, starting with a 0-run.
std::vector<std::uint32_t> rle_encode(const Mask& m);
// Throws ErrorKind::data if the runs do not sum to h*w.
Mask rle_decode(std::span<const std::uint32_t> runs, int height, int width);

}  // namespace lsbpan::annotations
