#include "lsbpan/annotations/mask.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "lsbpan/error.hpp"

namespace lsbpan::annotations {

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

std::optional<PixelBox> tight_bbox(const Mask& m) {
  PixelBox box{m.width, m.height, -1, -1};
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m.at(y, x)) {
        box.x_min = std::min(box.x_min, x);
        box.y_min = std::min(box.y_min, y);
        box.x_max = std::max(box.x_max, x);
        box.y_max = std::max(box.y_max, y);
      }
  if (box.x_max < 0) return std::nullopt;
  return box;
}

Mask mask_union(const Mask& a, const Mask& b) {
  if (!a.same_shape(b)) fail(ErrorKind::data, "mask shape mismatch in union");
  Mask out(a.height, a.width);
  for (std::size_t i = 0; i < a.bits.size(); ++i) out.bits[i] = (a.bits[i] | b.bits[i]) ? 1 : 0;
  return out;
}

Mask mask_intersection(const Mask& a, const Mask& b) {
  if (!a.same_shape(b)) fail(ErrorKind::data, "mask shape mismatch in intersection");
  Mask out(a.height, a.width);
  for (std::size_t i = 0; i < a.bits.size(); ++i) out.bits[i] = (a.bits[i] && b.bits[i]) ? 1 : 0;
  return out;
}

std::vector<std::uint32_t> rle_encode(const Mask& m) {
  std::vector<std::uint32_t> runs;
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (std::uint8_t b : m.bits) {
    const std::uint8_t v = b ? 1 : 0;
    if (v == current) {
      ++run;
    } else {
      runs.push_back(run);
      current = v;
      run = 1;
    }
  }
  runs.push_back(run);
  return runs;
}

Mask rle_decode(std::span<const std::uint32_t> runs, int height, int width) {
  const std::uint64_t total = std::accumulate(runs.begin(), runs.end(), std::uint64_t{0});
  if (height <= 0 || width <= 0 || total != static_cast<std::uint64_t>(height) * width)
    fail(ErrorKind::data, "RLE runs sum to " + std::to_string(total) + ", expected " +
                              std::to_string(static_cast<long long>(height) * width));
  Mask m(height, width);
  std::size_t pos = 0;
  std::uint8_t value = 0;
  for (std::uint32_t r : runs) {
    std::fill_n(m.bits.begin() + static_cast<std::ptrdiff_t>(pos), r, value);
    pos += r;
    value ^= 1;
  }
  return m;
}

}  // namespace lsbpan::annotations
