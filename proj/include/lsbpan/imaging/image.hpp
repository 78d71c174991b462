#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace lsbpan::imaging {

// Multi-band image with planar (C x H x W) float storage.
struct LsbImage {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> pixels;
  std::string id;
  std::map<std::string, std::string> meta;

  LsbImage() = default;
  LsbImage(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, fill) {}

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }

  float& at(int c, int y, int x) { return pixels[c * plane_size() + static_cast<std::size_t>(y) * width + x]; }
  float at(int c, int y, int x) const {
    return pixels[c * plane_size() + static_cast<std::size_t>(y) * width + x];
  }

  std::span<float> plane(int c) { return {pixels.data() + c * plane_size(), plane_size()}; }
  std::span<const float> plane(int c) const { return {pixels.data() + c * plane_size(), plane_size()}; }

  bool all_finite() const;
  bool same_pixels(const LsbImage& other) const;
};

// "LSB1" container: 16-byte little-endian header (magic, H, W, C) followed by
// C planes of H*W float32 values in row-major order.
std::vector<std::uint8_t> encode_lsb(const LsbImage& img);
LsbImage decode_lsb(std::span<const std::uint8_t> bytes);

void write_lsb(const LsbImage& img, const std::filesystem::path& path);
LsbImage read_lsb(const std::filesystem::path& path);

}  // namespace lsbpan::imaging
