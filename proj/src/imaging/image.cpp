#include "lsbpan/imaging/image.hpp"

#include <cmath>
#include <cstring>

#include "lsbpan/error.hpp"
#include "lsbpan/io_util.hpp"

namespace lsbpan::imaging {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
  return v;
}

}  // namespace

bool LsbImage::all_finite() const {
  for (float v : pixels)
    if (!std::isfinite(v)) return false;
  return true;
}

bool LsbImage::same_pixels(const LsbImage& other) const {
  return height == other.height && width == other.width && channels == other.channels &&
         std::memcmp(pixels.data(), other.pixels.data(), pixels.size() * sizeof(float)) == 0;
}

std::vector<std::uint8_t> encode_lsb(const LsbImage& img) {
  std::vector<std::uint8_t> out(4);
  out.reserve(16 + img.pixels.size() * 4);
  std::memcpy(out.data(), "LSB1", 4);
  put_u32(out, static_cast<std::uint32_t>(img.height));
  put_u32(out, static_cast<std::uint32_t>(img.width));
  put_u32(out, static_cast<std::uint32_t>(img.channels));
  for (float v : img.pixels) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
  }
  return out;
}

LsbImage decode_lsb(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "LSB1", 4) != 0)
    fail(ErrorKind::data, "not an LSB1 image container");
  const auto h = get_u32(bytes, 4), w = get_u32(bytes, 8), c = get_u32(bytes, 12);
  const std::size_t n = static_cast<std::size_t>(h) * w * c;
  if (h == 0 || w == 0 || c == 0 || bytes.size() != 16 + n * 4)
    fail(ErrorKind::data, "LSB1 payload size does not match header");
  LsbImage img(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t bits = get_u32(bytes, 16 + 4 * i);
    std::memcpy(&img.pixels[i], &bits, 4);
  }
  return img;
}

void write_lsb(const LsbImage& img, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_lsb(img));
}

LsbImage read_lsb(const std::filesystem::path& path) {
  auto img = decode_lsb(io::read_file(path));
  img.id = path.stem().string();
  return img;
}

}  // namespace lsbpan::imaging
