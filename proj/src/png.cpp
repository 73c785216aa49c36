#include "dynfire/png.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <zlib.h>

#include "dynfire/errors.hpp"

namespace dynfire {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void chunk(std::vector<std::uint8_t>& out, const char* type, const std::vector<std::uint8_t>& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  put_u32(out, static_cast<std::uint32_t>(crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start))));
}

}  // namespace

std::vector<std::uint8_t> encode_png_gray(const Tensor<float>& grid) {
  if (grid.rank() != 2) throw DimensionError("png: expected an [H,W] grid, got " + shape_str(grid.shape()));
  const std::size_t h = grid.dim(0), w = grid.dim(1);
  std::vector<std::uint8_t> raw;
  raw.reserve(h * (w + 1));
  for (std::size_t y = 0; y < h; ++y) {
    raw.push_back(0);  // filter: none
    for (std::size_t x = 0; x < w; ++x) {
      const float v = grid[y * w + x];
      const float c = std::isfinite(v) ? std::clamp(v, 0.0f, 1.0f) : 0.0f;
      raw.push_back(static_cast<std::uint8_t>(std::lround(c * 255.0f)));
    }
  }
  uLongf len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> idat(len);
  if (compress2(idat.data(), &len, raw.data(), static_cast<uLong>(raw.size()), Z_BEST_COMPRESSION) != Z_OK) {
    throw Error("png: zlib compression failed");
  }
  idat.resize(len);

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(w));
  put_u32(ihdr, static_cast<std::uint32_t>(h));
  ihdr.insert(ihdr.end(), {8, 0, 0, 0, 0});  // 8-bit, grayscale, deflate, adaptive filter, no interlace
  chunk(out, "IHDR", ihdr);
  chunk(out, "IDAT", idat);
  chunk(out, "IEND", {});
  return out;
}

void write_png_gray(const Tensor<float>& grid, const std::filesystem::path& path) {
  const auto bytes = encode_png_gray(grid);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace dynfire
