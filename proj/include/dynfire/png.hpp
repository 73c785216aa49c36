#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dynfire/tensor.hpp"

namespace dynfire {

/// 8-bit grayscale PNG of an [H,W] grid with values in [0,1] (clamped).
std::vector<std::uint8_t> encode_png_gray(const Tensor<float>& grid);
void write_png_gray(const Tensor<float>& grid, const std::filesystem::path& path);

}  // namespace dynfire
