#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mm/raster.hpp"

namespace mm {

void write_png_gray(const std::filesystem::path& path, int rows, int cols, std::span<const std::uint8_t> pixels);
void write_png_rgb(const std::filesystem::path& path, const RgbImage& image);
// Reads 8-bit gray, RGB or RGBA PNGs; gray is replicated, alpha dropped.
RgbImage read_png_rgb(const std::filesystem::path& path);

// Single-band float32 BIL raster with ENVI header; invalid pixels are NaN.
void write_float_map(const std::filesystem::path& data_path, const ScalarMap& map,
                     const std::vector<std::pair<std::string, std::string>>& header_extra = {});
ScalarMap read_float_map(const std::filesystem::path& data_path);

}  // namespace mm
