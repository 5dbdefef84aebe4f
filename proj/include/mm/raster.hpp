#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace mm {

// Dense single-channel field with a per-pixel validity mask. Row-major.
struct ScalarMap {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> valid;

  ScalarMap() = default;
  ScalarMap(int rows, int cols, double fill = 0.0);

  std::size_t index(int r, int c) const { return static_cast<std::size_t>(r) * cols + c; }
  double& at(int r, int c) { return values[index(r, c)]; }
  double at(int r, int c) const { return values[index(r, c)]; }
  bool is_valid(int r, int c) const { return valid[index(r, c)] != 0; }
  std::size_t size() const { return values.size(); }
  std::size_t valid_count() const;
};

// Normalized-difference index (NDVI/NDWI). Valid entries lie in [-1, 1]
// whenever the constituent band averages are non-negative.
using IndexMap = ScalarMap;

// Per-pixel CH4 enhancement, standardized so background has unit variance.
using EnhancementMap = ScalarMap;

// Multi-channel image, pixel-interleaved: values[(r * cols + c) * channels + k].
struct Image {
  int rows = 0;
  int cols = 0;
  int channels = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> valid;

  Image() = default;
  Image(int rows, int cols, int channels, double fill = 0.0);

  std::size_t pixel(int r, int c) const { return static_cast<std::size_t>(r) * cols + c; }
  double& at(int r, int c, int k) { return values[pixel(r, c) * channels + k]; }
  double at(int r, int c, int k) const { return values[pixel(r, c) * channels + k]; }
  bool is_valid(int r, int c) const { return valid[pixel(r, c)] != 0; }
};

struct BinaryMask {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int rows, int cols) : rows(rows), cols(cols), bits(static_cast<std::size_t>(rows) * cols, 0) {}

  std::uint8_t& at(int r, int c) { return bits[static_cast<std::size_t>(r) * cols + c]; }
  bool at(int r, int c) const { return bits[static_cast<std::size_t>(r) * cols + c] != 0; }
  std::size_t count() const;
  bool empty() const { return count() == 0; }
};

// 8-bit RGB raster, as written to segmentation-mask PNGs.
struct RgbImage {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> bytes;  // rows * cols * 3

  RgbImage() = default;
  RgbImage(int rows, int cols) : rows(rows), cols(cols), bytes(static_cast<std::size_t>(rows) * cols * 3, 0) {}

  std::uint8_t* px(int r, int c) { return &bytes[(static_cast<std::size_t>(r) * cols + c) * 3]; }
  const std::uint8_t* px(int r, int c) const { return &bytes[(static_cast<std::size_t>(r) * cols + c) * 3]; }
};

// Connected components of a binary mask (8-connectivity), one mask per
// component, ordered by first pixel in raster order.
std::vector<BinaryMask> connected_components(const BinaryMask& mask);

}  // namespace mm
