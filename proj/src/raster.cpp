#include "mm/raster.hpp"

#include <algorithm>
#include <numeric>

namespace mm {

ScalarMap::ScalarMap(int rows, int cols, double fill)
    : rows(rows),
      cols(cols),
      values(static_cast<std::size_t>(rows) * cols, fill),
      valid(static_cast<std::size_t>(rows) * cols, 1) {}

std::size_t ScalarMap::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

Image::Image(int rows, int cols, int channels, double fill)
    : rows(rows),
      cols(cols),
      channels(channels),
      values(static_cast<std::size_t>(rows) * cols * channels, fill),
      valid(static_cast<std::size_t>(rows) * cols, 1) {}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

std::vector<BinaryMask> connected_components(const BinaryMask& mask) {
  std::vector<int> label(mask.bits.size(), -1);
  std::vector<BinaryMask> out;
  std::vector<std::pair<int, int>> stack;
  for (int r = 0; r < mask.rows; ++r) {
    for (int c = 0; c < mask.cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * mask.cols + c;
      if (!mask.bits[i] || label[i] >= 0) continue;
      const int id = static_cast<int>(out.size());
      out.emplace_back(mask.rows, mask.cols);
      BinaryMask& comp = out.back();
      stack.clear();
      stack.emplace_back(r, c);
      label[i] = id;
      while (!stack.empty()) {
        auto [y, x] = stack.back();
        stack.pop_back();
        comp.at(y, x) = 1;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = y + dy, nx = x + dx;
            if (ny < 0 || nx < 0 || ny >= mask.rows || nx >= mask.cols) continue;
            const std::size_t j = static_cast<std::size_t>(ny) * mask.cols + nx;
            if (mask.bits[j] && label[j] < 0) {
              label[j] = id;
              stack.emplace_back(ny, nx);
            }
          }
        }
      }
    }
  }
  return out;
}

}  // namespace mm
