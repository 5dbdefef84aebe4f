#include "mm/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>

#include "mm/error.hpp"
#include "mm/hsi_io.hpp"

namespace mm {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_png(const std::filesystem::path& path, int rows, int cols, int color_type, int channels,
               const std::uint8_t* data) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) fail(ErrorCode::IoFailure, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::IoFailure, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::IoFailure, "libpng failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(cols), static_cast<png_uint_32>(rows), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(cols) * channels;
  for (int r = 0; r < rows; ++r) {
    png_write_row(png, const_cast<png_bytep>(data + static_cast<std::size_t>(r) * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png_gray(const std::filesystem::path& path, int rows, int cols, std::span<const std::uint8_t> pixels) {
  if (pixels.size() != static_cast<std::size_t>(rows) * cols) fail(ErrorCode::DimensionMismatch, "gray PNG size");
  write_png(path, rows, cols, PNG_COLOR_TYPE_GRAY, 1, pixels.data());
}

void write_png_rgb(const std::filesystem::path& path, const RgbImage& image) {
  write_png(path, image.rows, image.cols, PNG_COLOR_TYPE_RGB, 3, image.bytes.data());
}

RgbImage read_png_rgb(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    fail(ErrorCode::IoFailure, "cannot read PNG " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  RgbImage out(static_cast<int>(img.height), static_cast<int>(img.width));
  if (!png_image_finish_read(&img, nullptr, out.bytes.data(), 0, nullptr)) {
    png_image_free(&img);
    fail(ErrorCode::IoFailure, "cannot decode PNG " + path.string() + ": " + img.message);
  }
  return out;
}

void write_float_map(const std::filesystem::path& data_path, const ScalarMap& map,
                     const std::vector<std::pair<std::string, std::string>>& header_extra) {
  io::CubeMeta meta;
  meta.height = map.rows;
  meta.width = map.cols;
  meta.bands = 1;
  meta.wavelengths = {0.0};
  meta.data_type = io::DataType::Float32;
  for (const auto& [k, v] : header_extra) meta.extra[k] = v;
  io::BilWriter writer(data_path, meta);
  std::vector<double> line(static_cast<std::size_t>(map.cols));
  for (int r = 0; r < map.rows; ++r) {
    for (int c = 0; c < map.cols; ++c) {
      line[c] = map.is_valid(r, c) ? map.at(r, c) : std::numeric_limits<double>::quiet_NaN();
    }
    writer.write_line(line);
  }
  writer.finish();
}

ScalarMap read_float_map(const std::filesystem::path& data_path) {
  const io::HyperCube cube = io::HyperCube::open(data_path, io::HeaderKind::Auxiliary);
  ScalarMap map(cube.height(), cube.width());
  const io::Block all = cube.read_block({0, cube.height()}, {0, cube.width()}, {0, 1});
  for (int r = 0; r < map.rows; ++r) {
    for (int c = 0; c < map.cols; ++c) {
      map.at(r, c) = all.at(r, c, 0);
      map.valid[map.index(r, c)] = all.entry_valid(r, c, 0) ? 1 : 0;
    }
  }
  return map;
}

}  // namespace mm
