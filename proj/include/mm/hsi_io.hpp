#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mm::io {

enum class Interleave { BIL };

// ENVI "data type" codes: 2 = int16, 3 = int32, 4 = float32, 5 = float64.
enum class DataType { Int16, Int32, Float32, Float64 };

int envi_code(DataType t);
std::size_t sample_size(DataType t);

inline constexpr double kDefaultNoData = -9999.0;

struct CubeMeta {
  int height = 0;  // "lines"
  int width = 0;   // "samples"
  int bands = 0;
  std::vector<double> wavelengths;  // nm, strictly increasing
  Interleave interleave = Interleave::BIL;
  DataType data_type = DataType::Float32;
  double no_data_value = kDefaultNoData;
  std::size_t header_offset = 0;
  bool big_endian = false;
  std::map<std::string, std::string> extra;  // unrecognised keys, verbatim

  // Throws InvalidGeometry / MalformedWavelengthList on a broken invariant.
  void validate() const;
  std::size_t data_bytes() const;
};

enum class HeaderKind {
  Radiance,   // wavelength list required
  Auxiliary,  // GLT, geographic grids, single-band maps: wavelength optional
};

CubeMeta parse_envi_header(std::string_view text, HeaderKind kind = HeaderKind::Radiance);
std::string format_envi_header(const CubeMeta& meta);

// ENVI sidecar convention: "x.img" -> "x.hdr", falling back to "x.img.hdr".
std::filesystem::path header_path_for(const std::filesystem::path& data_path);

// Read-only random-access bytes. Implementations must be safe for concurrent
// readers.
class ByteSource {
 public:
  virtual ~ByteSource() = default;
  virtual std::span<const std::byte> bytes() const = 0;
};

class MemorySource final : public ByteSource {
 public:
  explicit MemorySource(std::vector<std::byte> data) : data_(std::move(data)) {}
  std::span<const std::byte> bytes() const override { return data_; }

 private:
  std::vector<std::byte> data_;
};

class MappedFile final : public ByteSource {
 public:
  explicit MappedFile(const std::filesystem::path& path);
  ~MappedFile() override;
  MappedFile(const MappedFile&) = delete;
  MappedFile& operator=(const MappedFile&) = delete;

  std::span<const std::byte> bytes() const override { return {data_, size_}; }

 private:
  const std::byte* data_ = nullptr;
  std::size_t size_ = 0;
};

// Half-open index interval.
struct Range {
  int begin = 0;
  int end = 0;
  int size() const { return end - begin; }
  bool empty() const { return end <= begin; }
};

// Dense window of a cube, laid out (row, col, band). Entries equal to the
// no-data sentinel (or non-finite) carry valid == 0.
struct Block {
  int rows = 0;
  int cols = 0;
  int bands = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> valid;

  std::size_t index(int r, int c, int b) const {
    return (static_cast<std::size_t>(r) * cols + c) * bands + b;
  }
  double at(int r, int c, int b) const { return values[index(r, c, b)]; }
  bool entry_valid(int r, int c, int b) const { return valid[index(r, c, b)] != 0; }
  // A pixel is usable only if every band in the window is valid.
  bool pixel_valid(int r, int c) const;
  const double* pixel(int r, int c) const { return &values[index(r, c, 0)]; }
};

class HyperCube {
 public:
  HyperCube(CubeMeta meta, std::shared_ptr<const ByteSource> source);

  // Memory-maps `data_path`; header located with header_path_for().
  static HyperCube open(const std::filesystem::path& data_path, HeaderKind kind = HeaderKind::Radiance);
  static HyperCube open(const std::filesystem::path& data_path, const std::filesystem::path& header_path,
                        HeaderKind kind = HeaderKind::Radiance);

  const CubeMeta& meta() const { return meta_; }
  int height() const { return meta_.height; }
  int width() const { return meta_.width; }
  int bands() const { return meta_.bands; }

  double at(int row, int col, int band) const;
  Block read_block(Range rows, Range cols, Range bands) const;
  Block read_rows(Range rows) const { return read_block(rows, {0, width()}, {0, bands()}); }

  // Sub-cube view sharing the same backing bytes.
  HyperCube window(Range rows, Range cols) const;

 private:
  double decode(std::size_t byte_offset) const;

  CubeMeta meta_;
  std::shared_ptr<const ByteSource> source_;
  int row0_ = 0;  // window origin inside the backing raster
  int col0_ = 0;
  int full_width_ = 0;
};

// Streams a BIL raster to disk one line at a time and writes the header on
// finish().
class BilWriter {
 public:
  BilWriter(std::filesystem::path data_path, CubeMeta meta);
  ~BilWriter();
  BilWriter(const BilWriter&) = delete;
  BilWriter& operator=(const BilWriter&) = delete;

  // `line` is band-major: line[b * width + c].
  void write_line(std::span<const double> line);
  void finish();

 private:
  std::filesystem::path path_;
  CubeMeta meta_;
  std::ofstream out_;
  int lines_written_ = 0;
  bool finished_ = false;
  std::vector<char> buffer_;
};

// Geometric lookup table: orthorectified pixel -> raw sensor (row, col),
// 1-based, 0 = unmapped.
struct GltMap {
  int rows = 0;
  int cols = 0;
  std::vector<std::int32_t> orig_col;
  std::vector<std::int32_t> orig_row;

  std::int32_t col_at(int r, int c) const { return orig_col[static_cast<std::size_t>(r) * cols + c]; }
  std::int32_t row_at(int r, int c) const { return orig_row[static_cast<std::size_t>(r) * cols + c]; }
};

// Band 0 = orig_col, band 1 = orig_row. Negative entries (nearest-neighbour
// fill in AVIRIS-NG products) are taken by magnitude.
GltMap read_glt(const HyperCube& raster);
void write_glt(const std::filesystem::path& data_path, const GltMap& glt);

struct TileRect {
  int row0 = 0;
  int col0 = 0;
  int size = 0;

  bool operator==(const TileRect&) const = default;
};

// Origins along one axis: stride = size - overlap, last origin clamped so the
// tile ends on the image edge.
std::vector<int> tile_origins(int extent, int size, int overlap);
// Row-major tile grid.
std::vector<TileRect> plan_tiles(int height, int width, int size, int overlap);

}  // namespace mm::io
