#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "../support/oracles.hpp"
#include "../support/scratch.hpp"
#include "doctest.h"
#include "mm/error.hpp"
#include "mm/hsi_io.hpp"

using namespace mm;
using namespace mm::io;

namespace {

std::string header(const std::string& body) { return "ENVI\n" + body; }

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected mm::Error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("header fields are echoed") {
  const auto m = parse_envi_header(header(
      "samples = 3\nlines = 4\nbands = 2\ninterleave = bil\ndata type = 4\nwavelength = {500, 600}\n"));
  CHECK(m.height == 4);
  CHECK(m.width == 3);
  CHECK(m.bands == 2);
  CHECK(m.data_type == DataType::Float32);
  CHECK(m.no_data_value == kDefaultNoData);
  CHECK(m.wavelengths == std::vector<double>{500, 600});
}

TEST_CASE("432-band header over 380-2510 nm") {
  std::string wl;
  for (int b = 0; b < 432; ++b) wl += (b ? ",\n " : "") + std::to_string(380.0 + b * (2130.0 / 431.0));
  const auto m = parse_envi_header(
      header("samples = 10\nlines = 10\nbands = 432\ninterleave = bil\ndata type = 4\nwavelength = {" + wl + "}\n"));
  CHECK(m.bands == 432);
  CHECK(m.wavelengths.front() == doctest::Approx(380.0));
  CHECK(m.wavelengths.back() == doctest::Approx(2510.0));
}

TEST_CASE("keys are case-insensitive and unknown keys survive as extras") {
  const auto m = parse_envi_header(header(
      "SAMPLES = 2\nLines = 1\nBands = 1\nInterleave = BIL\nData  Type = 5\nWavelength Units = Micrometers\n"
      "wavelength = {0.5}\nsensor type = AVIRIS-NG\ndata ignore value = -1\nbyte order = 1\n"));
  CHECK(m.data_type == DataType::Float64);
  CHECK(m.wavelengths[0] == doctest::Approx(500.0));
  CHECK(m.no_data_value == -1.0);
  CHECK(m.big_endian);
  CHECK(m.extra.count("sensor type") == 1);
}

TEST_CASE("header errors") {
  const std::string ok_rest = "interleave = bil\ndata type = 4\nwavelength = {1, 2}\n";
  CHECK(code_of([&] { parse_envi_header(header("samples = 3\nlines = 4\n" + ok_rest)); }) == ErrorCode::MissingField);
  CHECK(code_of([&] {
          parse_envi_header(header("samples = 3\nlines = 4\nbands = 2\ninterleave = bsq\ndata type = 4\n"
                                   "wavelength = {1, 2}\n"));
        }) == ErrorCode::UnsupportedInterleave);
  CHECK(code_of([&] {
          parse_envi_header(header("samples = 3\nlines = 4\nbands = 3\n" + ok_rest));
        }) == ErrorCode::MalformedWavelengthList);
  CHECK(code_of([&] {
          parse_envi_header(header("samples = 3\nlines = 4\nbands = 2\ninterleave = bil\ndata type = 4\n"
                                   "wavelength = {2, 1}\n"));
        }) == ErrorCode::MalformedWavelengthList);
  CHECK(code_of([&] {
          parse_envi_header(header("samples = 3\nlines = 4\nbands = 2\ninterleave = bil\ndata type = 4\n"
                                   "wavelength = {1, x}\n"));
        }) == ErrorCode::MalformedWavelengthList);
  CHECK(code_of([&] {
          parse_envi_header(header("samples = 3\nlines = 4\nbands = 2\ninterleave = bil\ndata type = 4\n"));
        }) == ErrorCode::MissingField);
}

TEST_CASE("auxiliary rasters need no wavelength list") {
  const auto m = parse_envi_header(header("samples = 3\nlines = 4\nbands = 2\ninterleave = bil\ndata type = 3\n"),
                                   HeaderKind::Auxiliary);
  CHECK(m.data_type == DataType::Int32);
  CHECK(m.wavelengths == std::vector<double>{0, 1});  // band-index placeholders
}

TEST_CASE("format and parse round trip") {
  CubeMeta m;
  m.height = 5;
  m.width = 7;
  m.bands = 3;
  m.data_type = DataType::Int16;
  m.wavelengths = {410.25, 415.5, 2400.125};
  m.no_data_value = -50;
  const auto back = parse_envi_header(format_envi_header(m));
  CHECK(back.height == 5);
  CHECK(back.width == 7);
  CHECK(back.bands == 3);
  CHECK(back.data_type == DataType::Int16);
  CHECK(back.wavelengths == m.wavelengths);
  CHECK(back.no_data_value == -50);
}

TEST_CASE("BIL writer and mmap reader round trip") {
  const auto dir = testutil::scratch_dir("hsi_roundtrip");
  for (DataType dt : {DataType::Int16, DataType::Int32, DataType::Float32, DataType::Float64}) {
    CAPTURE(envi_code(dt));
    CubeMeta m;
    m.height = 4;
    m.width = 3;
    m.bands = 2;
    m.data_type = dt;
    m.wavelengths = {500, 600};
    const auto path = dir / ("cube" + std::to_string(envi_code(dt)) + ".img");
    {
      BilWriter w(path, m);
      for (int r = 0; r < 4; ++r) {
        std::vector<double> line(6);
        for (int b = 0; b < 2; ++b) {
          for (int c = 0; c < 3; ++c) line[b * 3 + c] = 100 * r + 10 * c + b;
        }
        w.write_line(line);
      }
      w.finish();
    }
    const auto cube = HyperCube::open(path);
    CHECK(cube.height() == 4);
    CHECK(cube.at(2, 1, 1) == 211.0);

    const Block blk = cube.read_block({1, 3}, {1, 3}, {0, 1});
    CHECK(blk.rows == 2);
    CHECK(blk.cols == 2);
    CHECK(blk.at(0, 0, 0) == 110.0);
    CHECK(blk.at(1, 1, 0) == 220.0);
  }
}

TEST_CASE("big-endian samples decode") {
  CubeMeta m;
  m.height = 1;
  m.width = 2;
  m.bands = 1;
  m.data_type = DataType::Int16;
  m.wavelengths = {500};
  m.big_endian = true;
  std::vector<std::byte> bytes{std::byte{0x01}, std::byte{0x02}, std::byte{0xff}, std::byte{0xfe}};
  HyperCube cube(m, std::make_shared<MemorySource>(bytes));
  CHECK(cube.at(0, 0, 0) == 0x0102);
  CHECK(cube.at(0, 1, 0) == -2.0);
}

TEST_CASE("header offset skips leading bytes") {
  CubeMeta m;
  m.height = 1;
  m.width = 1;
  m.bands = 1;
  m.data_type = DataType::Int16;
  m.wavelengths = {500};
  m.header_offset = 3;
  std::vector<std::byte> bytes{std::byte{9}, std::byte{9}, std::byte{9}, std::byte{7}, std::byte{0}};
  HyperCube cube(m, std::make_shared<MemorySource>(bytes));
  CHECK(cube.at(0, 0, 0) == 7.0);
}

TEST_CASE("short backing store is rejected") {
  CubeMeta m;
  m.height = 2;
  m.width = 2;
  m.bands = 1;
  m.data_type = DataType::Float32;
  m.wavelengths = {500};
  CHECK(code_of([&] { HyperCube(m, std::make_shared<MemorySource>(std::vector<std::byte>(8))); }) ==
        ErrorCode::IoFailure);
}

TEST_CASE("missing header file") {
  const auto dir = testutil::scratch_dir("hsi_missing");
  std::ofstream(dir / "lonely.img") << "xxxx";
  CHECK(code_of([&] { HyperCube::open(dir / "lonely.img"); }) == ErrorCode::MissingField);
  CHECK(code_of([&] { HyperCube::open(dir / "absent.img", dir / "absent.hdr"); }) == ErrorCode::MissingField);
}

TEST_CASE("block reads agree with per-sample reads and split reads") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5, 5);
  const int rows = 9, cols = 7, bands = 4;
  std::vector<double> v(rows * cols * bands);
  for (double& x : v) x = u(rng);
  const auto cube = oracle::make_cube(rows, cols, bands, v);

  const Block full = cube.read_rows({0, rows});
  const Block top = cube.read_rows({0, 4});
  const Block bottom = cube.read_rows({4, rows});
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      for (int b = 0; b < bands; ++b) {
        const double x = cube.at(r, c, b);
        REQUIRE(full.at(r, c, b) == x);
        REQUIRE((r < 4 ? top.at(r, c, b) : bottom.at(r - 4, c, b)) == x);
      }
    }
  }
  const Block again = cube.read_rows({0, rows});
  CHECK(again.values == full.values);
}

TEST_CASE("no-data and non-finite samples are flagged") {
  std::vector<double> v(2 * 2 * 2, 1.0);
  v[(1 * 2 + 0) * 2 + 1] = kDefaultNoData;
  v[(0 * 2 + 1) * 2 + 0] = std::nan("");
  const auto cube = oracle::make_cube(2, 2, 2, v);
  const Block blk = cube.read_rows({0, 2});
  CHECK(blk.entry_valid(0, 0, 0));
  CHECK_FALSE(blk.entry_valid(1, 0, 1));
  CHECK(blk.entry_valid(1, 0, 0));
  CHECK_FALSE(blk.pixel_valid(1, 0));
  CHECK_FALSE(blk.pixel_valid(0, 1));
  CHECK(blk.pixel_valid(1, 1));
}

TEST_CASE("out-of-bounds access") {
  const auto cube = oracle::make_cube(2, 2, 1, {1, 2, 3, 4});
  CHECK(code_of([&] { cube.at(2, 0, 0); }) == ErrorCode::OutOfBounds);
  CHECK(code_of([&] { cube.read_block({0, 3}, {0, 2}, {0, 1}); }) == ErrorCode::OutOfBounds);
  CHECK(code_of([&] { cube.read_block({0, 2}, {-1, 2}, {0, 1}); }) == ErrorCode::OutOfBounds);
  CHECK(code_of([&] { cube.window({0, 2}, {1, 3}); }) == ErrorCode::OutOfBounds);
}

TEST_CASE("windows share the backing raster") {
  std::vector<double> v(6 * 5 * 2);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  const auto cube = oracle::make_cube(6, 5, 2, v);
  const auto win = cube.window({2, 5}, {1, 4});
  CHECK(win.height() == 3);
  CHECK(win.width() == 3);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      for (int b = 0; b < 2; ++b) CHECK(win.at(r, c, b) == cube.at(r + 2, c + 1, b));
    }
  }
  const Block blk = win.read_block({1, 3}, {0, 2}, {1, 2});
  CHECK(blk.at(1, 1, 0) == cube.at(4, 2, 1));
}

TEST_CASE("GLT round trip, unmapped zeros and negative fill") {
  const auto dir = testutil::scratch_dir("hsi_glt");
  GltMap g;
  g.rows = 2;
  g.cols = 3;
  g.orig_col = {1, 2, 0, 598, -5, 3};
  g.orig_row = {1, 1, 0, 2, -2, 2};
  write_glt(dir / "glt.img", g);
  const auto back = read_glt(HyperCube::open(dir / "glt.img", HeaderKind::Auxiliary));
  CHECK(back.col_at(0, 2) == 0);
  CHECK(back.col_at(1, 0) == 598);
  CHECK(back.col_at(1, 1) == 5);
  CHECK(back.row_at(1, 1) == 2);
}

TEST_CASE("tile plans") {
  CHECK(plan_tiles(256, 256, 256, 128) == std::vector<TileRect>{{0, 0, 256}});
  CHECK(tile_origins(512, 256, 128) == std::vector<int>{0, 128, 256});
  CHECK(plan_tiles(512, 512, 256, 128).size() == 9);
  CHECK(tile_origins(300, 256, 128) == std::vector<int>{0, 44});
  CHECK(plan_tiles(300, 300, 256, 128).size() == 4);
  CHECK(code_of([] { plan_tiles(300, 300, 128, 128); }) == ErrorCode::InvalidGeometry);
  CHECK(code_of([] { plan_tiles(100, 300, 128, 64); }) == ErrorCode::InvalidGeometry);
}

TEST_CASE("property: tiles cover the image with the stated overlap") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const int h = std::uniform_int_distribution<int>(1, 90)(rng);
    const int w = std::uniform_int_distribution<int>(1, 90)(rng);
    const int size = std::uniform_int_distribution<int>(1, std::min(h, w))(rng);
    const int overlap = std::uniform_int_distribution<int>(0, size - 1)(rng);
    CAPTURE(h);
    CAPTURE(w);
    CAPTURE(size);
    CAPTURE(overlap);
    const auto tiles = plan_tiles(h, w, size, overlap);
    std::vector<int> hits(h * w, 0);
    for (const auto& t : tiles) {
      REQUIRE(t.row0 >= 0);
      REQUIRE(t.col0 >= 0);
      REQUIRE(t.row0 + size <= h);
      REQUIRE(t.col0 + size <= w);
      for (int r = t.row0; r < t.row0 + size; ++r) {
        for (int c = t.col0; c < t.col0 + size; ++c) ++hits[r * w + c];
      }
    }
    for (int x : hits) REQUIRE(x >= 1);

    const auto o = tile_origins(w, size, overlap);
    for (std::size_t i = 1; i < o.size(); ++i) {
      const int shared = o[i - 1] + size - o[i];
      if (i + 1 < o.size()) {
        REQUIRE(o[i] - o[i - 1] == size - overlap);
      } else {
        REQUIRE(shared >= overlap);
      }
    }
    REQUIRE(o.back() + size == w);
  }
}
