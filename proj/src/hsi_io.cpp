#include "mm/hsi_io.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <sstream>

#include "mm/error.hpp"

namespace mm::io {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Collapses internal runs of whitespace so "data   type" == "data type".
std::string normalize_key(std::string_view s) {
  std::string out;
  bool space = false;
  for (char ch : trim(s)) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      space = true;
      continue;
    }
    if (space && !out.empty()) out.push_back(' ');
    space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  return out;
}

// Splits an ENVI header into key -> raw value; brace values may span lines.
std::map<std::string, std::string> split_fields(std::string_view text) {
  std::map<std::string, std::string> fields;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) continue;
    std::string key = normalize_key(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (!value.empty() && value.front() == '{' && value.find('}') == std::string::npos) {
      while (pos < text.size()) {
        std::size_t next = text.find('\n', pos);
        if (next == std::string_view::npos) next = text.size();
        value.push_back(' ');
        value += trim(text.substr(pos, next - pos));
        pos = next + 1;
        if (value.find('}') != std::string::npos) break;
      }
    }
    if (!key.empty()) fields[key] = value;
  }
  return fields;
}

long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    long v = std::stol(value, &used);
    if (trim(value.substr(used)).empty()) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::InvalidGeometry, "header field '" + key + "' is not an integer: " + value);
}

std::vector<double> parse_number_list(const std::string& raw) {
  std::string body = raw;
  const auto open = body.find('{');
  const auto close = body.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open) {
    fail(ErrorCode::MalformedWavelengthList, "expected a braced list");
  }
  body = body.substr(open + 1, close - open - 1);
  std::vector<double> out;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = trim(item);
    if (t.empty()) fail(ErrorCode::MalformedWavelengthList, "empty list entry");
    try {
      std::size_t used = 0;
      out.push_back(std::stod(t, &used));
      if (used != t.size()) throw std::invalid_argument(t);
    } catch (const std::exception&) {
      fail(ErrorCode::MalformedWavelengthList, "non-numeric entry '" + t + "'");
    }
  }
  return out;
}

DataType data_type_from_code(long code) {
  switch (code) {
    case 2: return DataType::Int16;
    case 3: return DataType::Int32;
    case 4: return DataType::Float32;
    case 5: return DataType::Float64;
    default: fail(ErrorCode::InvalidGeometry, "unsupported ENVI data type " + std::to_string(code));
  }
}

template <typename T>
T load(const std::byte* p, bool big_endian) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if (big_endian != (std::endian::native == std::endian::big)) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    std::reverse(b, b + sizeof(T));
  }
  return v;
}

template <typename T>
void store(char* p, T v, bool big_endian) {
  std::memcpy(p, &v, sizeof(T));
  if (big_endian != (std::endian::native == std::endian::big)) std::reverse(p, p + sizeof(T));
}

}  // namespace

int envi_code(DataType t) {
  switch (t) {
    case DataType::Int16: return 2;
    case DataType::Int32: return 3;
    case DataType::Float32: return 4;
    case DataType::Float64: return 5;
  }
  return 0;
}

std::size_t sample_size(DataType t) {
  switch (t) {
    case DataType::Int16: return 2;
    case DataType::Int32: return 4;
    case DataType::Float32: return 4;
    case DataType::Float64: return 8;
  }
  return 0;
}

void CubeMeta::validate() const {
  if (height <= 0 || width <= 0 || bands <= 0) {
    fail(ErrorCode::InvalidGeometry, "cube dimensions must be positive");
  }
  if (static_cast<int>(wavelengths.size()) != bands) {
    fail(ErrorCode::MalformedWavelengthList, "wavelength count " + std::to_string(wavelengths.size()) +
                                                 " != bands " + std::to_string(bands));
  }
  for (std::size_t i = 1; i < wavelengths.size(); ++i) {
    if (!(wavelengths[i] > wavelengths[i - 1])) {
      fail(ErrorCode::MalformedWavelengthList, "wavelengths not strictly increasing at index " + std::to_string(i));
    }
  }
}

std::size_t CubeMeta::data_bytes() const {
  return static_cast<std::size_t>(height) * width * bands * sample_size(data_type);
}

CubeMeta parse_envi_header(std::string_view text, HeaderKind kind) {
  auto fields = split_fields(text);
  auto take = [&](const char* key) -> std::string {
    auto it = fields.find(key);
    if (it == fields.end()) fail(ErrorCode::MissingField, std::string("header has no '") + key + "'");
    std::string v = it->second;
    fields.erase(it);
    return v;
  };

  CubeMeta meta;
  meta.width = static_cast<int>(parse_int("samples", take("samples")));
  meta.height = static_cast<int>(parse_int("lines", take("lines")));
  meta.bands = static_cast<int>(parse_int("bands", take("bands")));
  const std::string interleave = lower(trim(take("interleave")));
  if (interleave != "bil") fail(ErrorCode::UnsupportedInterleave, "interleave '" + interleave + "' (only bil)");
  meta.data_type = data_type_from_code(parse_int("data type", take("data type")));

  if (auto it = fields.find("header offset"); it != fields.end()) {
    meta.header_offset = static_cast<std::size_t>(parse_int("header offset", it->second));
    fields.erase(it);
  }
  if (auto it = fields.find("byte order"); it != fields.end()) {
    meta.big_endian = parse_int("byte order", it->second) == 1;
    fields.erase(it);
  }
  if (auto it = fields.find("data ignore value"); it != fields.end()) {
    try {
      meta.no_data_value = std::stod(it->second);
    } catch (const std::exception&) {
      fail(ErrorCode::InvalidGeometry, "bad 'data ignore value': " + it->second);
    }
    fields.erase(it);
  }

  double unit_scale = 1.0;
  if (auto it = fields.find("wavelength units"); it != fields.end()) {
    const std::string u = lower(trim(it->second));
    if (u == "micrometers" || u == "microns" || u == "um") unit_scale = 1000.0;
    fields.erase(it);
  }

  if (auto it = fields.find("wavelength"); it != fields.end()) {
    meta.wavelengths = parse_number_list(it->second);
    for (double& w : meta.wavelengths) w *= unit_scale;
    fields.erase(it);
  } else if (kind == HeaderKind::Radiance) {
    fail(ErrorCode::MissingField, "header has no 'wavelength'");
  } else {
    for (int b = 0; b < meta.bands; ++b) meta.wavelengths.push_back(b);
  }
  fields.erase("description");
  fields.erase("file type");
  meta.extra = std::move(fields);
  meta.validate();
  return meta;
}

std::string format_envi_header(const CubeMeta& meta) {
  std::ostringstream os;
  os.precision(17);
  os << "ENVI\n";
  os << "samples = " << meta.width << "\n";
  os << "lines = " << meta.height << "\n";
  os << "bands = " << meta.bands << "\n";
  os << "header offset = " << meta.header_offset << "\n";
  os << "file type = ENVI Standard\n";
  os << "data type = " << envi_code(meta.data_type) << "\n";
  os << "interleave = bil\n";
  os << "byte order = " << (meta.big_endian ? 1 : 0) << "\n";
  os << "data ignore value = " << meta.no_data_value << "\n";
  os << "wavelength units = Nanometers\n";
  os << "wavelength = {";
  for (std::size_t i = 0; i < meta.wavelengths.size(); ++i) {
    os << (i ? ", " : "") << meta.wavelengths[i];
  }
  os << "}\n";
  for (const auto& [k, v] : meta.extra) os << k << " = " << v << "\n";
  return os.str();
}

std::filesystem::path header_path_for(const std::filesystem::path& data_path) {
  auto replaced = data_path;
  replaced.replace_extension(".hdr");
  if (std::filesystem::exists(replaced)) return replaced;
  return std::filesystem::path(data_path.string() + ".hdr");
}

MappedFile::MappedFile(const std::filesystem::path& path) {
  const int fd = ::open(path.c_str(), O_RDONLY);
  if (fd < 0) fail(ErrorCode::IoFailure, "cannot open " + path.string());
  struct stat st {};
  if (::fstat(fd, &st) != 0) {
    ::close(fd);
    fail(ErrorCode::IoFailure, "cannot stat " + path.string());
  }
  size_ = static_cast<std::size_t>(st.st_size);
  if (size_ > 0) {
    void* p = ::mmap(nullptr, size_, PROT_READ, MAP_PRIVATE, fd, 0);
    if (p == MAP_FAILED) {
      ::close(fd);
      fail(ErrorCode::IoFailure, "cannot map " + path.string());
    }
    data_ = static_cast<const std::byte*>(p);
  }
  ::close(fd);
}

MappedFile::~MappedFile() {
  if (data_) ::munmap(const_cast<std::byte*>(data_), size_);
}

bool Block::pixel_valid(int r, int c) const {
  const std::size_t i = index(r, c, 0);
  for (int b = 0; b < bands; ++b) {
    if (!valid[i + b]) return false;
  }
  return true;
}

HyperCube::HyperCube(CubeMeta meta, std::shared_ptr<const ByteSource> source)
    : meta_(std::move(meta)), source_(std::move(source)), full_width_(meta_.width) {
  meta_.validate();
  if (!source_) fail(ErrorCode::IoFailure, "null byte source");
  if (source_->bytes().size() < meta_.header_offset + meta_.data_bytes()) {
    fail(ErrorCode::IoFailure, "raster holds " + std::to_string(source_->bytes().size()) + " bytes, header implies " +
                                   std::to_string(meta_.header_offset + meta_.data_bytes()));
  }
}

HyperCube HyperCube::open(const std::filesystem::path& data_path, HeaderKind kind) {
  return open(data_path, header_path_for(data_path), kind);
}

HyperCube HyperCube::open(const std::filesystem::path& data_path, const std::filesystem::path& header_path,
                          HeaderKind kind) {
  if (!std::filesystem::exists(header_path)) {
    fail(ErrorCode::MissingField, "no ENVI header for " + data_path.string() + " (looked for " + header_path.string() + ")");
  }
  std::ifstream in(header_path);
  if (!in) fail(ErrorCode::IoFailure, "cannot read header " + header_path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  CubeMeta meta = parse_envi_header(ss.str(), kind);
  return HyperCube(std::move(meta), std::make_shared<MappedFile>(data_path));
}

double HyperCube::decode(std::size_t byte_offset) const {
  const std::byte* p = source_->bytes().data() + byte_offset;
  switch (meta_.data_type) {
    case DataType::Int16: return load<std::int16_t>(p, meta_.big_endian);
    case DataType::Int32: return load<std::int32_t>(p, meta_.big_endian);
    case DataType::Float32: return load<float>(p, meta_.big_endian);
    case DataType::Float64: return load<double>(p, meta_.big_endian);
  }
  return 0.0;
}

double HyperCube::at(int row, int col, int band) const {
  if (row < 0 || row >= height() || col < 0 || col >= width() || band < 0 || band >= bands()) {
    fail(ErrorCode::OutOfBounds, "sample (" + std::to_string(row) + ", " + std::to_string(col) + ", " +
                                     std::to_string(band) + ") outside cube");
  }
  const std::size_t sz = sample_size(meta_.data_type);
  const std::size_t sample =
      (static_cast<std::size_t>(row + row0_) * meta_.bands + band) * full_width_ + static_cast<std::size_t>(col + col0_);
  return decode(meta_.header_offset + sample * sz);
}

Block HyperCube::read_block(Range rows, Range cols, Range bands) const {
  auto check = [](Range r, int extent, const char* axis) {
    if (r.begin < 0 || r.end > extent || r.begin > r.end) {
      fail(ErrorCode::OutOfBounds, std::string(axis) + " range [" + std::to_string(r.begin) + ", " +
                                       std::to_string(r.end) + ") outside [0, " + std::to_string(extent) + ")");
    }
  };
  check(rows, height(), "row");
  check(cols, width(), "col");
  check(bands, this->bands(), "band");

  Block block;
  block.rows = rows.size();
  block.cols = cols.size();
  block.bands = bands.size();
  const std::size_t n = static_cast<std::size_t>(block.rows) * block.cols * block.bands;
  block.values.resize(n);
  block.valid.resize(n);
  const std::size_t sz = sample_size(meta_.data_type);
  const double nodata = meta_.no_data_value;
  for (int r = 0; r < block.rows; ++r) {
    for (int b = 0; b < block.bands; ++b) {
      const std::size_t line = (static_cast<std::size_t>(rows.begin + r + row0_) * meta_.bands + (bands.begin + b)) *
                                   full_width_ +
                               static_cast<std::size_t>(cols.begin + col0_);
      std::size_t off = meta_.header_offset + line * sz;
      for (int c = 0; c < block.cols; ++c, off += sz) {
        const double v = decode(off);
        const std::size_t i = block.index(r, c, b);
        block.values[i] = v;
        block.valid[i] = (std::isfinite(v) && v != nodata) ? 1 : 0;
      }
    }
  }
  return block;
}

HyperCube HyperCube::window(Range rows, Range cols) const {
  if (rows.begin < 0 || rows.end > height() || cols.begin < 0 || cols.end > width() || rows.empty() || cols.empty()) {
    fail(ErrorCode::OutOfBounds, "window outside cube");
  }
  HyperCube sub = *this;
  sub.meta_.height = rows.size();
  sub.meta_.width = cols.size();
  sub.row0_ = row0_ + rows.begin;
  sub.col0_ = col0_ + cols.begin;
  return sub;
}

BilWriter::BilWriter(std::filesystem::path data_path, CubeMeta meta)
    : path_(std::move(data_path)), meta_(std::move(meta)), out_(path_, std::ios::binary | std::ios::trunc) {
  meta_.header_offset = 0;
  meta_.validate();
  if (!out_) fail(ErrorCode::IoFailure, "cannot write " + path_.string());
  buffer_.resize(static_cast<std::size_t>(meta_.bands) * meta_.width * sample_size(meta_.data_type));
}

BilWriter::~BilWriter() {
  if (!finished_) {
    try {
      finish();
    } catch (...) {
    }
  }
}

void BilWriter::write_line(std::span<const double> line) {
  const std::size_t n = static_cast<std::size_t>(meta_.bands) * meta_.width;
  if (line.size() != n) fail(ErrorCode::DimensionMismatch, "BIL line has wrong sample count");
  if (lines_written_ >= meta_.height) fail(ErrorCode::OutOfBounds, "too many lines written");
  const std::size_t sz = sample_size(meta_.data_type);
  for (std::size_t i = 0; i < n; ++i) {
    char* p = buffer_.data() + i * sz;
    switch (meta_.data_type) {
      case DataType::Int16: store(p, static_cast<std::int16_t>(std::lround(line[i])), meta_.big_endian); break;
      case DataType::Int32: store(p, static_cast<std::int32_t>(std::lround(line[i])), meta_.big_endian); break;
      case DataType::Float32: store(p, static_cast<float>(line[i]), meta_.big_endian); break;
      case DataType::Float64: store(p, line[i], meta_.big_endian); break;
    }
  }
  out_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
  ++lines_written_;
}

void BilWriter::finish() {
  if (finished_) return;
  finished_ = true;
  if (lines_written_ != meta_.height) {
    fail(ErrorCode::IoFailure, "wrote " + std::to_string(lines_written_) + " of " + std::to_string(meta_.height) +
                                   " lines to " + path_.string());
  }
  out_.close();
  if (!out_) fail(ErrorCode::IoFailure, "write failed for " + path_.string());
  auto hdr = path_;
  hdr.replace_extension(".hdr");
  std::ofstream h(hdr);
  h << format_envi_header(meta_);
  if (!h) fail(ErrorCode::IoFailure, "cannot write " + hdr.string());
}

GltMap read_glt(const HyperCube& raster) {
  if (raster.bands() != 2) fail(ErrorCode::DimensionMismatch, "GLT must have 2 bands");
  GltMap glt;
  glt.rows = raster.height();
  glt.cols = raster.width();
  const std::size_t n = static_cast<std::size_t>(glt.rows) * glt.cols;
  glt.orig_col.resize(n);
  glt.orig_row.resize(n);
  for (int r = 0; r < glt.rows; ++r) {
    const Block line = raster.read_rows({r, r + 1});
    for (int c = 0; c < glt.cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * glt.cols + c;
      const double col = line.at(0, c, 0);
      const double row = line.at(0, c, 1);
      glt.orig_col[i] = line.entry_valid(0, c, 0) ? static_cast<std::int32_t>(std::lround(std::fabs(col))) : 0;
      glt.orig_row[i] = line.entry_valid(0, c, 1) ? static_cast<std::int32_t>(std::lround(std::fabs(row))) : 0;
    }
  }
  return glt;
}

void write_glt(const std::filesystem::path& data_path, const GltMap& glt) {
  CubeMeta meta;
  meta.height = glt.rows;
  meta.width = glt.cols;
  meta.bands = 2;
  meta.wavelengths = {0, 1};
  meta.data_type = DataType::Int32;
  BilWriter writer(data_path, meta);
  std::vector<double> line(static_cast<std::size_t>(2) * glt.cols);
  for (int r = 0; r < glt.rows; ++r) {
    for (int c = 0; c < glt.cols; ++c) {
      line[c] = glt.col_at(r, c);
      line[glt.cols + c] = glt.row_at(r, c);
    }
    writer.write_line(line);
  }
  writer.finish();
}

std::vector<int> tile_origins(int extent, int size, int overlap) {
  const int stride = size - overlap;
  std::vector<int> origins{0};
  int o = 0;
  while (o + size < extent) {
    o = std::min(o + stride, extent - size);
    origins.push_back(o);
  }
  return origins;
}

std::vector<TileRect> plan_tiles(int height, int width, int size, int overlap) {
  if (size <= 0 || overlap < 0 || overlap >= size) {
    fail(ErrorCode::InvalidGeometry, "tile size " + std::to_string(size) + " with overlap " + std::to_string(overlap));
  }
  if (size > height || size > width) {
    fail(ErrorCode::InvalidGeometry, "tile size " + std::to_string(size) + " exceeds image " + std::to_string(height) +
                                         "x" + std::to_string(width));
  }
  std::vector<TileRect> tiles;
  for (int r : tile_origins(height, size, overlap)) {
    for (int c : tile_origins(width, size, overlap)) tiles.push_back({r, c, size});
  }
  return tiles;
}

}  // namespace mm::io
