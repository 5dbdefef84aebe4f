#include "mm/annotate.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "mm/error.hpp"
#include "mm/hsi_io.hpp"
#include "mm/image_io.hpp"

namespace mm::annotate {

namespace {

constexpr double kDetEps = 1e-12;

// Hartley normalisation: centroid to origin, mean distance sqrt(2).
Eigen::Matrix3d normaliser(const std::vector<Point>& pts) {
  double mx = 0.0, my = 0.0;
  for (const auto& p : pts) {
    mx += p.x;
    my += p.y;
  }
  mx /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  double dist = 0.0;
  for (const auto& p : pts) dist += std::hypot(p.x - mx, p.y - my);
  dist /= static_cast<double>(pts.size());
  const double s = dist > 0.0 ? std::sqrt(2.0) / dist : 1.0;
  Eigen::Matrix3d t;
  t << s, 0, -s * mx, 0, s, -s * my, 0, 0, 1;
  return t;
}

Point transform(const Eigen::Matrix3d& t, const Point& p) {
  const Eigen::Vector3d v = t * Eigen::Vector3d(p.x, p.y, 1.0);
  return {v.x() / v.z(), v.y() / v.z()};
}

void check_not_collinear(const std::vector<Point>& pts) {
  double scale = 0.0;
  for (const auto& p : pts) scale = std::max({scale, std::fabs(p.x), std::fabs(p.y)});
  const double tol = 1e-9 * std::max(1.0, scale * scale);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      for (std::size_t k = j + 1; k < pts.size(); ++k) {
        const double cross = (pts[j].x - pts[i].x) * (pts[k].y - pts[i].y) -
                             (pts[j].y - pts[i].y) * (pts[k].x - pts[i].x);
        if (std::fabs(cross) <= tol) {
          fail(ErrorCode::DegenerateConfiguration, "source points " + std::to_string(i) + ", " + std::to_string(j) +
                                                       ", " + std::to_string(k) + " are collinear");
        }
      }
    }
  }
}

std::vector<double> parse_numbers(const std::string& text) {
  std::string s = text;
  for (char& ch : s) {
    if (ch == '{' || ch == '}' || ch == ',') ch = ' ';
  }
  std::istringstream is(s);
  std::vector<double> out;
  double v = 0.0;
  while (is >> v) out.push_back(v);
  return out;
}

}  // namespace

Homography::Homography(const Eigen::Matrix3d& m) : m_(m) {
  if (!m.allFinite() || std::fabs(m(2, 2)) < kDetEps) {
    fail(ErrorCode::NonInvertibleHomography, "homography cannot be normalised to m(2,2) = 1");
  }
  m_ /= m(2, 2);
}

Homography Homography::translation(double dx, double dy) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 2) = dx;
  m(1, 2) = dy;
  return Homography(m);
}

Homography Homography::scale(double sx, double sy) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 0) = sx;
  m(1, 1) = sy;
  return Homography(m);
}

bool Homography::invertible() const { return std::fabs(det()) > kDetEps; }

Homography Homography::inverse() const {
  if (!invertible()) fail(ErrorCode::NonInvertibleHomography, "homography determinant is ~0");
  return Homography(m_.inverse());
}

bool Homography::apply(const Point& p, Point& out) const {
  const Eigen::Vector3d v = m_ * Eigen::Vector3d(p.x, p.y, 1.0);
  if (!(v.z() > kDetEps)) return false;
  out = {v.x() / v.z(), v.y() / v.z()};
  return std::isfinite(out.x) && std::isfinite(out.y);
}

Point Homography::apply(const Point& p) const {
  Point out;
  if (!apply(p, out)) fail(ErrorCode::NonInvertibleHomography, "point maps to infinity");
  return out;
}

HomographyFit estimate_homography(const std::vector<Correspondence>& pairs) {
  if (pairs.size() < 4) {
    fail(ErrorCode::InsufficientPairs, "homography needs 4 correspondences, got " + std::to_string(pairs.size()));
  }
  std::vector<Point> src, dst;
  for (const auto& c : pairs) {
    if (!std::isfinite(c.src.x) || !std::isfinite(c.src.y) || !std::isfinite(c.dst.x) || !std::isfinite(c.dst.y)) {
      fail(ErrorCode::DegenerateConfiguration, "correspondence with non-finite coordinates");
    }
    src.push_back(c.src);
    dst.push_back(c.dst);
  }
  check_not_collinear(src);

  const Eigen::Matrix3d ts = normaliser(src);
  const Eigen::Matrix3d td = normaliser(dst);
  const auto n = static_cast<Eigen::Index>(pairs.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n, 9);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Point s = transform(ts, src[i]);
    const Point d = transform(td, dst[i]);
    a.row(2 * i) << -s.x, -s.y, -1, 0, 0, 0, d.x * s.x, d.x * s.y, d.x;
    a.row(2 * i + 1) << 0, 0, 0, -s.x, -s.y, -1, d.y * s.x, d.y * s.y, d.y;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  const Eigen::Matrix3d m = td.inverse() * hn * ts;

  HomographyFit fit{Homography(m), 0.0};
  if (!fit.h.invertible()) fail(ErrorCode::DegenerateConfiguration, "correspondences give a singular homography");
  double sq = 0.0;
  for (const auto& c : pairs) {
    Point p;
    if (!fit.h.apply(c.src, p)) fail(ErrorCode::DegenerateConfiguration, "source point maps to infinity");
    sq += (p.x - c.dst.x) * (p.x - c.dst.x) + (p.y - c.dst.y) * (p.y - c.dst.y);
  }
  fit.rms = std::sqrt(sq / static_cast<double>(pairs.size()));
  return fit;
}

std::string to_string(SourceType t) { return t == SourceType::Point ? "point" : "diffused"; }

SourceType source_type_from_string(const std::string& s) {
  if (s == "point" || s == "point_source") return SourceType::Point;
  if (s == "diffused" || s == "diffused_source") return SourceType::Diffused;
  fail(ErrorCode::InvalidArgument, "unknown source type '" + s + "'");
}

ScalarMap warp_mask(const ScalarMap& patch, const Homography& h, int rows, int cols) {
  if (rows <= 0 || cols <= 0) fail(ErrorCode::InvalidArgument, "warp target must be non-empty");
  const Homography inv = h.inverse();
  ScalarMap out(rows, cols, 0.0);
  std::fill(out.valid.begin(), out.valid.end(), 1);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      Point s;
      if (!inv.apply({c + 0.5, r + 0.5}, s)) continue;
      const double sx = std::floor(s.x);
      const double sy = std::floor(s.y);
      if (sx < 0 || sy < 0 || sx >= patch.cols || sy >= patch.rows) continue;
      const int pr = static_cast<int>(sy);
      const int pc = static_cast<int>(sx);
      if (patch.is_valid(pr, pc)) out.at(r, c) = patch.at(pr, pc);
    }
  }
  return out;
}

RgbImage encode_mask(const ScalarMap& concentration, SourceType type) {
  RgbImage img(concentration.rows, concentration.cols);
  for (int r = 0; r < img.rows; ++r) {
    for (int c = 0; c < img.cols; ++c) {
      if (!concentration.is_valid(r, c) || !(concentration.at(r, c) > 0.0)) continue;
      std::uint8_t* px = img.px(r, c);
      if (type == SourceType::Point) {
        px[0] = 255;
      } else {
        px[2] = 255;
      }
    }
  }
  return img;
}

void composite(RgbImage& dst, const RgbImage& layer) {
  if (dst.rows != layer.rows || dst.cols != layer.cols) {
    fail(ErrorCode::DimensionMismatch, "mask layers differ in size");
  }
  for (int r = 0; r < dst.rows; ++r) {
    for (int c = 0; c < dst.cols; ++c) {
      std::uint8_t* d = dst.px(r, c);
      const std::uint8_t* s = layer.px(r, c);
      if (s[0] == 255) {
        d[0] = 255;
        d[1] = 0;
        d[2] = 0;
      } else if (s[2] == 255 && d[0] != 255) {
        d[2] = 255;
      }
    }
  }
}

Point snap_to_grid(const GeoGrid& grid, const Point& geo) {
  double best = std::numeric_limits<double>::infinity();
  int br = -1, bc = -1;
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const std::size_t i = grid.index(r, c);
      if (!grid.valid[i]) continue;
      const double d = (grid.gx[i] - geo.x) * (grid.gx[i] - geo.x) + (grid.gy[i] - geo.y) * (grid.gy[i] - geo.y);
      if (d < best) {
        best = d;
        br = r;
        bc = c;
      }
    }
  }
  if (br < 0) fail(ErrorCode::DegenerateConfiguration, "geographic grid has no valid pixels");
  return {bc + 0.5, br + 0.5};
}

std::vector<Correspondence> corner_correspondences(const AnnotationPatch& patch, const GeoGrid& grid) {
  const double w = patch.concentration.cols;
  const double h = patch.concentration.rows;
  const std::array<Point, 4> src{Point{0, 0}, Point{w, 0}, Point{w, h}, Point{0, h}};
  std::vector<Correspondence> out;
  for (int i = 0; i < 4; ++i) out.push_back({src[i], snap_to_grid(grid, patch.corners[i])});
  return out;
}

GeoGrid read_geo_grid(const std::filesystem::path& data_path) {
  const io::HyperCube cube = io::HyperCube::open(data_path, io::HeaderKind::Auxiliary);
  if (cube.bands() < 2) fail(ErrorCode::MissingField, "geographic grid needs 2 bands (x, y)");
  GeoGrid g{cube.height(), cube.width(), {}, {}, {}};
  const io::Block b = cube.read_block({0, cube.height()}, {0, cube.width()}, {0, 2});
  const auto n = static_cast<std::size_t>(g.rows) * g.cols;
  g.gx.resize(n);
  g.gy.resize(n);
  g.valid.resize(n);
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      const std::size_t i = g.index(r, c);
      g.gx[i] = b.at(r, c, 0);
      g.gy[i] = b.at(r, c, 1);
      g.valid[i] = b.pixel_valid(r, c) ? 1 : 0;
    }
  }
  return g;
}

void write_geo_grid(const std::filesystem::path& data_path, const GeoGrid& grid) {
  io::CubeMeta meta;
  meta.height = grid.rows;
  meta.width = grid.cols;
  meta.bands = 2;
  meta.wavelengths = {0, 1};
  meta.data_type = io::DataType::Float64;
  io::BilWriter writer(data_path, meta);
  std::vector<double> line(2 * static_cast<std::size_t>(grid.cols));
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const std::size_t i = grid.index(r, c);
      line[c] = grid.valid[i] ? grid.gx[i] : io::kDefaultNoData;
      line[grid.cols + c] = grid.valid[i] ? grid.gy[i] : io::kDefaultNoData;
    }
    writer.write_line(line);
  }
  writer.finish();
}

AnnotationPatch read_patch(const std::filesystem::path& data_path) {
  const auto hdr = io::header_path_for(data_path);
  std::ifstream in(hdr);
  if (!in) fail(ErrorCode::IoFailure, "cannot open header " + hdr.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const io::CubeMeta meta = io::parse_envi_header(ss.str(), io::HeaderKind::Auxiliary);
  AnnotationPatch patch;
  const auto corners = meta.extra.find("corner coordinates");
  if (corners == meta.extra.end()) fail(ErrorCode::MissingField, hdr.string() + ": missing 'corner coordinates'");
  const auto v = parse_numbers(corners->second);
  if (v.size() != 8) fail(ErrorCode::MissingField, hdr.string() + ": 'corner coordinates' needs 8 numbers");
  for (int i = 0; i < 4; ++i) patch.corners[i] = {v[2 * i], v[2 * i + 1]};
  const auto type = meta.extra.find("source type");
  if (type == meta.extra.end()) fail(ErrorCode::MissingField, hdr.string() + ": missing 'source type'");
  patch.type = source_type_from_string(type->second);
  patch.concentration = read_float_map(data_path);
  for (std::size_t i = 0; i < patch.concentration.size(); ++i) {
    if (patch.concentration.valid[i] && patch.concentration.values[i] < 0.0) {
      fail(ErrorCode::InvalidArgument, data_path.string() + ": negative concentration");
    }
  }
  return patch;
}

void write_patch(const std::filesystem::path& data_path, const AnnotationPatch& patch) {
  std::ostringstream corners;
  corners.precision(17);
  corners << '{';
  for (int i = 0; i < 4; ++i) corners << (i ? ", " : "") << patch.corners[i].x << ", " << patch.corners[i].y;
  corners << '}';
  write_float_map(data_path, patch.concentration,
                  {{"corner coordinates", corners.str()}, {"source type", to_string(patch.type)}});
}

}  // namespace mm::annotate
