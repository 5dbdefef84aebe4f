#pragma once

#include <Eigen/Dense>
#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "mm/raster.hpp"

namespace mm::annotate {

struct Point {
  double x = 0.0;  // column axis
  double y = 0.0;  // row axis
};

struct Correspondence {
  Point src;
  Point dst;
};

// Projective map in pixel-corner coordinates: pixel (r, c) covers
// [c, c+1) x [r, r+1). Stored with m(2, 2) = 1.
class Homography {
 public:
  Homography() : m_(Eigen::Matrix3d::Identity()) {}
  explicit Homography(const Eigen::Matrix3d& m);

  static Homography translation(double dx, double dy);
  static Homography scale(double sx, double sy);

  const Eigen::Matrix3d& matrix() const { return m_; }
  double det() const { return m_.determinant(); }
  bool invertible() const;
  Homography inverse() const;
  // Returns false when the point maps to (or behind) the line at infinity.
  bool apply(const Point& p, Point& out) const;
  Point apply(const Point& p) const;

 private:
  Eigen::Matrix3d m_;
};

struct HomographyFit {
  Homography h;
  double rms = 0.0;
};

// Normalised DLT over >= 4 pairs.
HomographyFit estimate_homography(const std::vector<Correspondence>& pairs);

enum class SourceType { Point, Diffused };

std::string to_string(SourceType t);
SourceType source_type_from_string(const std::string& s);

// Geographic corners in the flightline's coordinate reference, ordered
// upper-left, upper-right, lower-right, lower-left of the patch raster.
struct AnnotationPatch {
  ScalarMap concentration;
  std::array<Point, 4> corners;
  SourceType type = SourceType::Point;
};

// Nearest-neighbour inverse warp onto a rows x cols grid; 0 outside the
// warped footprint.
ScalarMap warp_mask(const ScalarMap& patch, const Homography& h, int rows, int cols);

RgbImage encode_mask(const ScalarMap& concentration, SourceType type);
// Point-source red takes precedence over diffused blue.
void composite(RgbImage& dst, const RgbImage& layer);

// Geographic coordinate of every flightline pixel centre.
struct GeoGrid {
  int rows = 0;
  int cols = 0;
  std::vector<double> gx;
  std::vector<double> gy;
  std::vector<std::uint8_t> valid;

  std::size_t index(int r, int c) const { return static_cast<std::size_t>(r) * cols + c; }
};

// Flightline pixel whose centre is geographically closest; returns its
// centre in pixel coordinates.
Point snap_to_grid(const GeoGrid& grid, const Point& geo);
std::vector<Correspondence> corner_correspondences(const AnnotationPatch& patch, const GeoGrid& grid);

// Two-band raster (x, y).
GeoGrid read_geo_grid(const std::filesystem::path& data_path);
void write_geo_grid(const std::filesystem::path& data_path, const GeoGrid& grid);

// Float map whose header carries "corner coordinates" (8 numbers) and
// "source type".
AnnotationPatch read_patch(const std::filesystem::path& data_path);
void write_patch(const std::filesystem::path& data_path, const AnnotationPatch& patch);

}  // namespace mm::annotate
