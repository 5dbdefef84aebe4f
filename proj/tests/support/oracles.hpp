#pragma once
// Independent reference implementations used by the unit and acceptance
// suites. Deliberately naive: plain loops, no Eigen decompositions.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <vector>

#include "mm/hsi_io.hpp"
#include "mm/landcover.hpp"
#include "mm/matchloss.hpp"

#include <Eigen/Dense>

namespace oracle {

// Gaussian elimination with partial pivoting; a is n x n row-major.
inline std::vector<double> solve(std::vector<double> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::fabs(a[i * n + k]) > std::fabs(a[piv * n + k])) piv = i;
    }
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a[k * n + j], a[piv * n + j]);
      std::swap(b[k], b[piv]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a[i * n + k] / a[k * n + k];
      for (std::size_t j = k; j < n; ++j) a[i * n + j] -= f * a[k * n + j];
      b[i] -= f * b[k];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= a[i * n + j] * x[j];
    x[i] = s / a[i * n + i];
  }
  return x;
}

struct PixelCube {
  int rows = 0, cols = 0, bands = 0;
  std::vector<double> v;  // (r, c, b)
  std::vector<char> ok;   // per pixel

  double at(int r, int c, int b) const { return v[(static_cast<std::size_t>(r) * cols + c) * bands + b]; }
};

inline PixelCube to_pixels(const mm::io::HyperCube& cube) {
  PixelCube p{cube.height(), cube.width(), cube.bands(), {}, {}};
  p.v.resize(static_cast<std::size_t>(p.rows) * p.cols * p.bands);
  p.ok.assign(static_cast<std::size_t>(p.rows) * p.cols, 1);
  for (int r = 0; r < p.rows; ++r) {
    for (int c = 0; c < p.cols; ++c) {
      for (int b = 0; b < p.bands; ++b) {
        const double x = cube.at(r, c, b);
        p.v[(static_cast<std::size_t>(r) * p.cols + c) * p.bands + b] = x;
        if (x == cube.meta().no_data_value || !std::isfinite(x)) p.ok[static_cast<std::size_t>(r) * p.cols + c] = 0;
      }
    }
  }
  return p;
}

// Per-class matched filter written from the defining formulas.
// Returns NaN where the pixel is invalid or unlabeled.
inline std::vector<double> slf_scores(const PixelCube& x, const std::vector<int>& labels, int classes,
                                      const std::vector<double>& t, double eps_scale) {
  const int n = x.bands;
  std::vector<double> out(labels.size(), std::numeric_limits<double>::quiet_NaN());
  for (int k = 0; k < classes; ++k) {
    std::vector<double> mu(n, 0.0);
    std::size_t count = 0;
    for (int r = 0; r < x.rows; ++r) {
      for (int c = 0; c < x.cols; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * x.cols + c;
        if (labels[i] != k || !x.ok[i]) continue;
        ++count;
        for (int b = 0; b < n; ++b) mu[b] += x.at(r, c, b);
      }
    }
    if (count == 0) continue;
    for (double& m : mu) m /= static_cast<double>(count);
    std::vector<double> cov(static_cast<std::size_t>(n) * n, 0.0);
    for (int r = 0; r < x.rows; ++r) {
      for (int c = 0; c < x.cols; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * x.cols + c;
        if (labels[i] != k || !x.ok[i]) continue;
        for (int a = 0; a < n; ++a) {
          for (int b = 0; b < n; ++b) cov[a * n + b] += (x.at(r, c, a) - mu[a]) * (x.at(r, c, b) - mu[b]);
        }
      }
    }
    double trace = 0.0;
    for (int a = 0; a < n; ++a) trace += cov[a * n + a] / static_cast<double>(count);
    for (double& e : cov) e /= static_cast<double>(count);
    const double eps = trace > 0.0 ? eps_scale * trace / n : eps_scale;
    for (int a = 0; a < n; ++a) cov[a * n + a] += eps;
    const std::vector<double> y = solve(cov, t);
    double ty = 0.0;
    for (int a = 0; a < n; ++a) ty += t[a] * y[a];
    const double norm = std::sqrt(ty);
    for (int r = 0; r < x.rows; ++r) {
      for (int c = 0; c < x.cols; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * x.cols + c;
        if (labels[i] != k || !x.ok[i]) continue;
        double s = 0.0;
        for (int a = 0; a < n; ++a) s += (x.at(r, c, a) - mu[a]) * y[a];
        out[i] = s / norm;
      }
    }
  }
  return out;
}

// Exhaustive minimum over injective maps rows -> columns.
inline double brute_force_assignment(const Eigen::MatrixXd& cost) {
  const int g = static_cast<int>(cost.rows());
  const int p = static_cast<int>(cost.cols());
  std::vector<int> cols(p);
  std::iota(cols.begin(), cols.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  // Every permutation of the columns; the first g entries are the map.
  do {
    double s = 0.0;
    for (int i = 0; i < g; ++i) s += cost(i, cols[i]);
    best = std::min(best, s);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

// GIoU by counting cell centres of an n x n grid laid over the enclosing box.
inline double raster_giou(const mm::match::Box& a, const mm::match::Box& b, int n = 2000) {
  const double x0 = std::min(a.x0(), b.x0()), x1 = std::max(a.x1(), b.x1());
  const double y0 = std::min(a.y0(), b.y0()), y1 = std::max(a.y1(), b.y1());
  const double dx = (x1 - x0) / n, dy = (y1 - y0) / n;
  std::vector<char> in_ax(n), in_bx(n);
  for (int j = 0; j < n; ++j) {
    const double x = x0 + (j + 0.5) * dx;
    in_ax[j] = x >= a.x0() && x < a.x1();
    in_bx[j] = x >= b.x0() && x < b.x1();
  }
  std::size_t inter = 0, uni = 0;
  for (int i = 0; i < n; ++i) {
    const double y = y0 + (i + 0.5) * dy;
    const bool ay = y >= a.y0() && y < a.y1();
    const bool by = y >= b.y0() && y < b.y1();
    for (int j = 0; j < n; ++j) {
      const bool ia = ay && in_ax[j];
      const bool ib = by && in_bx[j];
      inter += ia && ib;
      uni += ia || ib;
    }
  }
  const double total = static_cast<double>(n) * n;
  return static_cast<double>(inter) / static_cast<double>(uni) - (total - static_cast<double>(uni)) / total;
}

// Float64 BIL cube in memory from (r, c, b) values.
inline mm::io::HyperCube make_cube(int rows, int cols, int bands, const std::vector<double>& rcb,
                                   std::vector<double> wavelengths = {}) {
  mm::io::CubeMeta meta;
  meta.height = rows;
  meta.width = cols;
  meta.bands = bands;
  meta.data_type = mm::io::DataType::Float64;
  if (wavelengths.empty()) {
    for (int b = 0; b < bands; ++b) wavelengths.push_back(400.0 + 10.0 * b);
  }
  meta.wavelengths = std::move(wavelengths);
  meta.big_endian = std::endian::native == std::endian::big;
  std::vector<std::byte> bytes(meta.data_bytes());
  for (int r = 0; r < rows; ++r) {
    for (int b = 0; b < bands; ++b) {
      for (int c = 0; c < cols; ++c) {
        const double v = rcb[(static_cast<std::size_t>(r) * cols + c) * bands + b];
        std::memcpy(&bytes[((static_cast<std::size_t>(r) * bands + b) * cols + c) * 8], &v, 8);
      }
    }
  }
  return mm::io::HyperCube(meta, std::make_shared<mm::io::MemorySource>(std::move(bytes)));
}

// Class map with the given labels (kUnlabeled allowed) and `classes` labels.
inline mm::landcover::ClassMap make_class_map(int rows, int cols, int classes, const std::vector<int>& labels) {
  mm::landcover::ClassMap cm;
  cm.rows = rows;
  cm.cols = cols;
  cm.classes = classes;
  cm.labels = labels;
  cm.counts.assign(classes, 0);
  for (int l : labels) {
    if (l >= 0) ++cm.counts[l];
  }
  for (int k = 0; k < classes; ++k) {
    cm.order.push_back(k);
    cm.members.push_back({k});
  }
  return cm;
}

}  // namespace oracle
