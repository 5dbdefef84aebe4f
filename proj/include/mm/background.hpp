#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <vector>

#include "mm/hsi_io.hpp"

namespace mm {

// Gaussian background model of a pixel population: sample mean, 1/N
// covariance, and a Cholesky factor of the ridge-regularized covariance
// (Cov + eps I), eps = eps_scale * trace(Cov) / dims.
struct BackgroundModel {
  std::size_t count = 0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  double eps = 0.0;
  Eigen::LLT<Eigen::MatrixXd> factor;

  int dims() const { return static_cast<int>(mean.size()); }
  bool empty() const { return count == 0; }
  // (Cov + eps I)^-1 y
  Eigen::VectorXd solve(const Eigen::VectorXd& y) const { return factor.solve(y); }
  // Explicit inverse; diagnostics and serialization only.
  Eigen::MatrixXd regularized_inverse() const;
};

// Ridge size for a covariance. Falls back to eps_scale itself when the
// covariance is identically zero.
double ridge(const Eigen::MatrixXd& cov, double eps_scale);

// Throws NotPositiveDefinite if Cov + eps I has no Cholesky factor.
BackgroundModel make_model(std::size_t count, Eigen::VectorXd mean, Eigen::MatrixXd cov, double eps_scale);

// Two-pass mean/covariance for pixels partitioned into `cells`. `cell_of`
// returns a cell id in [0, cells) or -1 to skip; invalid pixels are always
// skipped. Cells with fewer than `min_count` samples come back with count set
// and no model (empty mean). Pixels are visited in raster order, so results
// are reproducible bit for bit.
std::vector<BackgroundModel> accumulate_models(const io::HyperCube& cube, const std::function<int(int, int)>& cell_of,
                                               int cells, double eps_scale, std::size_t min_count = 2);

// Linear CH4 detector built from a background model:
//   score(x) = (x - mu)^T (Cov + eps I)^-1 t / sqrt(t^T (Cov + eps I)^-1 t)
struct MatchedFilter {
  Eigen::VectorXd mean;
  Eigen::VectorXd weights;

  double score(const double* pixel) const;
};

MatchedFilter make_filter(const BackgroundModel& model, const Eigen::VectorXd& target);

}  // namespace mm
