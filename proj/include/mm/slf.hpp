#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "mm/hsi_io.hpp"
#include "mm/landcover.hpp"
#include "mm/raster.hpp"
#include "mm/spectra.hpp"

namespace mm::slf {

inline constexpr int kSensorCount = 598;
inline constexpr int kDefaultSensorWindow = 11;
inline constexpr int kDefaultColumnWindow = 11;

// Push-broom sensor windows: group = floor((orig_col - 1) / window), -1 where
// the GLT is unmapped.
struct SensorGrouping {
  int rows = 0;
  int cols = 0;
  int window = 0;
  int groups = 0;
  std::vector<int> group;

  int group_at(int r, int c) const { return group[static_cast<std::size_t>(r) * cols + c]; }
};

SensorGrouping sensor_groups(const io::GltMap& glt, int window = kDefaultSensorWindow);

// Single background model per block of `column_window` adjacent columns.
EnhancementMap matched_filter_traditional(const io::HyperCube& cube, const spectra::TargetSignature& t,
                                          int column_window = kDefaultColumnWindow,
                                          double eps_scale = landcover::kDefaultEpsScale);

struct SlfReport {
  int cells_with_own_stats = 0;  // (class, sensor window) cells scored with their own model
  int cells_fallback = 0;        // non-empty cells that fell back to class statistics
  std::size_t min_cell_samples = 0;
};

// Minimum samples for a (class, sensor window) cell to get its own model:
// max(2 * bands, 1000).
std::size_t min_cell_samples(int bands);

// Per-class matched filter. With `grouping`, each (class, sensor window) cell
// large enough gets its own model; undersized cells and unmapped pixels use
// the class model from `stats`.
EnhancementMap slf_enhance(const io::HyperCube& cube, const landcover::ClassMap& cm, const landcover::ClassStats& stats,
                           const spectra::TargetSignature& t, const SensorGrouping* grouping = nullptr,
                           SlfReport* report = nullptr);

// Methane-to-ground-terrain ratio |a^T t|^2 / (a^T Cov a).
double mgr(const Eigen::VectorXd& alpha, const Eigen::VectorXd& t, const Eigen::MatrixXd& cov);

// MGR-maximising filter Cov^-1 t / sqrt(t^T Cov^-1 t).
Eigen::VectorXd optimal_filter(const Eigen::VectorXd& t, const Eigen::MatrixXd& cov);

Eigen::VectorXd to_eigen(const spectra::TargetSignature& t);

}  // namespace mm::slf
