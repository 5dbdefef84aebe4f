#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "mm/background.hpp"
#include "mm/hsi_io.hpp"
#include "mm/raster.hpp"

namespace mm::landcover {

inline constexpr int kNdviBins = 20;
inline constexpr int kWaterClass = kNdviBins;  // label of the NDWI override class
inline constexpr double kWaterNdwi = 0.3;
inline constexpr std::size_t kDefaultMinPixels = 10000;
inline constexpr double kDefaultEpsScale = 1e-6;
inline constexpr int kUnlabeled = -1;

// Per-pixel land-cover labels in [0, classes), kUnlabeled for invalid pixels.
// `order` lists labels in adjacency order (neighbouring entries may merge);
// `members` records which original bins each label absorbed.
struct ClassMap {
  int rows = 0;
  int cols = 0;
  int classes = 0;
  std::vector<int> labels;
  std::vector<std::size_t> counts;
  std::vector<int> order;
  std::vector<std::vector<int>> members;

  int label_at(int r, int c) const { return labels[static_cast<std::size_t>(r) * cols + c]; }
  std::size_t labeled() const;
};

// floor((ndvi + 1) / 0.1) clamped to [0, 19].
int ndvi_bin(double ndvi);

// NDVI bins 0..19 plus a water class (label 20) for pixels with
// ndwi > water_threshold. Adjacency order: water, bin 0, ..., bin 19.
ClassMap classify(const IndexMap& ndvi, const IndexMap& ndwi, double water_threshold = kWaterNdwi);

// Repeatedly folds the smallest class below `min_pixels` into its adjacent
// class with fewer pixels, until every class meets the floor or one class
// remains. Output labels are dense and numbered in adjacency order.
ClassMap merge_small_classes(const ClassMap& cm, std::size_t min_pixels);

struct ClassStats {
  double eps_scale = kDefaultEpsScale;
  std::vector<BackgroundModel> classes;

  int size() const { return static_cast<int>(classes.size()); }
  int dims() const { return classes.empty() ? 0 : classes.front().dims(); }
};

// Mean and 1/N covariance for every class; DegenerateClass if any class has
// fewer than two valid pixels.
ClassStats class_stats(const io::HyperCube& cube, const ClassMap& cm, double eps_scale = kDefaultEpsScale);

// Binary sidecar: "MMCS" magic, format version, then per-class count, ridge,
// mean and covariance (little-endian doubles).
inline constexpr std::uint32_t kStatsFormatVersion = 1;
void save_class_stats(const std::filesystem::path& path, const ClassStats& stats);
ClassStats load_class_stats(const std::filesystem::path& path);

// Gray-level label image (label + 1, 0 = unlabeled) for inspection.
void write_class_png(const std::filesystem::path& path, const ClassMap& cm);

}  // namespace mm::landcover
