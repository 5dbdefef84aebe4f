#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mm/annotate.hpp"
#include "mm/detector.hpp"
#include "mm/hsi_io.hpp"
#include "mm/landcover.hpp"
#include "mm/matchloss.hpp"
#include "mm/raster.hpp"
#include "mm/slf.hpp"
#include "mm/synth.hpp"

namespace mm::pipeline {

namespace fs = std::filesystem;

inline constexpr const char* kEnhanceSchema = "mm.enhance/1";
inline constexpr const char* kDetectSchema = "mm.detections/1";
inline constexpr const char* kMetricsSchema = "mm.metrics/1";
inline constexpr const char* kTilesSchema = "mm.tiles/1";
inline constexpr const char* kAnnotateSchema = "mm.annotate/1";
inline constexpr const char* kPlotSchema = "mm.plot/1";

enum class FilterKind { Slf, Traditional };

struct PipelineConfig {
  fs::path cube;
  fs::path header;  // empty: next to the cube
  fs::path glt;     // empty: no sensor grouping
  fs::path signature;  // empty: shipped reference
  fs::path enhancement;  // detect: precomputed map, else computed
  fs::path out_dir = ".";

  FilterKind filter = FilterKind::Slf;
  int sensor_window = slf::kDefaultSensorWindow;
  int column_window = slf::kDefaultColumnWindow;
  double eps_scale = landcover::kDefaultEpsScale;
  std::size_t min_pixels = landcover::kDefaultMinPixels;

  int tile_size = 256;
  int tile_overlap = 128;
  int jobs = 1;

  detector::DetectorConfig detector;
  match::LossWeights loss;
  double iou_threshold = 0.5;
  std::uint64_t seed = 0;

  // Keys as in to_text(); detector keys carry a "detector." prefix.
  void set(const std::string& key, const std::string& value);
  static PipelineConfig from_text(const std::string& text);
  static PipelineConfig from_file(const fs::path& path);
  // Canonical form; out_dir is left out so reruns into other directories
  // hash the same.
  std::string to_text() const;
  std::string hash() const;
};

std::string fnv1a_hex(const std::string& text);

struct EnhanceResult {
  EnhancementMap map;
  landcover::ClassMap classes;
  landcover::ClassStats stats;
  slf::SlfReport report;
  spectra::TargetSignature target;
};

EnhanceResult run_enhance(const PipelineConfig& cfg, const io::HyperCube& cube);
EnhanceResult cmd_enhance(const PipelineConfig& cfg);

struct TileDetections {
  io::TileRect tile;
  detector::Detections detections;
  Eigen::VectorXd score;
  ScalarMap heat;  // tile-sized, max over confident queries
  BinaryMask mask;
};

struct DetectResult {
  std::vector<TileDetections> tiles;
  ScalarMap heat;  // per-pixel max over tiles
  BinaryMask mask;
};

// Tiles must be multiples of 32 and fit inside the image (BadGeometry).
DetectResult run_detect(const PipelineConfig& cfg, const io::HyperCube& cube, const EnhancementMap& enh);
DetectResult cmd_detect(const PipelineConfig& cfg);

// Tile inputs for the detector.
struct TileInputs {
  detector::FeatureMap rgb, swir, enh;
};
TileInputs tile_inputs(const io::HyperCube& cube, const EnhancementMap& enh, const io::TileRect& tile);
io::Range swir_bands(const io::CubeMeta& meta);

struct EvalResult {
  double map_50 = 0.0;
  double miou = 0.0;
  std::map<std::string, double> per_class_ap;
  int n_images = 0;
};

// Ground truth: a colour-coded mask PNG (red point, blue diffused), one
// instance per 8-connected component.
std::vector<match::GtInstance> ground_truth_from_mask(const RgbImage& mask);

// pred_dir holds detections.json + mask.png, gt_dir holds gt_mask.png; or
// both hold equally named subdirectories, one per image.
EvalResult cmd_eval(const fs::path& pred_dir, const fs::path& gt_dir, const fs::path& out_json,
                    double iou_threshold = 0.5, const std::string& config_hash = "");

enum class Ramp { Gray, Heat };

struct PlotResult {
  double vmin = 0.0;
  double vmax = 0.0;
  std::size_t nan_pixels = 0;
};

inline constexpr std::uint8_t kSentinel[3] = {255, 0, 255};

RgbImage render_map(const ScalarMap& map, Ramp ramp, double vmin, double vmax);
// vmin/vmax default to the finite extent of the map.
PlotResult cmd_plot(const fs::path& map_path, const fs::path& png_path, Ramp ramp = Ramp::Gray,
                    std::optional<double> vmin = std::nullopt, std::optional<double> vmax = std::nullopt);

std::vector<io::TileRect> cmd_tile(const fs::path& cube_path, int size, int overlap, const fs::path& out_dir,
                                   bool extract);

struct AnnotateResult {
  RgbImage mask;
  ScalarMap concentration;
  std::vector<annotate::HomographyFit> fits;
};

AnnotateResult cmd_annotate_map(const fs::path& grid_path, const std::vector<fs::path>& patches,
                                const fs::path& out_dir);

synth::Scene cmd_synth(const synth::SynthConfig& cfg, const fs::path& out_dir);

// "<name>.run.json" with a wall-clock timestamp; the only non-reproducible
// output of any command.
void write_run_sidecar(const fs::path& out_dir, const std::string& name, const std::string& config_hash);

}  // namespace mm::pipeline
