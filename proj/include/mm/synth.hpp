#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "mm/hsi_io.hpp"
#include "mm/matchloss.hpp"
#include "mm/raster.hpp"
#include "mm/spectra.hpp"

namespace mm::synth {

enum class Terrain { Soil = 0, Vegetation = 1, Water = 2 };

enum class Layout {
  TwoTerrainRows,  // soil above, vegetation below
  Patchwork,       // soil / vegetation / water blocks
};

struct PlumeSpec {
  double row = 0.0;
  double col = 0.0;
  double sigma = 6.0;  // pixels
  double amplitude = 1.0;
  match::PlumeClass cls = match::PlumeClass::PointSource;
};

struct SynthConfig {
  int rows = 128;
  int cols = 128;
  int bands = 432;
  double wl_lo = 380.0;
  double wl_hi = 2510.0;
  std::uint64_t seed = 7;
  Layout layout = Layout::TwoTerrainRows;
  std::vector<PlumeSpec> plumes;
  double noise = 1.0;       // global noise multiplier
  double soil_noise = 2.0;  // soil noise relative to vegetation
  double mask_fraction = 0.25;  // ground truth = alpha >= fraction * amplitude
  int patch = 32;               // block size for Patchwork
  io::DataType data_type = io::DataType::Float32;

  // Two terrains with one vegetation-hosted plume.
  static SynthConfig two_terrain();
};

struct SceneTruth {
  match::Box box;
  match::PlumeClass cls = match::PlumeClass::PointSource;
  BinaryMask mask;
};

struct Scene {
  io::CubeMeta meta;
  std::shared_ptr<const io::MemorySource> bytes;
  std::vector<Terrain> terrain;  // per pixel
  ScalarMap alpha;               // injected plume amplitude per pixel
  std::vector<SceneTruth> truth;
  io::GltMap glt;
  spectra::TargetSignature target;

  io::HyperCube cube() const { return io::HyperCube(meta, bytes); }
  BinaryMask plume_mask() const;
};

std::vector<double> wavelength_grid(int bands, double lo, double hi);
// Top-of-atmosphere-like radiance of a terrain type at each wavelength.
std::vector<double> terrain_radiance(Terrain t, const std::vector<double>& wl);

Scene generate(const SynthConfig& cfg);
Scene generate(const SynthConfig& cfg, const spectra::TargetSignature& target);

// cube.img/.hdr, glt.img/.hdr, alpha.img/.hdr, gt_mask.png, truth.json.
void write_scene(const Scene& scene, const std::filesystem::path& dir, std::uint64_t seed);

}  // namespace mm::synth
