#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mm/hsi_io.hpp"
#include "mm/raster.hpp"

namespace mm::spectra {

// Gaussian widths for band weighting (nm).
inline constexpr double kRgbSigmaNm = 30.0;
inline constexpr double kIndexSigmaNm = 20.0;

inline constexpr double kBlueNm = 450.0;
inline constexpr double kGreenNm = 550.0;
inline constexpr double kRedNm = 650.0;

// Centres for the normalized-difference indices.
inline constexpr double kIndexRedNm = 660.0;
inline constexpr double kIndexNirNm = 880.0;
inline constexpr double kIndexMirNm = 1240.0;

inline constexpr double kVisibleLoNm = 400.0;
inline constexpr double kVisibleHiNm = 700.0;
inline constexpr double kSwirLoNm = 2000.0;
inline constexpr double kSwirHiNm = 2500.0;

// Contiguous band interval [lo_index, hi_index] (inclusive) whose wavelengths
// fall inside [lo_nm, hi_nm].
struct BandRange {
  int lo_index = 0;
  int hi_index = -1;
  double lo_nm = 0.0;
  double hi_nm = 0.0;

  int count() const { return hi_index - lo_index + 1; }
  io::Range range() const { return {lo_index, hi_index + 1}; }
};

BandRange select_bands(const io::CubeMeta& meta, double lo_nm, double hi_nm);

// Normalised Gaussian weights over `bands`, centred at `center_nm`.
struct BandWeights {
  io::Range bands;
  std::vector<double> weights;  // sums to 1
};

BandWeights gaussian_weights(std::span<const double> wavelengths, io::Range bands, double center_nm, double sigma_nm);

// Weighted mean over the bands within +-3 sigma of `center_nm`.
ScalarMap band_average(const io::HyperCube& cube, double center_nm, double sigma_nm);

// 3-channel (R, G, B) composite from the 400-700 nm bands.
Image compose_rgb(const io::HyperCube& cube);

// (a - b) / (a + b); invalid where either input is invalid or a + b <= 0.
IndexMap normalized_difference(const ScalarMap& a, const ScalarMap& b);

IndexMap ndvi(const io::HyperCube& cube);
IndexMap ndwi(const io::HyperCube& cube);

struct Indices {
  IndexMap ndvi;
  IndexMap ndwi;
};
// Both indices, sharing the NIR average.
Indices compute_indices(const io::HyperCube& cube);

// Change in radiance per unit CH4 mixing-ratio length, on a cube's grid.
struct TargetSignature {
  std::vector<double> values;
  std::vector<double> wavelengths;
  std::string provenance;

  int size() const { return static_cast<int>(values.size()); }
};

struct SignatureTable {
  std::vector<double> wavelengths;  // sorted ascending
  std::vector<double> coefficients;
  std::string provenance;
};

// Two-column "wavelength_nm coefficient" table; '#' comments; a comment of the
// form "# provenance: ..." is retained.
SignatureTable parse_signature_table(std::string_view text);

// Linear interpolation onto `grid`; zero outside the table's support.
TargetSignature resample(const SignatureTable& table, std::span<const double> grid);

TargetSignature load_target_signature(std::string_view text, std::span<const double> grid);
TargetSignature load_target_signature_file(const std::filesystem::path& path, std::span<const double> grid);

// Fraction of sum |t| carried by bands with wavelength in [lo_nm, hi_nm].
double energy_fraction(const TargetSignature& t, double lo_nm, double hi_nm);

// Shipped reference signature (data/ch4_signature.txt).
std::filesystem::path reference_signature_path();

}  // namespace mm::spectra
