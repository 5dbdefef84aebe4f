#include "mm/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mm/error.hpp"

namespace mm::spectra {

BandRange select_bands(const io::CubeMeta& meta, double lo_nm, double hi_nm) {
  const auto& wl = meta.wavelengths;
  const auto first = std::lower_bound(wl.begin(), wl.end(), lo_nm);
  const auto last = std::upper_bound(wl.begin(), wl.end(), hi_nm);
  if (!(lo_nm <= hi_nm) || first >= last) {
    std::ostringstream os;
    os << "no bands in [" << lo_nm << ", " << hi_nm << "] nm";
    fail(ErrorCode::EmptySelection, os.str());
  }
  BandRange out;
  out.lo_index = static_cast<int>(first - wl.begin());
  out.hi_index = static_cast<int>(last - wl.begin()) - 1;
  out.lo_nm = lo_nm;
  out.hi_nm = hi_nm;
  return out;
}

BandWeights gaussian_weights(std::span<const double> wavelengths, io::Range bands, double center_nm,
                             double sigma_nm) {
  BandWeights bw;
  bw.bands = bands;
  bw.weights.resize(static_cast<std::size_t>(bands.size()));
  double total = 0.0;
  for (int b = bands.begin; b < bands.end; ++b) {
    const double z = (wavelengths[b] - center_nm) / sigma_nm;
    const double w = std::exp(-0.5 * z * z);
    bw.weights[b - bands.begin] = w;
    total += w;
  }
  if (!(total > 0.0)) fail(ErrorCode::EmptySelection, "Gaussian weights vanish over the band window");
  for (double& w : bw.weights) w /= total;
  return bw;
}

namespace {

// Applies each weight set to every pixel, streaming one line at a time.
Image weighted_composite(const io::HyperCube& cube, const std::vector<BandWeights>& sets) {
  int lo = cube.bands(), hi = 0;
  for (const auto& s : sets) {
    lo = std::min(lo, s.bands.begin);
    hi = std::max(hi, s.bands.end);
  }
  const int channels = static_cast<int>(sets.size());
  Image out(cube.height(), cube.width(), channels);
  for (int r = 0; r < cube.height(); ++r) {
    const io::Block line = cube.read_block({r, r + 1}, {0, cube.width()}, {lo, hi});
    for (int c = 0; c < cube.width(); ++c) {
      bool ok = true;
      for (int k = 0; k < channels; ++k) {
        const auto& s = sets[k];
        double acc = 0.0, mass = 0.0;
        for (int b = s.bands.begin; b < s.bands.end; ++b) {
          if (!line.entry_valid(0, c, b - lo)) ok = false;
          acc += s.weights[b - s.bands.begin] * line.at(0, c, b - lo);
          mass += s.weights[b - s.bands.begin];
        }
        // Dividing by the summed weights keeps a flat spectrum exact.
        out.at(r, c, k) = acc / mass;
      }
      out.valid[out.pixel(r, c)] = ok ? 1 : 0;
    }
  }
  return out;
}

io::Range window_around(const io::CubeMeta& meta, double center_nm, double sigma_nm) {
  return select_bands(meta, center_nm - 3.0 * sigma_nm, center_nm + 3.0 * sigma_nm).range();
}

ScalarMap channel(const Image& img, int k) {
  ScalarMap m(img.rows, img.cols);
  for (int r = 0; r < img.rows; ++r) {
    for (int c = 0; c < img.cols; ++c) m.at(r, c) = img.at(r, c, k);
  }
  m.valid = img.valid;
  return m;
}

}  // namespace

ScalarMap band_average(const io::HyperCube& cube, double center_nm, double sigma_nm) {
  const io::Range bands = window_around(cube.meta(), center_nm, sigma_nm);
  const Image img = weighted_composite(cube, {gaussian_weights(cube.meta().wavelengths, bands, center_nm, sigma_nm)});
  return channel(img, 0);
}

Image compose_rgb(const io::HyperCube& cube) {
  const io::Range visible = select_bands(cube.meta(), kVisibleLoNm, kVisibleHiNm).range();
  const auto& wl = cube.meta().wavelengths;
  return weighted_composite(cube, {gaussian_weights(wl, visible, kRedNm, kRgbSigmaNm),
                                   gaussian_weights(wl, visible, kGreenNm, kRgbSigmaNm),
                                   gaussian_weights(wl, visible, kBlueNm, kRgbSigmaNm)});
}

IndexMap normalized_difference(const ScalarMap& a, const ScalarMap& b) {
  if (a.rows != b.rows || a.cols != b.cols) fail(ErrorCode::DimensionMismatch, "index inputs differ in size");
  IndexMap out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double sum = a.values[i] + b.values[i];
    const bool ok = a.valid[i] && b.valid[i] && sum > 0.0;
    out.values[i] = ok ? (a.values[i] - b.values[i]) / sum : 0.0;
    out.valid[i] = ok ? 1 : 0;
  }
  return out;
}

Indices compute_indices(const io::HyperCube& cube) {
  const auto& meta = cube.meta();
  const io::Range red = window_around(meta, kIndexRedNm, kIndexSigmaNm);
  const io::Range nir = window_around(meta, kIndexNirNm, kIndexSigmaNm);
  const io::Range mir = window_around(meta, kIndexMirNm, kIndexSigmaNm);
  const Image img = weighted_composite(cube, {gaussian_weights(meta.wavelengths, nir, kIndexNirNm, kIndexSigmaNm),
                                              gaussian_weights(meta.wavelengths, red, kIndexRedNm, kIndexSigmaNm),
                                              gaussian_weights(meta.wavelengths, mir, kIndexMirNm, kIndexSigmaNm)});
  const ScalarMap n = channel(img, 0);
  return {normalized_difference(n, channel(img, 1)), normalized_difference(n, channel(img, 2))};
}

IndexMap ndvi(const io::HyperCube& cube) {
  return normalized_difference(band_average(cube, kIndexNirNm, kIndexSigmaNm),
                               band_average(cube, kIndexRedNm, kIndexSigmaNm));
}

IndexMap ndwi(const io::HyperCube& cube) {
  return normalized_difference(band_average(cube, kIndexNirNm, kIndexSigmaNm),
                               band_average(cube, kIndexMirNm, kIndexSigmaNm));
}

SignatureTable parse_signature_table(std::string_view text) {
  SignatureTable table;
  std::vector<std::pair<double, double>> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    if (line[first] == '#') {
      const std::string body = line.substr(first + 1);
      const auto key = body.find("provenance:");
      if (key != std::string::npos) {
        std::string v = body.substr(key + 11);
        v.erase(0, v.find_first_not_of(" \t"));
        while (!v.empty() && (v.back() == '\r' || v.back() == ' ')) v.pop_back();
        table.provenance = v;
      }
      continue;
    }
    std::istringstream ls(line);
    double wl = 0.0, coef = 0.0;
    std::string rest;
    if (!(ls >> wl >> coef) || (ls >> rest) || !std::isfinite(wl) || !std::isfinite(coef)) {
      fail(ErrorCode::MalformedTable, "line " + std::to_string(lineno) + ": expected 'wavelength_nm coefficient'");
    }
    rows.emplace_back(wl, coef);
  }
  if (rows.size() < 2) fail(ErrorCode::MalformedTable, "signature table needs at least two rows");
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].first == rows[i - 1].first) fail(ErrorCode::MalformedTable, "duplicate wavelength in table");
  }
  for (const auto& [wl, coef] : rows) {
    table.wavelengths.push_back(wl);
    table.coefficients.push_back(coef);
  }
  return table;
}

TargetSignature resample(const SignatureTable& table, std::span<const double> grid) {
  TargetSignature t;
  t.wavelengths.assign(grid.begin(), grid.end());
  t.values.assign(grid.size(), 0.0);
  t.provenance = table.provenance;
  const auto& x = table.wavelengths;
  const auto& y = table.coefficients;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double g = grid[i];
    if (g < x.front() || g > x.back()) continue;
    auto hi = std::lower_bound(x.begin(), x.end(), g);
    const std::size_t j = static_cast<std::size_t>(hi - x.begin());
    if (x[j] == g) {
      t.values[i] = y[j];
      continue;
    }
    const double f = (g - x[j - 1]) / (x[j] - x[j - 1]);
    t.values[i] = y[j - 1] + f * (y[j] - y[j - 1]);
  }
  if (std::all_of(t.values.begin(), t.values.end(), [](double v) { return v == 0.0; })) {
    fail(ErrorCode::AllZeroSignature, "signature is zero on the target wavelength grid");
  }
  return t;
}

TargetSignature load_target_signature(std::string_view text, std::span<const double> grid) {
  return resample(parse_signature_table(text), grid);
}

TargetSignature load_target_signature_file(const std::filesystem::path& path, std::span<const double> grid) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoFailure, "cannot read signature " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return load_target_signature(ss.str(), grid);
}

double energy_fraction(const TargetSignature& t, double lo_nm, double hi_nm) {
  double inside = 0.0, total = 0.0;
  for (int i = 0; i < t.size(); ++i) {
    const double a = std::fabs(t.values[i]);
    total += a;
    if (t.wavelengths[i] >= lo_nm && t.wavelengths[i] <= hi_nm) inside += a;
  }
  return total > 0.0 ? inside / total : 0.0;
}

std::filesystem::path reference_signature_path() { return std::filesystem::path(MM_DATA_DIR) / "ch4_signature.txt"; }

}  // namespace mm::spectra
