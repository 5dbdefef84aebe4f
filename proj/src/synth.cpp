#include "mm/synth.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include "json.hpp"
#include <numbers>
#include <random>

#include "mm/annotate.hpp"
#include "mm/error.hpp"
#include "mm/image_io.hpp"

namespace mm::synth {

namespace {

double gauss(double x, double mu, double sigma) { return std::exp(-0.5 * (x - mu) * (x - mu) / (sigma * sigma)); }

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double reflectance(Terrain t, double nm) {
  // Liquid-water and atmospheric dips shared by land surfaces.
  const double dips = 1.0 - 0.5 * gauss(nm, 1400, 40) - 0.6 * gauss(nm, 1900, 50) - 0.2 * gauss(nm, 970, 25);
  switch (t) {
    case Terrain::Soil:
      return (0.05 + 0.28 * std::min(1.0, (nm - 380.0) / 800.0) - 0.04 * gauss(nm, 2200, 40)) * dips;
    case Terrain::Vegetation:
      return (0.035 + 0.03 * gauss(nm, 550, 35) + 0.42 * logistic((nm - 725.0) / 18.0) -
              0.12 * logistic((nm - 1300.0) / 40.0) - 0.08 * logistic((nm - 1800.0) / 60.0)) *
             dips;
    case Terrain::Water:
      return 0.07 * std::exp(-(nm - 400.0) / 180.0) + 0.004;
  }
  return 0.0;
}

double solar(double nm) { return 0.25 + std::exp(-((nm - 550.0) / 750.0) * ((nm - 550.0) / 750.0)); }

struct NoiseModel {
  std::vector<std::vector<double>> factors;  // rank-r spectral shapes
  std::vector<double> diag;
  double illumination = 0.0;
};

NoiseModel noise_model(Terrain t, const std::vector<double>& wl, const std::vector<double>& mu, double scale) {
  NoiseModel m;
  const std::size_t n = wl.size();
  m.illumination = 0.02;
  std::vector<double> f1(n), f2(n), f3(n);
  for (std::size_t b = 0; b < n; ++b) {
    const double x = (wl[b] - 380.0) / 2130.0;
    f1[b] = scale * 0.6 * std::sin(2.0 * std::numbers::pi * (x + 0.1 * static_cast<int>(t)));
    f2[b] = scale * 0.5 * gauss(wl[b], 2250.0, 180.0);
    f3[b] = scale * 0.3 * std::cos(3.0 * std::numbers::pi * x);
    m.diag.push_back(scale * (0.08 + 0.02 * mu[b] / 10.0));
  }
  m.factors = {f1, f2, f3};
  return m;
}

Terrain terrain_at(const SynthConfig& cfg, int r, int c) {
  if (cfg.layout == Layout::TwoTerrainRows) return r < cfg.rows / 2 ? Terrain::Soil : Terrain::Vegetation;
  const int k = (r / cfg.patch + 2 * (c / cfg.patch)) % 3;
  return static_cast<Terrain>(k);
}

void put_sample(std::byte* dst, io::DataType type, double v) {
  switch (type) {
    case io::DataType::Int16: {
      const auto x = static_cast<std::int16_t>(std::lround(v));
      std::memcpy(dst, &x, sizeof x);
      break;
    }
    case io::DataType::Int32: {
      const auto x = static_cast<std::int32_t>(std::lround(v));
      std::memcpy(dst, &x, sizeof x);
      break;
    }
    case io::DataType::Float32: {
      const auto x = static_cast<float>(v);
      std::memcpy(dst, &x, sizeof x);
      break;
    }
    case io::DataType::Float64:
      std::memcpy(dst, &v, sizeof v);
      break;
  }
}

}  // namespace

SynthConfig SynthConfig::two_terrain() {
  SynthConfig cfg;
  cfg.plumes.push_back({cfg.rows * 0.75, cfg.cols * 0.5, 7.0, 0.1, match::PlumeClass::PointSource});
  return cfg;
}

std::vector<double> wavelength_grid(int bands, double lo, double hi) {
  std::vector<double> wl(static_cast<std::size_t>(bands));
  for (int b = 0; b < bands; ++b) wl[b] = bands == 1 ? lo : lo + (hi - lo) * b / (bands - 1);
  return wl;
}

std::vector<double> terrain_radiance(Terrain t, const std::vector<double>& wl) {
  std::vector<double> out;
  out.reserve(wl.size());
  for (double nm : wl) out.push_back(100.0 * reflectance(t, nm) * solar(nm));
  return out;
}

BinaryMask Scene::plume_mask() const {
  BinaryMask m(meta.height, meta.width);
  for (const auto& t : truth) {
    for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] |= t.mask.bits[i];
  }
  return m;
}

Scene generate(const SynthConfig& cfg) {
  const auto wl = wavelength_grid(cfg.bands, cfg.wl_lo, cfg.wl_hi);
  return generate(cfg, spectra::load_target_signature_file(spectra::reference_signature_path(), wl));
}

Scene generate(const SynthConfig& cfg, const spectra::TargetSignature& target) {
  if (cfg.rows <= 0 || cfg.cols <= 0 || cfg.bands <= 0) fail(ErrorCode::InvalidArgument, "synthetic cube must be non-empty");
  if (target.size() != cfg.bands) fail(ErrorCode::DimensionMismatch, "target signature length differs from band count");
  Scene s;
  s.meta.height = cfg.rows;
  s.meta.width = cfg.cols;
  s.meta.bands = cfg.bands;
  s.meta.wavelengths = wavelength_grid(cfg.bands, cfg.wl_lo, cfg.wl_hi);
  s.meta.data_type = cfg.data_type;
  s.meta.extra["description"] = "{synthetic scene}";
  s.meta.validate();
  s.target = target;
  const auto& wl = s.meta.wavelengths;

  const Terrain kinds[] = {Terrain::Soil, Terrain::Vegetation, Terrain::Water};
  std::vector<std::vector<double>> mu;
  std::vector<NoiseModel> noise;
  for (Terrain t : kinds) {
    mu.push_back(terrain_radiance(t, wl));
    const double scale = cfg.noise * (t == Terrain::Soil ? cfg.soil_noise : 1.0);
    noise.push_back(noise_model(t, wl, mu.back(), scale));
  }

  s.alpha = ScalarMap(cfg.rows, cfg.cols, 0.0);
  std::fill(s.alpha.valid.begin(), s.alpha.valid.end(), 1);
  for (const auto& p : cfg.plumes) {
    SceneTruth truth{{}, p.cls, BinaryMask(cfg.rows, cfg.cols)};
    int r0 = cfg.rows, r1 = -1, c0 = cfg.cols, c1 = -1;
    for (int r = 0; r < cfg.rows; ++r) {
      for (int c = 0; c < cfg.cols; ++c) {
        const double d2 = ((r + 0.5 - p.row) * (r + 0.5 - p.row) + (c + 0.5 - p.col) * (c + 0.5 - p.col));
        const double a = p.amplitude * std::exp(-0.5 * d2 / (p.sigma * p.sigma));
        s.alpha.at(r, c) += a;
        if (a >= cfg.mask_fraction * p.amplitude) {
          truth.mask.at(r, c) = 1;
          r0 = std::min(r0, r);
          r1 = std::max(r1, r);
          c0 = std::min(c0, c);
          c1 = std::max(c1, c);
        }
      }
    }
    if (r1 < 0) continue;
    truth.box = {(c0 + c1 + 1) * 0.5 / cfg.cols, (r0 + r1 + 1) * 0.5 / cfg.rows,
                 static_cast<double>(c1 - c0 + 1) / cfg.cols, static_cast<double>(r1 - r0 + 1) / cfg.rows};
    s.truth.push_back(std::move(truth));
  }

  s.glt.rows = cfg.rows;
  s.glt.cols = cfg.cols;
  s.terrain.resize(static_cast<std::size_t>(cfg.rows) * cfg.cols);
  for (int r = 0; r < cfg.rows; ++r) {
    for (int c = 0; c < cfg.cols; ++c) {
      s.glt.orig_col.push_back(c + 1);
      s.glt.orig_row.push_back(r + 1);
      s.terrain[static_cast<std::size_t>(r) * cfg.cols + c] = terrain_at(cfg, r, c);
    }
  }

  const std::size_t sz = io::sample_size(cfg.data_type);
  std::vector<std::byte> data(s.meta.data_bytes());
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> px(static_cast<std::size_t>(cfg.bands));
  for (int r = 0; r < cfg.rows; ++r) {
    for (int c = 0; c < cfg.cols; ++c) {
      const auto k = static_cast<std::size_t>(s.terrain[static_cast<std::size_t>(r) * cfg.cols + c]);
      const NoiseModel& nm = noise[k];
      const double g = 1.0 + nm.illumination * z(rng);
      for (int b = 0; b < cfg.bands; ++b) px[b] = mu[k][b] * g;
      for (const auto& f : nm.factors) {
        const double w = z(rng);
        for (int b = 0; b < cfg.bands; ++b) px[b] += w * f[b];
      }
      const double a = s.alpha.at(r, c);
      for (int b = 0; b < cfg.bands; ++b) {
        px[b] += nm.diag[b] * z(rng) + a * target.values[b];
        const std::size_t off = ((static_cast<std::size_t>(r) * cfg.bands + b) * cfg.cols + c) * sz;
        put_sample(&data[off], cfg.data_type, px[b]);
      }
    }
  }
  if (std::endian::native == std::endian::big) s.meta.big_endian = true;
  s.bytes = std::make_shared<const io::MemorySource>(std::move(data));
  return s;
}

void write_scene(const Scene& scene, const std::filesystem::path& dir, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  const io::HyperCube cube = scene.cube();
  {
    io::BilWriter writer(dir / "cube.img", scene.meta);
    const int w = scene.meta.width;
    std::vector<double> line(static_cast<std::size_t>(scene.meta.bands) * w);
    for (int r = 0; r < scene.meta.height; ++r) {
      const io::Block b = cube.read_rows({r, r + 1});
      for (int band = 0; band < scene.meta.bands; ++band) {
        for (int c = 0; c < w; ++c) line[static_cast<std::size_t>(band) * w + c] = b.at(0, c, band);
      }
      writer.write_line(line);
    }
    writer.finish();
  }
  io::write_glt(dir / "glt.img", scene.glt);
  write_float_map(dir / "alpha.img", scene.alpha, {{"seed", std::to_string(seed)}});

  RgbImage mask(scene.meta.height, scene.meta.width);
  nlohmann::ordered_json truth;
  truth["schema"] = "mm.truth/1";
  truth["seed"] = seed;
  truth["rows"] = scene.meta.height;
  truth["cols"] = scene.meta.width;
  truth["instances"] = nlohmann::ordered_json::array();
  for (const auto& t : scene.truth) {
    ScalarMap layer(t.mask.rows, t.mask.cols, 0.0);
    std::fill(layer.valid.begin(), layer.valid.end(), 1);
    for (std::size_t i = 0; i < layer.size(); ++i) layer.values[i] = t.mask.bits[i];
    const auto type = t.cls == match::PlumeClass::PointSource ? annotate::SourceType::Point
                                                              : annotate::SourceType::Diffused;
    annotate::composite(mask, annotate::encode_mask(layer, type));
    truth["instances"].push_back({{"class", match::to_string(t.cls)},
                                  {"box", {t.box.cx, t.box.cy, t.box.w, t.box.h}},
                                  {"pixels", t.mask.count()}});
  }
  write_png_rgb(dir / "gt_mask.png", mask);
  std::ofstream(dir / "truth.json") << truth.dump(2) << '\n';
}

}  // namespace mm::synth
