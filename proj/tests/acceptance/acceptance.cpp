// Acceptance gate: one line per criterion, non-zero exit if any fails.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "../support/oracles.hpp"
#include "json.hpp"
#include "mm/image_io.hpp"
#include "mm/annotate.hpp"
#include "mm/detector.hpp"
#include "mm/matchloss.hpp"
#include "mm/pipeline.hpp"
#include "mm/slf.hpp"
#include "mm/spectra.hpp"
#include "mm/synth.hpp"

namespace fs = std::filesystem;
using namespace mm;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mm_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// 1. slf_enhance against the naive per-class reference on small cubes.
Outcome slf_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240601);
  double worst = 0.0;
  std::size_t compared = 0;
  for (int cube_i = 0; cube_i < 50; ++cube_i) {
    const int rows = std::uniform_int_distribution<int>(12, 32)(rng);
    const int cols = std::uniform_int_distribution<int>(12, 32)(rng);
    const int bands = std::uniform_int_distribution<int>(3, 8)(rng);
    const int classes = std::uniform_int_distribution<int>(1, 3)(rng);
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<double> offset(static_cast<std::size_t>(classes) * bands);
    for (double& o : offset) o = 10.0 * z(rng);
    std::vector<int> labels(static_cast<std::size_t>(rows) * cols);
    std::vector<double> v(labels.size() * bands);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      labels[i] = static_cast<int>(i % classes);
      for (int b = 0; b < bands; ++b) v[i * bands + b] = offset[labels[i] * bands + b] + (1.0 + b) * z(rng) + 0.3 * z(rng);
    }
    // A few no-data pixels, left unlabeled as the classifier would.
    for (int k = 0; k < 3; ++k) {
      const std::size_t i = std::uniform_int_distribution<std::size_t>(0, labels.size() - 1)(rng);
      v[i * bands + bands / 2] = io::kDefaultNoData;
      labels[i] = landcover::kUnlabeled;
    }
    const io::HyperCube cube = oracle::make_cube(rows, cols, bands, v);
    spectra::TargetSignature t;
    for (int b = 0; b < bands; ++b) t.values.push_back(-std::exp(-0.5 * (b - bands * 0.6) * (b - bands * 0.6)) - 0.1);
    t.wavelengths = cube.meta().wavelengths;

    const landcover::ClassMap cm = oracle::make_class_map(rows, cols, classes, labels);
    const landcover::ClassStats stats = landcover::class_stats(cube, cm, landcover::kDefaultEpsScale);
    const EnhancementMap got = slf::slf_enhance(cube, cm, stats, t);
    const auto want = oracle::slf_scores(oracle::to_pixels(cube), labels, classes, t.values, landcover::kDefaultEpsScale);
    for (std::size_t i = 0; i < want.size(); ++i) {
      const bool want_valid = !std::isnan(want[i]);
      if (want_valid != (got.valid[i] != 0)) return {false, fmt("cube %d pixel %zu validity differs", cube_i, i)};
      if (!want_valid) continue;
      worst = std::max(worst, std::fabs(got.values[i] - want[i]));
      ++compared;
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-10 && secs < 10.0,
          fmt("50 cubes, %zu pixels, max |diff| = %.3e (tol 1e-10), %.2f s (limit 10 s)", compared, worst, secs)};
}

// 2. Background scores are standardised per class.
Outcome slf_standardization() {
  synth::SynthConfig cfg;
  cfg.rows = 320;
  cfg.cols = 320;
  cfg.bands = 64;
  cfg.seed = 11;
  cfg.plumes.clear();
  const synth::Scene fit_scene = synth::generate(cfg);
  cfg.seed = 12;
  const synth::Scene held_scene = synth::generate(cfg);
  const io::HyperCube fit = fit_scene.cube();
  const io::HyperCube held = held_scene.cube();

  const spectra::Indices idx = spectra::compute_indices(fit);
  const landcover::ClassMap cm = landcover::merge_small_classes(landcover::classify(idx.ndvi, idx.ndwi),
                                                                landcover::kDefaultMinPixels);
  const landcover::ClassStats stats = landcover::class_stats(fit, cm, landcover::kDefaultEpsScale);
  const spectra::TargetSignature& t = fit_scene.target;

  std::string detail;
  bool pass = true;
  for (const auto& [name, cube] : {std::pair{"in-sample", &fit}, std::pair{"held-out", &held}}) {
    const EnhancementMap s = slf::slf_enhance(*cube, cm, stats, t);
    for (int k = 0; k < cm.classes; ++k) {
      double sum = 0.0, sq = 0.0;
      std::size_t n = 0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (cm.labels[i] != k || !s.valid[i]) continue;
        sum += s.values[i];
        ++n;
      }
      const double mean = sum / static_cast<double>(n);
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (cm.labels[i] == k && s.valid[i]) sq += (s.values[i] - mean) * (s.values[i] - mean);
      }
      const double var = sq / static_cast<double>(n);
      pass = pass && std::fabs(mean) < 0.02 && std::fabs(var - 1.0) < 0.05;
      detail += fmt("%s class %d: n=%zu mean=%+.4f var=%.4f; ", name, k, n, mean, var);
    }
  }
  std::size_t total = 0;
  for (auto c : cm.counts) total += c;
  return {pass && total >= 100000, fmt("%zu samples; ", total) + detail};
}

double separation(const EnhancementMap& s, const BinaryMask& plume, const ScalarMap& alpha, double amp) {
  double ps = 0.0, bs = 0.0, bq = 0.0;
  std::size_t np = 0, nb = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!s.valid[i]) continue;
    if (plume.bits[i]) {
      ps += s.values[i];
      ++np;
    } else if (alpha.values[i] < 0.01 * amp) {
      bs += s.values[i];
      ++nb;
    }
  }
  const double bm = bs / static_cast<double>(nb);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.valid[i] && !plume.bits[i] && alpha.values[i] < 0.01 * amp) bq += (s.values[i] - bm) * (s.values[i] - bm);
  }
  return (ps / static_cast<double>(np) - bm) / std::sqrt(bq / static_cast<double>(nb));
}

// 3. Class-aware filter separates the plume better than one global covariance.
Outcome slf_vs_traditional() {
  const auto t0 = std::chrono::steady_clock::now();
  const synth::SynthConfig cfg = synth::SynthConfig::two_terrain();
  const synth::Scene scene = synth::generate(cfg);
  const io::HyperCube cube = scene.cube();
  pipeline::PipelineConfig pc;
  pc.min_pixels = 1000;
  pc.filter = pipeline::FilterKind::Slf;
  const auto slf_res = pipeline::run_enhance(pc, cube);
  pc.filter = pipeline::FilterKind::Traditional;
  pc.column_window = cube.width();
  const auto trad = pipeline::run_enhance(pc, cube);
  const double amp = cfg.plumes.front().amplitude;
  const BinaryMask plume = scene.plume_mask();
  const double s_slf = separation(slf_res.map, plume, scene.alpha, amp);
  const double s_trad = separation(trad.map, plume, scene.alpha, amp);
  const double secs = seconds_since(t0);
  const double ratio = s_slf / s_trad;
  return {ratio >= 1.2 && secs < 60.0,
          fmt("separation SLF %.3f vs traditional %.3f, ratio %.3f (need >= 1.20), %d classes, %.2f s", s_slf, s_trad,
              ratio, slf_res.classes.classes, secs)};
}

// 4. Hungarian against exhaustive search.
Outcome hungarian_exact() {
  std::mt19937_64 rng(4242);
  int mismatches = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int g = std::uniform_int_distribution<int>(1, 6)(rng);
    const int p = std::uniform_int_distribution<int>(g, 6)(rng);
    Eigen::MatrixXd cost(g, p);
    const bool integer = trial % 2 == 0;
    for (Eigen::Index i = 0; i < cost.size(); ++i) {
      cost.data()[i] = integer ? std::uniform_int_distribution<int>(0, 9)(rng)
                               : std::uniform_real_distribution<double>(-5.0, 5.0)(rng);
    }
    const match::Assignment a = match::hungarian(cost);
    std::vector<char> used(p, 0);
    double sum = 0.0;
    bool injective = static_cast<int>(a.pred_of_gt.size()) == g;
    for (int i = 0; i < g && injective; ++i) {
      const int j = a.pred_of_gt[i];
      injective = j >= 0 && j < p && !used[j];
      if (injective) {
        used[j] = 1;
        sum += cost(i, j);
      }
    }
    const double best = oracle::brute_force_assignment(cost);
    if (!injective || std::fabs(sum - best) > 1e-9 || std::fabs(a.cost - sum) > 1e-9) ++mismatches;
  }
  return {mismatches == 0, fmt("500 matrices up to 6x6, %d mismatches", mismatches)};
}

// 5. GIoU closed form against a 2000 x 2000 raster.
Outcome giou_oracle() {
  std::mt19937_64 rng(5150);
  std::uniform_real_distribution<double> centre(0.2, 0.8), size(0.1, 0.4);
  double worst = 0.0;
  int out_of_bounds = 0;
  for (int i = 0; i < 200; ++i) {
    const match::Box a{centre(rng), centre(rng), size(rng), size(rng)};
    const match::Box b{centre(rng), centre(rng), size(rng), size(rng)};
    const double g = match::giou(a, b);
    if (!(g > -1.0 && g <= 1.0)) ++out_of_bounds;
    worst = std::max(worst, std::fabs(g - oracle::raster_giou(a, b)));
  }
  return {worst <= 1e-3 && out_of_bounds == 0,
          fmt("200 pairs, max |closed - raster| = %.2e (tol 1e-3), %d outside (-1, 1]", worst, out_of_bounds)};
}

// 6 + 7 share one forward pass.
detector::MethaneMapper* g_model = nullptr;
detector::ForwardResult g_forward;
double g_forward_secs = 0.0;

Outcome shape_contract() {
  synth::SynthConfig cfg;
  cfg.rows = 256;
  cfg.cols = 256;
  cfg.bands = 432;
  cfg.seed = 6;
  cfg.plumes = {{160.0, 120.0, 8.0, 1.0, match::PlumeClass::PointSource}};
  const synth::Scene scene = synth::generate(cfg);
  const io::HyperCube cube = scene.cube();
  pipeline::PipelineConfig pc;
  pc.min_pixels = 1000;
  const EnhancementMap enh = pipeline::run_enhance(pc, cube).map;
  const pipeline::TileInputs in = pipeline::tile_inputs(cube, enh, {0, 0, 256});

  detector::DetectorConfig dcfg;
  dcfg.swir_channels = in.swir.channels();
  static detector::MethaneMapper model(dcfg);
  g_model = &model;
  const auto t0 = std::chrono::steady_clock::now();
  g_forward = model.forward(in.rgb, in.swir, in.enh);
  g_forward_secs = seconds_since(t0);
  const auto& r = g_forward;
  const bool shapes = r.f_e.h == 8 && r.f_e.w == 8 && r.f_e.channels() == 256 && r.q_ref.rows() == 100 &&
                      r.q_ref.cols() == 256 && r.e_out.rows() == 100 && r.e_out.cols() == 512 &&
                      r.detections.boxes.rows() == 100 && r.detections.boxes.cols() == 4;
  return {shapes && g_forward_secs < 30.0,
          fmt("tile 256x256x%d (SWIR %d ch): f_e (%d,%d,%d) Q_ref (%ld,%ld) E_out (%ld,%ld) boxes (%ld,%ld), "
              "forward %.2f s (limit 30 s)",
              cube.bands(), in.swir.channels(), r.f_e.h, r.f_e.w, r.f_e.channels(), (long)r.q_ref.rows(),
              (long)r.q_ref.cols(), (long)r.e_out.rows(), (long)r.e_out.cols(), (long)r.detections.boxes.rows(),
              (long)r.detections.boxes.cols(), g_forward_secs)};
}

Outcome attention_invariants() {
  if (!g_model) return {false, "shape-contract forward pass did not run"};
  const auto& r = g_forward;
  const bool rows_ok = r.trace.rows > 0 && r.trace.max_row_error <= 1e-12;
  int locality_violations = 0;
  for (int q : {0, 17, 99}) {
    Eigen::MatrixXd altered = r.q_ref;
    altered.row(q).setZero();
    const Eigen::MatrixXd e = g_model->decoder_forward(r.f_e, r.p, altered);
    for (Eigen::Index i = 0; i < e.rows(); ++i) {
      const bool same = (e.row(i).array() == r.e_out.row(i).array()).all();
      if (i == q ? same : !same) ++locality_violations;
    }
  }
  return {rows_ok && locality_violations == 0,
          fmt("%zu softmax rows, max |sum - 1| = %.2e (tol 1e-12); decoder row-locality violations: %d",
              r.trace.rows, r.trace.max_row_error, locality_violations)};
}

// 8. Tiles of 256 with overlap 128 cover every pixel.
Outcome tiling_coverage() {
  std::mt19937_64 rng(8080);
  int failures = 0;
  for (int i = 0; i < 100; ++i) {
    const int h = std::uniform_int_distribution<int>(256, 1800)(rng);
    const int w = std::uniform_int_distribution<int>(256, 1800)(rng);
    const auto tiles = io::plan_tiles(h, w, 256, 128);
    std::vector<char> covered(static_cast<std::size_t>(h) * w, 0);
    bool ok = true;
    for (const auto& t : tiles) {
      ok = ok && t.row0 >= 0 && t.col0 >= 0 && t.row0 + 256 <= h && t.col0 + 256 <= w;
      if (!ok) break;
      for (int r = t.row0; r < t.row0 + 256; ++r) std::fill_n(&covered[static_cast<std::size_t>(r) * w + t.col0], 256, 1);
    }
    ok = ok && std::all_of(covered.begin(), covered.end(), [](char c) { return c != 0; });
    for (const auto& origins : {io::tile_origins(h, 256, 128), io::tile_origins(w, 256, 128)}) {
      for (std::size_t k = 1; k < origins.size(); ++k) {
        const int step = origins[k] - origins[k - 1];
        const bool last = k + 1 == origins.size();
        ok = ok && (last ? step > 0 && step <= 128 : step == 128);
      }
    }
    failures += ok ? 0 : 1;
  }
  return {failures == 0, fmt("100 random sizes in [256, 1800]^2, %d with gaps or bad stride", failures)};
}

// 9. Homography recovery and identity warp.
Outcome homography() {
  std::mt19937_64 rng(9090);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::Matrix3d m;
    m << 1.0 + 0.3 * u(rng), 0.2 * u(rng), 50.0 * u(rng), 0.2 * u(rng), 1.0 + 0.3 * u(rng), 50.0 * u(rng),
        1e-4 * u(rng), 1e-4 * u(rng), 1.0;
    const annotate::Homography truth(m);
    std::vector<annotate::Correspondence> pairs;
    for (const auto& p : {annotate::Point{0, 0}, {150, 0}, {150, 150}, {0, 150}}) pairs.push_back({p, truth.apply(p)});
    const annotate::HomographyFit fit = annotate::estimate_homography(pairs);
    for (int k = 0; k < 20; ++k) {
      const annotate::Point p{75 + 75 * u(rng), 75 + 75 * u(rng)};
      const annotate::Point a = fit.h.apply(p), b = truth.apply(p);
      worst = std::max(worst, std::hypot(a.x - b.x, a.y - b.y));
    }
  }
  ScalarMap patch(150, 150, 0.0);
  std::fill(patch.valid.begin(), patch.valid.end(), 1);
  for (double& v : patch.values) v = u(rng) > 0.3 ? 10.0 * (u(rng) + 1.0) : 0.0;
  const ScalarMap warped = annotate::warp_mask(patch, annotate::Homography(), 150, 150);
  const bool identity = warped.values == patch.values;
  return {worst <= 1e-6 && identity,
          fmt("100 projective maps, max held-out reprojection error %.2e px (tol 1e-6); identity warp %s", worst,
              identity ? "exact" : "differs")};
}

// 10. Metric sanity.
Outcome metrics() {
  // Perfect predictions on three instances.
  std::vector<match::LabeledBox> gts{{{0.2, 0.2, 0.1, 0.1}, "point_source", 0},
                                     {{0.6, 0.5, 0.2, 0.1}, "diffused_source", 0},
                                     {{0.5, 0.8, 0.1, 0.2}, "point_source", 1}};
  std::vector<match::ScoredBox> perfect;
  for (const auto& g : gts) perfect.push_back({g.box, 0.9, "plume", g.image});
  const double map_perfect = match::map_at_iou(perfect, gts, 0.5).map;

  BinaryMask pred(64, 64);
  std::vector<BinaryMask> gt_masks;
  for (int k = 0; k < 2; ++k) {
    BinaryMask m(64, 64);
    for (int r = 5 + 30 * k; r < 20 + 30 * k; ++r) {
      for (int c = 10; c < 30; ++c) m.at(r, c) = pred.at(r, c) = 1;
    }
    gt_masks.push_back(m);
  }
  const double miou_perfect = match::miou(pred, gt_masks);

  // Hand case: two ground truths, detections (0.9 hit, 0.8 miss, 0.7 hit).
  // PR points (1, 1/2), (1/2, 1/2), (2/3, 1); envelope gives 1/2 * 1 + 1/2 * 2/3.
  const std::vector<match::LabeledBox> hand_gt{{{0.25, 0.25, 0.2, 0.2}, "point_source", 0},
                                               {{0.75, 0.75, 0.2, 0.2}, "point_source", 0}};
  const std::vector<match::ScoredBox> hand_det{{{0.25, 0.25, 0.2, 0.2}, 0.9, "plume", 0},
                                               {{0.50, 0.10, 0.1, 0.1}, 0.8, "plume", 0},
                                               {{0.76, 0.75, 0.2, 0.2}, 0.7, "plume", 0}};
  const double hand = match::map_at_iou(hand_det, hand_gt, 0.5).map;
  const double hand_expected = 0.5 * 1.0 + 0.5 * (2.0 / 3.0);

  // Same perfect case through the eval command on files.
  const fs::path dir = scratch("metrics");
  synth::SynthConfig scfg;
  scfg.rows = scfg.cols = 64;
  scfg.bands = 8;
  scfg.plumes = {{20, 20, 4, 1, match::PlumeClass::PointSource}, {44, 44, 4, 1, match::PlumeClass::DiffusedSource}};
  const synth::Scene scene = pipeline::cmd_synth(scfg, dir / "gt");
  fs::create_directories(dir / "pred");
  nlohmann::ordered_json dj;
  dj["records"] = nlohmann::ordered_json::array();
  for (const auto& t : scene.truth) {
    dj["records"].push_back({{"box", {t.box.cx, t.box.cy, t.box.w, t.box.h}}, {"score", 0.9}, {"kept", true}});
  }
  std::ofstream(dir / "pred" / "detections.json") << dj.dump();
  {
    const BinaryMask m = scene.plume_mask();
    std::vector<std::uint8_t> px(m.bits.size());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = m.bits[i] ? 255 : 0;
    write_png_gray(dir / "pred" / "mask.png", m.rows, m.cols, px);
  }
  const auto ev = pipeline::cmd_eval(dir / "pred", dir / "gt", dir / "metrics.json");

  const bool pass = map_perfect == 1.0 && miou_perfect == 1.0 && hand == hand_expected && ev.map_50 == 1.0 &&
                    ev.miou == 1.0;
  return {pass, fmt("perfect: map_50 %.6f miou %.6f; via eval: map_50 %.6f miou %.6f; hand case AP %.15f (want %.15f)",
                    map_perfect, miou_perfect, ev.map_50, ev.miou, hand, hand_expected)};
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Compares every file except the timestamp sidecars.
bool same_outputs(const fs::path& a, const fs::path& b, std::string& why, int& files) {
  files = 0;
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(a)) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  for (const auto& n : names) {
    if (n.ends_with(".run.json")) continue;
    ++files;
    if (!fs::exists(b / n) || file_bytes(a / n) != file_bytes(b / n)) {
      why = n;
      return false;
    }
  }
  return files > 0;
}

// 11. Byte-identical reruns.
Outcome determinism() {
  const fs::path dir = scratch("determinism");
  synth::SynthConfig scfg;
  scfg.rows = 256;
  scfg.cols = 288;
  scfg.bands = 120;
  scfg.plumes = {{180, 140, 8, 1.0, match::PlumeClass::PointSource}};
  pipeline::cmd_synth(scfg, dir / "scene");

  pipeline::PipelineConfig cfg;
  cfg.cube = dir / "scene" / "cube.img";
  cfg.glt = dir / "scene" / "glt.img";
  cfg.min_pixels = 2000;
  cfg.seed = 3;
  cfg.set("detector.n_layers", "2");
  std::string why;
  int n_enh = 0, n_det = 0;
  bool ok = true;
  for (const char* run : {"enh_a", "enh_b"}) {
    cfg.out_dir = dir / run;
    pipeline::cmd_enhance(cfg);
  }
  ok = same_outputs(dir / "enh_a", dir / "enh_b", why, n_enh);
  std::string enh_detail = ok ? "identical" : "differs at " + why;

  cfg.enhancement = dir / "enh_a" / "enhancement.img";
  cfg.out_dir = dir / "det_a";
  pipeline::cmd_detect(cfg);
  cfg.out_dir = dir / "det_b";
  cfg.jobs = 2;
  pipeline::cmd_detect(cfg);
  const bool det_ok = same_outputs(dir / "det_a", dir / "det_b", why, n_det);
  return {ok && det_ok, fmt("enhance: %d files %s; detect (1 vs 2 workers): %d files %s", n_enh, enh_detail.c_str(),
                            n_det, det_ok ? "identical" : ("differs at " + why).c_str())};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"1  SLF matches naive reference", slf_oracle},
      {"2  SLF background standardization", slf_standardization},
      {"3  SLF beats traditional filter", slf_vs_traditional},
      {"4  Hungarian exactness", hungarian_exact},
      {"5  GIoU raster oracle", giou_oracle},
      {"6  Detector shape contract", shape_contract},
      {"7  Attention invariants", attention_invariants},
      {"8  Tiling coverage", tiling_coverage},
      {"9  Homography recovery", homography},
      {"10 Metric sanity", metrics},
      {"11 Determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("[%s] %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
