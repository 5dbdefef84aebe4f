#include "mm/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <mutex>
#include <thread>

#include "json.hpp"
#include "mm/error.hpp"
#include "mm/image_io.hpp"
#include "mm/spectra.hpp"

namespace mm::pipeline {

using json = nlohmann::ordered_json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoFailure, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoFailure, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorCode::IoFailure, "short write to " + path.string());
}

void require_file(const fs::path& path, const char* what) {
  if (path.empty()) fail(ErrorCode::MissingField, std::string("no ") + what + " given");
  if (!fs::exists(path)) fail(ErrorCode::IoFailure, std::string(what) + " not found: " + path.string());
}

io::HyperCube open_cube(const PipelineConfig& cfg) {
  require_file(cfg.cube, "cube");
  return cfg.header.empty() ? io::HyperCube::open(cfg.cube) : io::HyperCube::open(cfg.cube, cfg.header);
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

ScalarMap crop(const ScalarMap& m, const io::TileRect& t) {
  ScalarMap out(t.size, t.size);
  for (int r = 0; r < t.size; ++r) {
    for (int c = 0; c < t.size; ++c) {
      out.at(r, c) = m.at(t.row0 + r, t.col0 + c);
      out.valid[out.index(r, c)] = m.valid[m.index(t.row0 + r, t.col0 + c)];
    }
  }
  return out;
}

void write_mask_png(const fs::path& path, const BinaryMask& mask) {
  std::vector<std::uint8_t> px(mask.bits.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = mask.bits[i] ? 255 : 0;
  write_png_gray(path, mask.rows, mask.cols, px);
}

BinaryMask read_mask_png(const fs::path& path) {
  const RgbImage img = read_png_rgb(path);
  BinaryMask m(img.rows, img.cols);
  for (int r = 0; r < img.rows; ++r) {
    for (int c = 0; c < img.cols; ++c) {
      const std::uint8_t* p = img.px(r, c);
      m.at(r, c) = (p[0] | p[1] | p[2]) ? 1 : 0;
    }
  }
  return m;
}

json class_summary(const landcover::ClassMap& cm) {
  json out = json::array();
  for (int k = 0; k < cm.classes; ++k) {
    json bins = json::array();
    if (k < static_cast<int>(cm.members.size())) {
      for (int b : cm.members[k]) bins.push_back(b);
    }
    out.push_back({{"label", k}, {"pixels", cm.counts[k]}, {"bins", bins}});
  }
  return out;
}

}  // namespace

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
  try {
    if (key.rfind("detector.", 0) == 0) {
      detector::DetectorConfig d = detector::DetectorConfig::from_text(detector.to_text() + key.substr(9) + "=" + value);
      detector = d;
    } else if (key == "cube") cube = value;
    else if (key == "header") header = value;
    else if (key == "glt") glt = value;
    else if (key == "signature") signature = value;
    else if (key == "enhancement") enhancement = value;
    else if (key == "out_dir") out_dir = value;
    else if (key == "filter") {
      if (value == "slf") filter = FilterKind::Slf;
      else if (value == "traditional") filter = FilterKind::Traditional;
      else fail(ErrorCode::InvalidArgument, "filter must be 'slf' or 'traditional', got '" + value + "'");
    } else if (key == "sensor_window") sensor_window = std::stoi(value);
    else if (key == "column_window") column_window = std::stoi(value);
    else if (key == "eps_scale") eps_scale = std::stod(value);
    else if (key == "min_pixels") min_pixels = std::stoull(value);
    else if (key == "tile_size") tile_size = std::stoi(value);
    else if (key == "tile_overlap") tile_overlap = std::stoi(value);
    else if (key == "jobs") jobs = std::max(1, std::stoi(value));
    else if (key == "lambda_class") loss.cls = std::stod(value);
    else if (key == "lambda_l1") loss.l1 = std::stod(value);
    else if (key == "lambda_giou") loss.giou = std::stod(value);
    else if (key == "lambda_mask") loss.mask = std::stod(value);
    else if (key == "iou_threshold") iou_threshold = std::stod(value);
    else if (key == "seed") {
      seed = std::stoull(value);
      detector.seed = seed;
    } else {
      fail(ErrorCode::InvalidArgument, "unknown config key '" + key + "'");
    }
  } catch (const std::logic_error&) {
    fail(ErrorCode::InvalidArgument, "bad value for config key '" + key + "': " + value);
  }
}

PipelineConfig PipelineConfig::from_text(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream is(text);
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorCode::InvalidArgument, "config line " + std::to_string(n) + ": expected key=value");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

PipelineConfig PipelineConfig::from_file(const fs::path& path) { return from_text(read_text(path)); }

std::string PipelineConfig::to_text() const {
  std::ostringstream os;
  os << "cube=" << cube.string() << '\n'
     << "header=" << header.string() << '\n'
     << "glt=" << glt.string() << '\n'
     << "signature=" << signature.string() << '\n'
     << "enhancement=" << enhancement.string() << '\n'
     << "filter=" << (filter == FilterKind::Slf ? "slf" : "traditional") << '\n'
     << "sensor_window=" << sensor_window << '\n'
     << "column_window=" << column_window << '\n'
     << "eps_scale=" << format_double(eps_scale) << '\n'
     << "min_pixels=" << min_pixels << '\n'
     << "tile_size=" << tile_size << '\n'
     << "tile_overlap=" << tile_overlap << '\n'
     << "lambda_class=" << format_double(loss.cls) << '\n'
     << "lambda_l1=" << format_double(loss.l1) << '\n'
     << "lambda_giou=" << format_double(loss.giou) << '\n'
     << "lambda_mask=" << format_double(loss.mask) << '\n'
     << "iou_threshold=" << format_double(iou_threshold) << '\n'
     << "seed=" << seed << '\n';
  std::istringstream det(detector.to_text());
  std::string line;
  while (std::getline(det, line)) {
    if (line.rfind("seed=", 0) == 0 || line.rfind("downsample_factor=", 0) == 0) continue;
    os << "detector." << line << '\n';
  }
  return os.str();
}

std::string PipelineConfig::hash() const { return fnv1a_hex(to_text()); }

void write_run_sidecar(const fs::path& out_dir, const std::string& name, const std::string& config_hash) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream ts;
  ts << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  json j{{"command", name}, {"config_hash", config_hash}, {"timestamp", ts.str()}};
  write_text(out_dir / (name + ".run.json"), j.dump(2) + "\n");
}

EnhanceResult run_enhance(const PipelineConfig& cfg, const io::HyperCube& cube) {
  EnhanceResult res;
  const auto& wl = cube.meta().wavelengths;
  res.target = cfg.signature.empty() ? spectra::load_target_signature_file(spectra::reference_signature_path(), wl)
                                     : spectra::load_target_signature_file(cfg.signature, wl);
  if (cfg.filter == FilterKind::Traditional) {
    res.map = slf::matched_filter_traditional(cube, res.target, cfg.column_window, cfg.eps_scale);
    return res;
  }
  const spectra::Indices idx = spectra::compute_indices(cube);
  res.classes = landcover::merge_small_classes(landcover::classify(idx.ndvi, idx.ndwi), cfg.min_pixels);
  res.stats = landcover::class_stats(cube, res.classes, cfg.eps_scale);
  if (!cfg.glt.empty()) {
    require_file(cfg.glt, "GLT");
    const io::GltMap glt = io::read_glt(io::HyperCube::open(cfg.glt, io::HeaderKind::Auxiliary));
    if (glt.rows != cube.height() || glt.cols != cube.width()) {
      fail(ErrorCode::DimensionMismatch, "GLT " + std::to_string(glt.rows) + "x" + std::to_string(glt.cols) +
                                             " does not match the cube");
    }
    const slf::SensorGrouping grouping = slf::sensor_groups(glt, cfg.sensor_window);
    res.map = slf::slf_enhance(cube, res.classes, res.stats, res.target, &grouping, &res.report);
  } else {
    res.map = slf::slf_enhance(cube, res.classes, res.stats, res.target, nullptr, &res.report);
  }
  return res;
}

EnhanceResult cmd_enhance(const PipelineConfig& cfg) {
  const io::HyperCube cube = open_cube(cfg);
  EnhanceResult res = run_enhance(cfg, cube);
  fs::create_directories(cfg.out_dir);
  const std::string hash = cfg.hash();
  const std::string filter = cfg.filter == FilterKind::Slf ? "slf" : "traditional";
  write_float_map(cfg.out_dir / "enhancement.img", res.map,
                  {{"config hash", hash}, {"seed", std::to_string(cfg.seed)}, {"filter", filter}});

  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < res.map.size(); ++i) {
    if (!res.map.valid[i]) continue;
    sum += res.map.values[i];
    ++n;
  }
  const double mean = n ? sum / static_cast<double>(n) : 0.0;
  for (std::size_t i = 0; i < res.map.size(); ++i) {
    if (res.map.valid[i]) sq += (res.map.values[i] - mean) * (res.map.values[i] - mean);
  }
  const double sd = n ? std::sqrt(sq / static_cast<double>(n)) : 0.0;
  write_png_rgb(cfg.out_dir / "enhancement.png", render_map(res.map, Ramp::Gray, mean - 4 * sd, mean + 4 * sd));

  json j;
  j["schema"] = kEnhanceSchema;
  j["config_hash"] = hash;
  j["seed"] = cfg.seed;
  j["filter"] = filter;
  j["cube"] = {{"path", cfg.cube.string()},
               {"rows", cube.height()},
               {"cols", cube.width()},
               {"bands", cube.bands()}};
  j["signature"] = {{"path", cfg.signature.empty() ? spectra::reference_signature_path().filename().string()
                                                   : cfg.signature.string()},
                    {"provenance", res.target.provenance}};
  j["eps_scale"] = cfg.eps_scale;
  j["score"] = {{"valid_pixels", n}, {"mean", mean}, {"std", sd}};
  if (cfg.filter == FilterKind::Slf) {
    landcover::save_class_stats(cfg.out_dir / "class_stats.bin", res.stats);
    landcover::write_class_png(cfg.out_dir / "classes.png", res.classes);
    j["min_pixels"] = cfg.min_pixels;
    j["classes"] = class_summary(res.classes);
    j["sensor_window"] = cfg.glt.empty() ? json(nullptr) : json(cfg.sensor_window);
    j["cells"] = {{"own_stats", res.report.cells_with_own_stats},
                  {"fallback", res.report.cells_fallback},
                  {"min_samples", res.report.min_cell_samples}};
  } else {
    j["column_window"] = cfg.column_window;
  }
  j["outputs"] = {"enhancement.img", "enhancement.png"};
  write_text(cfg.out_dir / "enhance.json", j.dump(2) + "\n");
  write_run_sidecar(cfg.out_dir, "enhance", hash);
  return res;
}

io::Range swir_bands(const io::CubeMeta& meta) {
  return spectra::select_bands(meta, spectra::kSwirLoNm, spectra::kSwirHiNm).range();
}

TileInputs tile_inputs(const io::HyperCube& cube, const EnhancementMap& enh, const io::TileRect& tile) {
  const io::HyperCube win = cube.window({tile.row0, tile.row0 + tile.size}, {tile.col0, tile.col0 + tile.size});
  TileInputs in;
  in.rgb = detector::to_feature_map(spectra::compose_rgb(win));
  const io::Range sw = swir_bands(cube.meta());
  const io::Block block = win.read_block({0, tile.size}, {0, tile.size}, sw);
  Image swir(tile.size, tile.size, sw.size());
  swir.values = block.values;
  for (int r = 0; r < tile.size; ++r) {
    for (int c = 0; c < tile.size; ++c) swir.valid[swir.pixel(r, c)] = block.pixel_valid(r, c) ? 1 : 0;
  }
  in.swir = detector::to_feature_map(swir);
  in.enh = detector::to_feature_map(crop(enh, tile));
  return in;
}

DetectResult run_detect(const PipelineConfig& cfg, const io::HyperCube& cube, const EnhancementMap& enh) {
  if (enh.rows != cube.height() || enh.cols != cube.width()) {
    fail(ErrorCode::DimensionMismatch, "enhancement map does not match the cube");
  }
  const int t = cfg.tile_size;
  if (t <= 0 || t % detector::kDownsample != 0) {
    fail(ErrorCode::BadGeometry, "tile size " + std::to_string(t) + " is not a positive multiple of 32");
  }
  if (t > cube.height() || t > cube.width()) {
    fail(ErrorCode::BadGeometry, "tile size " + std::to_string(t) + " exceeds image " + std::to_string(cube.height()) +
                                     "x" + std::to_string(cube.width()));
  }
  const auto tiles = io::plan_tiles(cube.height(), cube.width(), t, cfg.tile_overlap);

  detector::DetectorConfig dcfg = cfg.detector;
  dcfg.seed = cfg.seed;
  dcfg.swir_channels = swir_bands(cube.meta()).size();
  const detector::MethaneMapper model(dcfg);

  DetectResult res;
  res.tiles.resize(tiles.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < tiles.size(); i = next++) {
      const TileInputs in = tile_inputs(cube, enh, tiles[i]);
      const detector::ForwardResult fw = model.forward(in.rgb, in.swir, in.enh, false);
      TileDetections& td = res.tiles[i];
      td.tile = tiles[i];
      td.detections = fw.detections;
      td.score = fw.detections.plume_probability();
      td.heat = fw.masks.merged;
      td.mask = fw.masks.mask;
    }
  };
  const int jobs = std::clamp(cfg.jobs, 1, static_cast<int>(tiles.size()));
  if (jobs == 1) {
    worker();
  } else {
    // Tiles are independent; results land at their own index and are fused
    // below in tile order.
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mutex;
    for (int j = 0; j < jobs; ++j) {
      pool.emplace_back([&]() {
        try {
          worker();
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next = tiles.size();
        }
      });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
  }

  res.heat = ScalarMap(cube.height(), cube.width(), 0.0);
  std::fill(res.heat.valid.begin(), res.heat.valid.end(), 1);
  res.mask = BinaryMask(cube.height(), cube.width());
  for (const auto& td : res.tiles) {
    for (int r = 0; r < t; ++r) {
      for (int c = 0; c < t; ++c) {
        double& h = res.heat.at(td.tile.row0 + r, td.tile.col0 + c);
        h = std::max(h, td.heat.at(r, c));
        if (td.mask.at(r, c)) res.mask.at(td.tile.row0 + r, td.tile.col0 + c) = 1;
      }
    }
  }
  return res;
}

DetectResult cmd_detect(const PipelineConfig& cfg) {
  const io::HyperCube cube = open_cube(cfg);
  EnhancementMap enh;
  if (!cfg.enhancement.empty()) {
    require_file(cfg.enhancement, "enhancement map");
    enh = read_float_map(cfg.enhancement);
  } else {
    enh = run_enhance(cfg, cube).map;
  }
  DetectResult res = run_detect(cfg, cube, enh);

  fs::create_directories(cfg.out_dir);
  const std::string hash = cfg.hash();
  const double W = cube.width(), H = cube.height();
  json j;
  j["schema"] = kDetectSchema;
  j["config_hash"] = hash;
  j["seed"] = cfg.seed;
  j["rows"] = cube.height();
  j["cols"] = cube.width();
  j["tile_size"] = cfg.tile_size;
  j["tile_overlap"] = cfg.tile_overlap;
  j["confidence_threshold"] = cfg.detector.confidence_threshold;
  j["mask_threshold"] = cfg.detector.mask_threshold;
  j["mask"] = "mask.png";
  j["heatmap"] = "heatmap.img";
  j["tiles"] = json::array();
  j["records"] = json::array();
  for (std::size_t i = 0; i < res.tiles.size(); ++i) {
    const auto& td = res.tiles[i];
    j["tiles"].push_back({{"id", i}, {"row0", td.tile.row0}, {"col0", td.tile.col0}, {"size", td.tile.size}});
    for (Eigen::Index q = 0; q < td.detections.boxes.rows(); ++q) {
      const auto b = td.detections.boxes.row(q);
      const double s = td.tile.size;
      const double cx = std::clamp((td.tile.col0 + b(0) * s) / W, 0.0, 1.0);
      const double cy = std::clamp((td.tile.row0 + b(1) * s) / H, 0.0, 1.0);
      const double w = std::clamp(b(2) * s / W, 0.0, 1.0);
      const double h = std::clamp(b(3) * s / H, 0.0, 1.0);
      j["records"].push_back({{"tile", i},
                              {"query", q},
                              {"box", {cx, cy, w, h}},
                              {"tile_box", {b(0), b(1), b(2), b(3)}},
                              {"score", td.score(q)},
                              {"kept", td.score(q) >= cfg.detector.confidence_threshold}});
    }
  }
  write_text(cfg.out_dir / "detections.json", j.dump(2) + "\n");
  write_mask_png(cfg.out_dir / "mask.png", res.mask);
  write_float_map(cfg.out_dir / "heatmap.img", res.heat, {{"config hash", hash}, {"seed", std::to_string(cfg.seed)}});
  write_run_sidecar(cfg.out_dir, "detect", hash);
  return res;
}

std::vector<match::GtInstance> ground_truth_from_mask(const RgbImage& mask) {
  std::vector<match::GtInstance> out;
  for (const auto cls : {match::PlumeClass::PointSource, match::PlumeClass::DiffusedSource}) {
    BinaryMask layer(mask.rows, mask.cols);
    const int channel = cls == match::PlumeClass::PointSource ? 0 : 2;
    for (int r = 0; r < mask.rows; ++r) {
      for (int c = 0; c < mask.cols; ++c) layer.at(r, c) = mask.px(r, c)[channel] >= 128 ? 1 : 0;
    }
    for (auto& comp : connected_components(layer)) {
      int r0 = mask.rows, r1 = -1, c0 = mask.cols, c1 = -1;
      for (int r = 0; r < comp.rows; ++r) {
        for (int c = 0; c < comp.cols; ++c) {
          if (!comp.at(r, c)) continue;
          r0 = std::min(r0, r);
          r1 = std::max(r1, r);
          c0 = std::min(c0, c);
          c1 = std::max(c1, c);
        }
      }
      match::GtInstance g;
      g.cls = cls;
      g.box = {(c0 + c1 + 1) * 0.5 / mask.cols, (r0 + r1 + 1) * 0.5 / mask.rows,
               static_cast<double>(c1 - c0 + 1) / mask.cols, static_cast<double>(r1 - r0 + 1) / mask.rows};
      g.mask = std::move(comp);
      out.push_back(std::move(g));
    }
  }
  return out;
}

EvalResult cmd_eval(const fs::path& pred_dir, const fs::path& gt_dir, const fs::path& out_json, double iou_threshold,
                    const std::string& config_hash) {
  std::vector<std::pair<fs::path, fs::path>> images;
  if (fs::exists(gt_dir / "gt_mask.png")) {
    images.emplace_back(pred_dir, gt_dir);
  } else {
    if (!fs::is_directory(gt_dir)) fail(ErrorCode::IoFailure, "ground-truth directory not found: " + gt_dir.string());
    std::vector<fs::path> names;
    for (const auto& e : fs::directory_iterator(gt_dir)) {
      if (e.is_directory() && fs::exists(e.path() / "gt_mask.png")) names.push_back(e.path().filename());
    }
    std::sort(names.begin(), names.end());
    for (const auto& n : names) images.emplace_back(pred_dir / n, gt_dir / n);
  }
  if (images.empty()) fail(ErrorCode::EmptyGroundTruth, "no ground-truth masks under " + gt_dir.string());

  std::vector<match::ScoredBox> dets;
  std::vector<match::LabeledBox> gts;
  double iou_sum = 0.0;
  std::size_t instances = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& [pdir, gdir] = images[i];
    const RgbImage gt_img = read_png_rgb(gdir / "gt_mask.png");
    const auto gt = ground_truth_from_mask(gt_img);
    BinaryMask pred(gt_img.rows, gt_img.cols);
    if (fs::exists(pdir / "mask.png")) pred = read_mask_png(pdir / "mask.png");
    if (fs::exists(pdir / "detections.json")) {
      const json dj = json::parse(read_text(pdir / "detections.json"));
      for (const auto& rec : dj.at("records")) {
        if (!rec.value("kept", true)) continue;
        const auto& b = rec.at("box");
        match::ScoredBox sb;
        sb.box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
        if (!(sb.box.w > 0.0) || !(sb.box.h > 0.0)) continue;
        sb.score = rec.at("score").get<double>();
        sb.label = rec.value("label", std::string("plume"));
        sb.image = static_cast<int>(i);
        dets.push_back(sb);
      }
    }
    std::vector<BinaryMask> gt_masks;
    for (const auto& g : gt) {
      gts.push_back({g.box, match::to_string(g.cls), static_cast<int>(i)});
      gt_masks.push_back(g.mask);
    }
    if (!gt_masks.empty()) {
      iou_sum += match::miou(pred, gt_masks) * static_cast<double>(gt_masks.size());
      instances += gt_masks.size();
    }
  }
  if (instances == 0) fail(ErrorCode::EmptyGroundTruth, "ground truth holds no plume instances");

  EvalResult res;
  const match::MapResult m = match::map_at_iou(dets, gts, iou_threshold);
  res.map_50 = m.map;
  res.per_class_ap = m.per_class_ap;
  res.miou = iou_sum / static_cast<double>(instances);
  res.n_images = static_cast<int>(images.size());

  json j;
  j["schema"] = kMetricsSchema;
  j["map_50"] = res.map_50;
  j["miou"] = res.miou;
  j["per_class_ap"] = res.per_class_ap;
  j["n_images"] = res.n_images;
  j["iou_threshold"] = iou_threshold;
  j["config_hash"] = config_hash;
  if (!out_json.empty()) {
    if (out_json.has_parent_path()) fs::create_directories(out_json.parent_path());
    write_text(out_json, j.dump(2) + "\n");
  }
  return res;
}

RgbImage render_map(const ScalarMap& map, Ramp ramp, double vmin, double vmax) {
  RgbImage img(map.rows, map.cols);
  const double span = vmax - vmin;
  for (int r = 0; r < map.rows; ++r) {
    for (int c = 0; c < map.cols; ++c) {
      std::uint8_t* px = img.px(r, c);
      const double v = map.at(r, c);
      if (!map.is_valid(r, c) || !std::isfinite(v)) {
        std::copy(kSentinel, kSentinel + 3, px);
        continue;
      }
      const double u = span > 0.0 ? std::clamp((v - vmin) / span, 0.0, 1.0) : 0.0;
      if (ramp == Ramp::Gray) {
        const auto g = static_cast<std::uint8_t>(std::lround(255.0 * u));
        px[0] = px[1] = px[2] = g;
      } else {
        // Black -> red -> yellow -> white.
        px[0] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(3.0 * u, 0.0, 1.0)));
        px[1] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(3.0 * u - 1.0, 0.0, 1.0)));
        px[2] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(3.0 * u - 2.0, 0.0, 1.0)));
      }
    }
  }
  return img;
}

PlotResult cmd_plot(const fs::path& map_path, const fs::path& png_path, Ramp ramp, std::optional<double> vmin,
                    std::optional<double> vmax) {
  require_file(map_path, "map");
  const ScalarMap map = read_float_map(map_path);
  PlotResult res;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (!map.valid[i] || !std::isfinite(map.values[i])) {
      ++res.nan_pixels;
      continue;
    }
    lo = std::min(lo, map.values[i]);
    hi = std::max(hi, map.values[i]);
  }
  if (!std::isfinite(lo)) lo = hi = 0.0;
  res.vmin = vmin.value_or(lo);
  res.vmax = vmax.value_or(hi);
  if (png_path.has_parent_path()) fs::create_directories(png_path.parent_path());
  write_png_rgb(png_path, render_map(map, ramp, res.vmin, res.vmax));
  std::ostringstream side;
  side.precision(17);
  side << "schema = " << kPlotSchema << '\n'
       << "ramp = " << (ramp == Ramp::Gray ? "gray" : "heat") << '\n'
       << "vmin = " << res.vmin << '\n'
       << "vmax = " << res.vmax << '\n'
       << "scale = value -> (value - vmin) / (vmax - vmin), clamped to [0, 1]\n"
       << "sentinel = " << int(kSentinel[0]) << ',' << int(kSentinel[1]) << ',' << int(kSentinel[2])
       << " (invalid or non-finite)\n"
       << "invalid_pixels = " << res.nan_pixels << '\n';
  write_text(fs::path(png_path.string() + ".txt"), side.str());
  return res;
}

std::vector<io::TileRect> cmd_tile(const fs::path& cube_path, int size, int overlap, const fs::path& out_dir,
                                   bool extract) {
  require_file(cube_path, "cube");
  const io::HyperCube cube = io::HyperCube::open(cube_path);
  const auto tiles = io::plan_tiles(cube.height(), cube.width(), size, overlap);
  fs::create_directories(out_dir);
  json j;
  j["schema"] = kTilesSchema;
  j["cube"] = cube_path.string();
  j["rows"] = cube.height();
  j["cols"] = cube.width();
  j["size"] = size;
  j["overlap"] = overlap;
  j["tiles"] = json::array();
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const auto& t = tiles[i];
    json rec{{"id", i}, {"row0", t.row0}, {"col0", t.col0}, {"size", t.size}};
    if (extract) {
      std::ostringstream name;
      name << "tile_" << std::setw(4) << std::setfill('0') << i << ".img";
      io::CubeMeta meta = cube.meta();
      meta.height = meta.width = t.size;
      meta.header_offset = 0;
      meta.big_endian = false;
      io::BilWriter writer(out_dir / name.str(), meta);
      const io::HyperCube win = cube.window({t.row0, t.row0 + t.size}, {t.col0, t.col0 + t.size});
      std::vector<double> line(static_cast<std::size_t>(meta.bands) * t.size);
      for (int r = 0; r < t.size; ++r) {
        const io::Block b = win.read_rows({r, r + 1});
        for (int band = 0; band < meta.bands; ++band) {
          for (int c = 0; c < t.size; ++c) line[static_cast<std::size_t>(band) * t.size + c] = b.at(0, c, band);
        }
        writer.write_line(line);
      }
      writer.finish();
      rec["file"] = name.str();
    }
    j["tiles"].push_back(rec);
  }
  write_text(out_dir / "tiles.json", j.dump(2) + "\n");
  return tiles;
}

AnnotateResult cmd_annotate_map(const fs::path& grid_path, const std::vector<fs::path>& patches,
                                const fs::path& out_dir) {
  require_file(grid_path, "geographic grid");
  const annotate::GeoGrid grid = annotate::read_geo_grid(grid_path);
  AnnotateResult res;
  res.mask = RgbImage(grid.rows, grid.cols);
  res.concentration = ScalarMap(grid.rows, grid.cols, 0.0);
  std::fill(res.concentration.valid.begin(), res.concentration.valid.end(), 1);
  json j;
  j["schema"] = kAnnotateSchema;
  j["grid"] = grid_path.string();
  j["patches"] = json::array();
  for (const auto& p : patches) {
    require_file(p, "annotation patch");
    const annotate::AnnotationPatch patch = annotate::read_patch(p);
    const annotate::HomographyFit fit = annotate::estimate_homography(annotate::corner_correspondences(patch, grid));
    const ScalarMap warped = annotate::warp_mask(patch.concentration, fit.h, grid.rows, grid.cols);
    annotate::composite(res.mask, annotate::encode_mask(warped, patch.type));
    for (std::size_t i = 0; i < warped.size(); ++i) {
      res.concentration.values[i] = std::max(res.concentration.values[i], warped.values[i]);
    }
    json h = json::array();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) h.push_back(fit.h.matrix()(r, c));
    }
    j["patches"].push_back({{"file", p.string()},
                            {"source_type", annotate::to_string(patch.type)},
                            {"homography", h},
                            {"rms_px", fit.rms}});
    res.fits.push_back(fit);
  }
  fs::create_directories(out_dir);
  write_png_rgb(out_dir / "gt_mask.png", res.mask);
  write_float_map(out_dir / "concentration.img", res.concentration);
  write_text(out_dir / "annotate.json", j.dump(2) + "\n");
  return res;
}

synth::Scene cmd_synth(const synth::SynthConfig& cfg, const fs::path& out_dir) {
  synth::Scene scene = synth::generate(cfg);
  synth::write_scene(scene, out_dir, cfg.seed);
  return scene;
}

}  // namespace mm::pipeline
