// mm: command-line front end for the methane mapping pipeline.
#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mm/error.hpp"
#include "mm/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using mm::pipeline::PipelineConfig;

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUser = 2;

// Options shared by enhance and detect, applied over an optional config file.
struct PipelineArgs {
  std::string config;
  std::vector<std::pair<std::string, std::string>> overrides;
  std::vector<std::string> sets;

  void add(CLI::App* cmd, const std::string& flag, const std::string& key, const std::string& help) {
    cmd->add_option_function<std::string>(
        flag, [this, key](const std::string& v) { overrides.emplace_back(key, v); }, help);
  }

  PipelineConfig resolve() const {
    PipelineConfig cfg = config.empty() ? PipelineConfig{} : PipelineConfig::from_file(config);
    for (const auto& [k, v] : overrides) cfg.set(k, v);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) mm::fail(mm::ErrorCode::InvalidArgument, "--set expects key=value, got " + s);
      cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    return cfg;
  }
};

void add_pipeline_options(CLI::App* cmd, PipelineArgs& a) {
  cmd->add_option("-c,--config", a.config, "key=value config file");
  a.add(cmd, "--cube", "cube", "radiance cube (ENVI BIL)");
  a.add(cmd, "--header", "header", "header path if not next to the cube");
  a.add(cmd, "--glt", "glt", "geometric lookup table (enables sensor grouping)");
  a.add(cmd, "--signature", "signature", "target signature table");
  a.add(cmd, "-o,--out", "out_dir", "output directory");
  a.add(cmd, "--filter", "filter", "slf | traditional");
  a.add(cmd, "--sensor-window", "sensor_window", "sensor columns per group");
  a.add(cmd, "--column-window", "column_window", "columns per window (traditional filter)");
  a.add(cmd, "--eps-scale", "eps_scale", "covariance ridge scale");
  a.add(cmd, "--min-pixels", "min_pixels", "land-cover class size floor");
  a.add(cmd, "--seed", "seed", "random seed");
  cmd->add_option("--set", a.sets, "extra key=value overrides (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hyperspectral methane plume mapping"};
  app.require_subcommand(1);

  PipelineArgs enhance_args;
  auto* enhance = app.add_subcommand("enhance", "per-pixel CH4 enhancement map");
  add_pipeline_options(enhance, enhance_args);

  PipelineArgs detect_args;
  auto* detect = app.add_subcommand("detect", "tiled detector forward pass with fused masks");
  add_pipeline_options(detect, detect_args);
  detect_args.add(detect, "--enhancement", "enhancement", "precomputed enhancement map");
  detect_args.add(detect, "--tile-size", "tile_size", "tile edge in pixels (multiple of 32)");
  detect_args.add(detect, "--overlap", "tile_overlap", "tile overlap in pixels");
  detect_args.add(detect, "--jobs", "jobs", "tiles processed concurrently");

  std::string pred_dir, gt_dir, eval_out;
  double iou = 0.5;
  auto* eval = app.add_subcommand("eval", "mAP / mIOU of predictions against ground truth");
  eval->add_option("--pred", pred_dir, "prediction directory")->required();
  eval->add_option("--gt", gt_dir, "ground-truth directory")->required();
  eval->add_option("-o,--out", eval_out, "metrics JSON path")->required();
  eval->add_option("--iou", iou, "IoU threshold for mAP");

  std::string tile_cube, tile_out;
  int tile_size = 256, tile_overlap = 128;
  bool tile_extract = false;
  auto* tile = app.add_subcommand("tile", "plan (and optionally cut) overlapping tiles");
  tile->add_option("--cube", tile_cube, "radiance cube")->required();
  tile->add_option("--size", tile_size, "tile edge");
  tile->add_option("--overlap", tile_overlap, "overlap");
  tile->add_option("-o,--out", tile_out, "output directory")->required();
  tile->add_flag("--extract", tile_extract, "write each tile as its own cube");

  std::string grid_path, ann_out;
  std::vector<std::string> patches;
  auto* ann = app.add_subcommand("annotate-map", "warp annotation patches into flightline pixel space");
  ann->add_option("--grid", grid_path, "geographic grid raster (x, y bands)")->required();
  ann->add_option("--patch", patches, "annotation patch raster (repeatable)")->required();
  ann->add_option("-o,--out", ann_out, "output directory")->required();

  std::string map_path, png_path, ramp_name = "gray";
  std::optional<double> vmin, vmax;
  auto* plot = app.add_subcommand("plot", "render a float map to PNG");
  plot->add_option("--map", map_path, "float map")->required();
  plot->add_option("-o,--out", png_path, "PNG path")->required();
  plot->add_option("--ramp", ramp_name, "gray | heat")->check(CLI::IsMember({"gray", "heat"}));
  plot->add_option("--vmin", vmin, "value mapped to the low end");
  plot->add_option("--vmax", vmax, "value mapped to the high end");

  mm::synth::SynthConfig scfg = mm::synth::SynthConfig::two_terrain();
  std::string synth_out, layout = "rows";
  double amplitude = scfg.plumes.front().amplitude;
  int n_plumes = 1;
  auto* synth = app.add_subcommand("synth", "write a synthetic scene with an injected plume");
  synth->add_option("-o,--out", synth_out, "output directory")->required();
  synth->add_option("--rows", scfg.rows, "rows");
  synth->add_option("--cols", scfg.cols, "columns");
  synth->add_option("--bands", scfg.bands, "bands");
  synth->add_option("--seed", scfg.seed, "noise seed");
  synth->add_option("--layout", layout, "rows | patchwork")->check(CLI::IsMember({"rows", "patchwork"}));
  synth->add_option("--amplitude", amplitude, "plume amplitude");
  synth->add_option("--plumes", n_plumes, "number of plumes (0 for background only)");
  synth->add_option("--noise", scfg.noise, "noise multiplier");
  synth->add_option("--soil-noise", scfg.soil_noise, "soil noise relative to vegetation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUser;
  }

  try {
    if (*enhance) {
      mm::pipeline::cmd_enhance(enhance_args.resolve());
    } else if (*detect) {
      const auto cfg = detect_args.resolve();
      const auto res = mm::pipeline::cmd_detect(cfg);
      std::size_t kept = 0;
      for (const auto& t : res.tiles) {
        for (Eigen::Index q = 0; q < t.score.size(); ++q) kept += t.score(q) >= cfg.detector.confidence_threshold;
      }
      std::cout << res.tiles.size() << " tiles, " << kept << " detections above threshold, " << res.mask.count()
                << " mask pixels\n";
    } else if (*eval) {
      const auto r = mm::pipeline::cmd_eval(pred_dir, gt_dir, eval_out, iou);
      std::cout << "map_50 " << r.map_50 << "  miou " << r.miou << "  images " << r.n_images << '\n';
    } else if (*tile) {
      const auto tiles = mm::pipeline::cmd_tile(tile_cube, tile_size, tile_overlap, tile_out, tile_extract);
      std::cout << tiles.size() << " tiles\n";
    } else if (*ann) {
      std::vector<fs::path> paths(patches.begin(), patches.end());
      mm::pipeline::cmd_annotate_map(grid_path, paths, ann_out);
    } else if (*plot) {
      const auto r = mm::pipeline::cmd_plot(map_path, png_path,
                                            ramp_name == "heat" ? mm::pipeline::Ramp::Heat : mm::pipeline::Ramp::Gray,
                                            vmin, vmax);
      std::cout << "vmin " << r.vmin << "  vmax " << r.vmax << '\n';
    } else if (*synth) {
      scfg.layout = layout == "patchwork" ? mm::synth::Layout::Patchwork : mm::synth::Layout::TwoTerrainRows;
      auto base = scfg.plumes.front();
      scfg.plumes.clear();
      for (int i = 0; i < n_plumes; ++i) {
        base.amplitude = amplitude;
        base.row = scfg.rows * (0.75 - 0.5 * (i % 2)) ;
        base.col = scfg.cols * (i + 1.0) / (n_plumes + 1.0);
        base.cls = i % 2 == 0 ? mm::match::PlumeClass::PointSource : mm::match::PlumeClass::DiffusedSource;
        scfg.plumes.push_back(base);
      }
      mm::pipeline::cmd_synth(scfg, synth_out);
    }
  } catch (const mm::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUser;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitOk;
}
