#include "mm/slf.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mm/error.hpp"

namespace mm::slf {

namespace {

void check_target(const io::HyperCube& cube, const spectra::TargetSignature& t) {
  if (t.size() != cube.bands()) {
    fail(ErrorCode::DimensionMismatch, "target signature has " + std::to_string(t.size()) + " bands, cube " +
                                           std::to_string(cube.bands()));
  }
}

// Scores every valid pixel with the filter chosen by `filter_of`, which
// returns nullptr to leave a pixel invalid.
template <typename FilterOf>
EnhancementMap score_cube(const io::HyperCube& cube, FilterOf&& filter_of) {
  EnhancementMap out(cube.height(), cube.width());
  for (int r = 0; r < cube.height(); ++r) {
    const io::Block line = cube.read_rows({r, r + 1});
    for (int c = 0; c < cube.width(); ++c) {
      const std::size_t i = out.index(r, c);
      const MatchedFilter* f = line.pixel_valid(0, c) ? filter_of(r, c) : nullptr;
      if (!f) {
        out.values[i] = 0.0;
        out.valid[i] = 0;
        continue;
      }
      out.values[i] = f->score(line.pixel(0, c));
      out.valid[i] = 1;
    }
  }
  return out;
}

}  // namespace

Eigen::VectorXd to_eigen(const spectra::TargetSignature& t) {
  return Eigen::Map<const Eigen::VectorXd>(t.values.data(), static_cast<Eigen::Index>(t.values.size()));
}

SensorGrouping sensor_groups(const io::GltMap& glt, int window) {
  if (window < 1) fail(ErrorCode::InvalidArgument, "sensor window must be >= 1");
  SensorGrouping g;
  g.rows = glt.rows;
  g.cols = glt.cols;
  g.window = window;
  g.group.resize(glt.orig_col.size());
  int max_group = -1;
  for (std::size_t i = 0; i < glt.orig_col.size(); ++i) {
    const int col = glt.orig_col[i];
    g.group[i] = col > 0 ? (col - 1) / window : -1;
    max_group = std::max(max_group, g.group[i]);
  }
  g.groups = max_group + 1;
  return g;
}

EnhancementMap matched_filter_traditional(const io::HyperCube& cube, const spectra::TargetSignature& t,
                                          int column_window, double eps_scale) {
  if (column_window < 1) fail(ErrorCode::InvalidArgument, "column window must be >= 1");
  check_target(cube, t);
  const int windows = (cube.width() + column_window - 1) / column_window;
  const auto models = accumulate_models(
      cube, [&](int, int c) { return c / column_window; }, windows, eps_scale, 2);
  const Eigen::VectorXd target = to_eigen(t);
  std::vector<MatchedFilter> filters;
  for (int w = 0; w < windows; ++w) {
    if (models[w].mean.size() == 0) {
      fail(ErrorCode::DegenerateWindow, "column window " + std::to_string(w) + " has " +
                                            std::to_string(models[w].count) + " valid pixels");
    }
    filters.push_back(make_filter(models[w], target));
  }
  return score_cube(cube, [&](int, int c) { return &filters[c / column_window]; });
}

std::size_t min_cell_samples(int bands) { return std::max<std::size_t>(2 * static_cast<std::size_t>(bands), 1000); }

EnhancementMap slf_enhance(const io::HyperCube& cube, const landcover::ClassMap& cm, const landcover::ClassStats& stats,
                           const spectra::TargetSignature& t, const SensorGrouping* grouping, SlfReport* report) {
  check_target(cube, t);
  if (cm.rows != cube.height() || cm.cols != cube.width()) {
    fail(ErrorCode::DimensionMismatch, "class map does not match cube");
  }
  if (stats.size() < cm.classes) {
    fail(ErrorCode::MissingClassStats, "statistics for " + std::to_string(stats.size()) + " of " +
                                           std::to_string(cm.classes) + " classes");
  }
  const Eigen::VectorXd target = to_eigen(t);
  std::vector<MatchedFilter> class_filters;
  for (int k = 0; k < cm.classes; ++k) {
    const auto& m = stats.classes[k];
    if (m.count < 2 || m.mean.size() != cube.bands()) {
      fail(ErrorCode::DegenerateClass, "class " + std::to_string(k) + " has no usable statistics");
    }
    class_filters.push_back(make_filter(m, target));
  }

  SlfReport local;
  local.min_cell_samples = min_cell_samples(cube.bands());
  if (!grouping) {
    EnhancementMap out = score_cube(cube, [&](int r, int c) -> const MatchedFilter* {
      const int k = cm.label_at(r, c);
      return k < 0 ? nullptr : &class_filters[k];
    });
    if (report) *report = local;
    return out;
  }

  if (grouping->rows != cube.height() || grouping->cols != cube.width()) {
    fail(ErrorCode::DimensionMismatch, "sensor grouping does not match cube");
  }
  const int groups = std::max(grouping->groups, 1);
  auto cell_of = [&](int r, int c) {
    const int k = cm.label_at(r, c);
    const int g = grouping->group_at(r, c);
    return (k < 0 || g < 0) ? -1 : k * groups + g;
  };
  const auto cell_models =
      accumulate_models(cube, cell_of, cm.classes * groups, stats.eps_scale, local.min_cell_samples);
  std::vector<MatchedFilter> cell_filters(cell_models.size());
  std::vector<const MatchedFilter*> chosen(cell_models.size(), nullptr);
  for (std::size_t i = 0; i < cell_models.size(); ++i) {
    if (cell_models[i].mean.size() != 0) {
      cell_filters[i] = make_filter(cell_models[i], target);
      chosen[i] = &cell_filters[i];
      ++local.cells_with_own_stats;
    } else {
      chosen[i] = &class_filters[static_cast<int>(i) / groups];
      if (cell_models[i].count > 0) ++local.cells_fallback;
    }
  }
  EnhancementMap out = score_cube(cube, [&](int r, int c) -> const MatchedFilter* {
    const int k = cm.label_at(r, c);
    if (k < 0) return nullptr;
    const int cell = cell_of(r, c);
    return cell < 0 ? &class_filters[k] : chosen[cell];
  });
  if (report) *report = local;
  return out;
}

double mgr(const Eigen::VectorXd& alpha, const Eigen::VectorXd& t, const Eigen::MatrixXd& cov) {
  if (alpha.size() != t.size() || cov.rows() != t.size() || cov.cols() != t.size()) {
    fail(ErrorCode::DimensionMismatch, "MGR operands differ in size");
  }
  const double denom = alpha.dot(cov * alpha);
  if (!(denom > 0.0)) fail(ErrorCode::ZeroDenominator, "alpha^T Cov alpha <= 0");
  const double num = alpha.dot(t);
  return num * num / denom;
}

Eigen::VectorXd optimal_filter(const Eigen::VectorXd& t, const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) fail(ErrorCode::NotPositiveDefinite, "covariance is not positive definite");
  const Eigen::VectorXd w = llt.solve(t);
  const double n2 = t.dot(w);
  if (!(n2 > 0.0)) fail(ErrorCode::ZeroDenominator, "t^T Cov^-1 t <= 0");
  return w / std::sqrt(n2);
}

}  // namespace mm::slf
