#include "mm/background.hpp"

#include <cmath>
#include <string>

#include "mm/error.hpp"

namespace mm {

namespace {

constexpr int kChunk = 256;

// Centered rows staged per cell and folded into the scatter matrix in
// fixed-size chunks.
struct ScatterCell {
  Eigen::MatrixXd staged;
  int used = 0;
  Eigen::MatrixXd scatter;

  void flush() {
    if (used == 0) return;
    scatter.selfadjointView<Eigen::Lower>().rankUpdate(staged.topRows(used).transpose());
    used = 0;
  }
};

}  // namespace

Eigen::MatrixXd BackgroundModel::regularized_inverse() const {
  return factor.solve(Eigen::MatrixXd::Identity(dims(), dims()));
}

double ridge(const Eigen::MatrixXd& cov, double eps_scale) {
  const double tr = cov.trace();
  if (tr > 0.0) return eps_scale * tr / static_cast<double>(cov.rows());
  return eps_scale;
}

BackgroundModel make_model(std::size_t count, Eigen::VectorXd mean, Eigen::MatrixXd cov, double eps_scale) {
  BackgroundModel m;
  m.count = count;
  m.mean = std::move(mean);
  m.cov = std::move(cov);
  m.eps = ridge(m.cov, eps_scale);
  Eigen::MatrixXd reg = m.cov;
  reg.diagonal().array() += m.eps;
  m.factor.compute(reg);
  if (m.factor.info() != Eigen::Success) {
    fail(ErrorCode::NotPositiveDefinite, "covariance of " + std::to_string(count) + " samples is not positive definite "
                                         "after regularization (eps = " + std::to_string(m.eps) + ")");
  }
  return m;
}

std::vector<BackgroundModel> accumulate_models(const io::HyperCube& cube, const std::function<int(int, int)>& cell_of,
                                               int cells, double eps_scale, std::size_t min_count) {
  const int n0 = cube.bands();
  const int w0 = cube.width();
  std::vector<std::size_t> counts(cells, 0);
  std::vector<Eigen::VectorXd> sums(cells, Eigen::VectorXd::Zero(n0));
  std::vector<int> ids(static_cast<std::size_t>(w0));

  auto row_ids = [&](int r, const io::Block& line) {
    for (int c = 0; c < w0; ++c) {
      int id = line.pixel_valid(0, c) ? cell_of(r, c) : -1;
      if (id >= cells) fail(ErrorCode::OutOfBounds, "cell id " + std::to_string(id) + " >= " + std::to_string(cells));
      ids[c] = id;
    }
  };

  for (int r = 0; r < cube.height(); ++r) {
    const io::Block line = cube.read_rows({r, r + 1});
    row_ids(r, line);
    for (int c = 0; c < w0; ++c) {
      if (ids[c] < 0) continue;
      sums[ids[c]] += Eigen::Map<const Eigen::VectorXd>(line.pixel(0, c), n0);
      ++counts[ids[c]];
    }
  }

  std::vector<Eigen::VectorXd> means(cells);
  std::vector<ScatterCell> scatter(cells);
  for (int k = 0; k < cells; ++k) {
    if (counts[k] < min_count || counts[k] == 0) continue;
    means[k] = sums[k] / static_cast<double>(counts[k]);
    scatter[k].staged.resize(kChunk, n0);
    scatter[k].scatter = Eigen::MatrixXd::Zero(n0, n0);
  }

  for (int r = 0; r < cube.height(); ++r) {
    const io::Block line = cube.read_rows({r, r + 1});
    row_ids(r, line);
    for (int c = 0; c < w0; ++c) {
      const int k = ids[c];
      if (k < 0 || means[k].size() == 0) continue;
      ScatterCell& cell = scatter[k];
      cell.staged.row(cell.used++) = (Eigen::Map<const Eigen::VectorXd>(line.pixel(0, c), n0) - means[k]).transpose();
      if (cell.used == kChunk) cell.flush();
    }
  }

  std::vector<BackgroundModel> out(cells);
  for (int k = 0; k < cells; ++k) {
    if (means[k].size() == 0) {
      out[k].count = counts[k];
      continue;
    }
    scatter[k].flush();
    Eigen::MatrixXd cov = scatter[k].scatter.selfadjointView<Eigen::Lower>();
    cov /= static_cast<double>(counts[k]);
    out[k] = make_model(counts[k], std::move(means[k]), std::move(cov), eps_scale);
  }
  return out;
}

double MatchedFilter::score(const double* pixel) const {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < mean.size(); ++i) acc += (pixel[i] - mean[i]) * weights[i];
  return acc;
}

MatchedFilter make_filter(const BackgroundModel& model, const Eigen::VectorXd& target) {
  if (target.size() != model.dims()) {
    fail(ErrorCode::DimensionMismatch, "target has " + std::to_string(target.size()) + " bands, model " +
                                           std::to_string(model.dims()));
  }
  const Eigen::VectorXd whitened = model.solve(target);
  const double norm2 = target.dot(whitened);
  if (!(norm2 > 0.0)) fail(ErrorCode::ZeroDenominator, "t^T Cov^-1 t is not positive");
  return {model.mean, whitened / std::sqrt(norm2)};
}

}  // namespace mm
