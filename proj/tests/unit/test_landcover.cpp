#include <algorithm>
#include <cmath>
#include <random>

#include "../support/oracles.hpp"
#include "../support/scratch.hpp"
#include "doctest.h"
#include "mm/error.hpp"
#include "mm/landcover.hpp"

using namespace mm;
using namespace mm::landcover;

namespace {

IndexMap index_map(const std::vector<double>& v, int cols) {
  IndexMap m(static_cast<int>(v.size()) / cols, cols);
  m.values = v;
  std::fill(m.valid.begin(), m.valid.end(), 1);
  return m;
}

// Labels laid out so that class k has counts[k] pixels, one row.
ClassMap from_counts(const std::vector<std::size_t>& counts) {
  std::vector<int> labels;
  for (std::size_t k = 0; k < counts.size(); ++k) labels.insert(labels.end(), counts[k], static_cast<int>(k));
  return oracle::make_class_map(1, static_cast<int>(labels.size()), static_cast<int>(counts.size()), labels);
}

}  // namespace

TEST_CASE("NDVI binning") {
  CHECK(ndvi_bin(-1.0) == 0);
  CHECK(ndvi_bin(1.0) == 19);
  CHECK(ndvi_bin(0.0) == 10);
  CHECK(ndvi_bin(-0.95) == 0);
  CHECK(ndvi_bin(-0.85) == 1);
  CHECK(ndvi_bin(0.99) == 19);
}

TEST_CASE("classify with water override") {
  const auto ndvi = index_map({-1.0, 1.0, 0.0, 0.05}, 4);
  const auto ndwi = index_map({0.0, 0.0, 0.3, 0.5}, 4);
  const auto cm = classify(ndvi, ndwi);
  CHECK(cm.classes == 21);
  CHECK(cm.label_at(0, 0) == 0);
  CHECK(cm.label_at(0, 1) == 19);
  CHECK(cm.label_at(0, 2) == 10);  // 0.3 is not above the threshold
  CHECK(cm.label_at(0, 3) == kWaterClass);
  CHECK(cm.counts[kWaterClass] == 1);
  CHECK(cm.order.front() == kWaterClass);
}

TEST_CASE("invalid index pixels stay unlabeled") {
  auto ndvi = index_map({0.2, 0.2}, 2);
  auto ndwi = index_map({0.0, 0.0}, 2);
  ndvi.valid[1] = 0;
  const auto cm = classify(ndvi, ndwi);
  CHECK(cm.label_at(0, 1) == kUnlabeled);
  CHECK(cm.labeled() == 1);
}

TEST_CASE("merge examples") {
  SUBCASE("fixpoint") {
    const auto cm = from_counts({120, 130, 140});
    const auto out = merge_small_classes(cm, 100);
    CHECK(out.classes == 3);
    CHECK(out.labels == cm.labels);
  }
  SUBCASE("single merge") {
    const auto out = merge_small_classes(from_counts({50, 20000}), 10000);
    CHECK(out.classes == 1);
    CHECK(out.counts[0] == 20050);
  }
  SUBCASE("smallest folds into its smaller neighbour, then stop") {
    const auto out = merge_small_classes(from_counts({5000, 6000, 12000}), 10000);
    CHECK(out.classes == 2);
    CHECK(out.counts == std::vector<std::size_t>{11000, 12000});
    CHECK(out.members[0] == std::vector<int>{0, 1});
  }
  SUBCASE("one class remains when everything is small") {
    const auto out = merge_small_classes(from_counts({3, 4, 5}), 100);
    CHECK(out.classes == 1);
    CHECK(out.counts[0] == 12);
  }
}

TEST_CASE("property: merging partitions the same pixels") {
  std::mt19937 rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = std::uniform_int_distribution<int>(1, 21)(rng);
    std::vector<std::size_t> counts(k);
    for (auto& c : counts) c = std::uniform_int_distribution<int>(0, 300)(rng);
    const auto cm = from_counts(counts);
    const std::size_t floor = std::uniform_int_distribution<int>(0, 400)(rng);
    const auto out = merge_small_classes(cm, floor);

    REQUIRE(out.classes <= cm.classes);
    std::size_t total = 0;
    for (auto c : out.counts) total += c;
    REQUIRE(total == cm.labeled());
    REQUIRE(*std::min_element(out.counts.begin(), out.counts.end()) >=
            *std::min_element(cm.counts.begin(), cm.counts.end()));
    if (out.classes > 1) {
      for (auto c : out.counts) REQUIRE(c >= floor);
    }
    // Recount labels directly.
    std::vector<std::size_t> seen(out.classes, 0);
    for (int l : out.labels) ++seen[l];
    REQUIRE(seen == out.counts);
    // Each merged label keeps only pixels from its member bins.
    for (std::size_t i = 0; i < cm.labels.size(); ++i) {
      const auto& m = out.members[out.labels[i]];
      REQUIRE(std::find(m.begin(), m.end(), cm.labels[i]) != m.end());
    }
  }
}

TEST_CASE("class statistics by hand") {
  SUBCASE("identical pixels give zero covariance and a pure ridge") {
    const auto cube = oracle::make_cube(1, 3, 2, {2, 5, 2, 5, 2, 5});
    const auto st = class_stats(cube, oracle::make_class_map(1, 3, 1, {0, 0, 0}), 1e-6);
    const auto& m = st.classes[0];
    CHECK(m.mean(0) == 2.0);
    CHECK(m.mean(1) == 5.0);
    CHECK(m.cov.isZero(0.0));
    const Eigen::MatrixXd inv = m.regularized_inverse();
    CHECK(inv(0, 0) == doctest::Approx(1.0 / m.eps));
    CHECK(inv(0, 1) == 0.0);
  }
  SUBCASE("two samples") {
    const auto cube = oracle::make_cube(1, 2, 2, {0, 0, 2, 0});
    const auto st = class_stats(cube, oracle::make_class_map(1, 2, 1, {0, 0}), 1e-6);
    const auto& m = st.classes[0];
    CHECK(m.mean(0) == 1.0);
    CHECK(m.mean(1) == 0.0);
    CHECK(m.cov(0, 0) == 1.0);
    CHECK(m.cov(0, 1) == 0.0);
    CHECK(m.cov(1, 1) == 0.0);
    CHECK(m.eps == doctest::Approx(1e-6 * 1.0 / 2));
  }
  SUBCASE("one-pixel class is degenerate") {
    const auto cube = oracle::make_cube(1, 3, 1, {1, 2, 3});
    CHECK_THROWS_AS(class_stats(cube, oracle::make_class_map(1, 3, 2, {0, 0, 1}), 1e-6), Error);
  }
}

TEST_CASE("isotropic Monte Carlo covariance") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> g(0.0, 2.0);
  const int n = 100000, bands = 3;
  std::vector<double> v(static_cast<std::size_t>(n) * bands);
  for (double& x : v) x = 10.0 + g(rng);
  const auto cube = oracle::make_cube(1, n, bands, v);
  const auto st = class_stats(cube, oracle::make_class_map(1, n, 1, std::vector<int>(n, 0)));
  for (int b = 0; b < bands; ++b) CHECK(st.classes[0].cov(b, b) == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("property: covariances are PSD and the regularized inverse is accurate") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const int rows = 6, cols = 8;
    const int bands = std::uniform_int_distribution<int>(2, 12)(rng);
    const int classes = std::uniform_int_distribution<int>(1, 3)(rng);
    std::normal_distribution<double> g;
    std::vector<double> v(rows * cols * bands);
    for (double& x : v) x = 50 + 5 * g(rng);
    std::vector<int> labels(rows * cols);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % classes);
    const auto cube = oracle::make_cube(rows, cols, bands, v);
    const auto st = class_stats(cube, oracle::make_class_map(rows, cols, classes, labels));
    for (const auto& m : st.classes) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.cov);
      REQUIRE(es.eigenvalues().minCoeff() >= -1e-9 * m.cov.trace() / bands);
      const Eigen::MatrixXd reg = m.cov + m.eps * Eigen::MatrixXd::Identity(bands, bands);
      const Eigen::MatrixXd err = reg * m.regularized_inverse() - Eigen::MatrixXd::Identity(bands, bands);
      REQUIRE(err.cwiseAbs().maxCoeff() <= 1e-6);
    }
  }
}

TEST_CASE("invalid pixels are excluded from statistics") {
  const auto cube = oracle::make_cube(1, 4, 1, {1, 3, io::kDefaultNoData, 100});
  const auto st = class_stats(cube, oracle::make_class_map(1, 4, 1, {0, 0, 0, kUnlabeled}));
  CHECK(st.classes[0].count == 2);
  CHECK(st.classes[0].mean(0) == 2.0);
}

TEST_CASE("class statistics survive a save/load round trip") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  std::vector<double> v(5 * 5 * 3);
  for (double& x : v) x = g(rng);
  const auto cube = oracle::make_cube(5, 5, 3, v);
  std::vector<int> labels(25);
  for (int i = 0; i < 25; ++i) labels[i] = i % 2;
  const auto st = class_stats(cube, oracle::make_class_map(5, 5, 2, labels), 1e-4);
  const auto path = testutil::scratch_dir("landcover_stats") / "stats.bin";
  save_class_stats(path, st);
  const auto back = load_class_stats(path);
  REQUIRE(back.size() == 2);
  CHECK(back.eps_scale == 1e-4);
  for (int k = 0; k < 2; ++k) {
    CHECK(back.classes[k].count == st.classes[k].count);
    CHECK(back.classes[k].mean == st.classes[k].mean);
    CHECK(back.classes[k].cov == st.classes[k].cov);
    CHECK(back.classes[k].eps == st.classes[k].eps);
  }
}
