#include "mm/landcover.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "mm/error.hpp"
#include "mm/image_io.hpp"

namespace mm::landcover {

std::size_t ClassMap::labeled() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

int ndvi_bin(double ndvi) {
  const int bin = static_cast<int>(std::floor((ndvi + 1.0) * (kNdviBins / 2.0)));
  return std::clamp(bin, 0, kNdviBins - 1);
}

ClassMap classify(const IndexMap& ndvi, const IndexMap& ndwi, double water_threshold) {
  if (ndvi.rows != ndwi.rows || ndvi.cols != ndwi.cols) {
    fail(ErrorCode::DimensionMismatch, "NDVI and NDWI maps differ in size");
  }
  ClassMap cm;
  cm.rows = ndvi.rows;
  cm.cols = ndvi.cols;
  cm.classes = kNdviBins + 1;
  cm.labels.assign(ndvi.size(), kUnlabeled);
  cm.counts.assign(cm.classes, 0);
  cm.order.push_back(kWaterClass);
  for (int b = 0; b < kNdviBins; ++b) cm.order.push_back(b);
  for (int k = 0; k < cm.classes; ++k) cm.members.push_back({k});

  for (std::size_t i = 0; i < ndvi.size(); ++i) {
    int label = kUnlabeled;
    if (ndwi.valid[i] && ndwi.values[i] > water_threshold) {
      label = kWaterClass;
    } else if (ndvi.valid[i]) {
      label = ndvi_bin(ndvi.values[i]);
    }
    cm.labels[i] = label;
    if (label != kUnlabeled) ++cm.counts[label];
  }
  return cm;
}

ClassMap merge_small_classes(const ClassMap& cm, std::size_t min_pixels) {
  // Groups in adjacency order; each group is a list of input labels.
  struct Group {
    std::vector<int> labels;
    std::size_t count = 0;
  };
  std::vector<Group> groups;
  for (int label : cm.order) groups.push_back({{label}, cm.counts[label]});

  while (groups.size() > 1) {
    std::size_t smallest = 0;
    for (std::size_t i = 1; i < groups.size(); ++i) {
      if (groups[i].count < groups[smallest].count) smallest = i;
    }
    if (groups[smallest].count >= min_pixels) break;
    std::size_t target;
    if (smallest == 0) {
      target = 1;
    } else if (smallest + 1 == groups.size()) {
      target = smallest - 1;
    } else {
      target = groups[smallest + 1].count < groups[smallest - 1].count ? smallest + 1 : smallest - 1;
    }
    Group& dst = groups[target];
    Group& src = groups[smallest];
    // Keep labels in adjacency order inside the merged group.
    if (target < smallest) {
      dst.labels.insert(dst.labels.end(), src.labels.begin(), src.labels.end());
    } else {
      dst.labels.insert(dst.labels.begin(), src.labels.begin(), src.labels.end());
    }
    dst.count += src.count;
    groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(smallest));
  }

  std::vector<int> relabel(cm.classes, kUnlabeled);
  ClassMap out;
  out.rows = cm.rows;
  out.cols = cm.cols;
  out.classes = static_cast<int>(groups.size());
  for (int g = 0; g < out.classes; ++g) {
    out.order.push_back(g);
    out.counts.push_back(groups[g].count);
    std::vector<int> bins;
    for (int label : groups[g].labels) {
      relabel[label] = g;
      bins.insert(bins.end(), cm.members[label].begin(), cm.members[label].end());
    }
    out.members.push_back(std::move(bins));
  }
  out.labels.resize(cm.labels.size());
  std::transform(cm.labels.begin(), cm.labels.end(), out.labels.begin(),
                 [&](int l) { return l == kUnlabeled ? kUnlabeled : relabel[l]; });
  return out;
}

ClassStats class_stats(const io::HyperCube& cube, const ClassMap& cm, double eps_scale) {
  if (cm.rows != cube.height() || cm.cols != cube.width()) {
    fail(ErrorCode::DimensionMismatch, "class map does not match cube");
  }
  auto models = accumulate_models(
      cube, [&](int r, int c) { return cm.label_at(r, c); }, cm.classes, eps_scale, 2);
  for (int k = 0; k < cm.classes; ++k) {
    if (models[k].mean.size() == 0) {
      fail(ErrorCode::DegenerateClass, "class " + std::to_string(k) + " has " + std::to_string(models[k].count) +
                                           " valid samples (need >= 2)");
    }
  }
  return {eps_scale, std::move(models)};
}

namespace {

constexpr char kMagic[4] = {'M', 'M', 'C', 'S'};

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) fail(ErrorCode::IoFailure, "truncated class-stats file");
  return v;
}

}  // namespace

void save_class_stats(const std::filesystem::path& path, const ClassStats& stats) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoFailure, "cannot write " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kStatsFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(stats.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(stats.dims()));
  put<double>(out, stats.eps_scale);
  for (const auto& m : stats.classes) {
    put<std::uint64_t>(out, m.count);
    put<double>(out, m.eps);
    out.write(reinterpret_cast<const char*>(m.mean.data()), static_cast<std::streamsize>(m.mean.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(m.cov.data()), static_cast<std::streamsize>(m.cov.size() * sizeof(double)));
  }
  if (!out) fail(ErrorCode::IoFailure, "write failed for " + path.string());
}

ClassStats load_class_stats(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoFailure, "cannot read " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) fail(ErrorCode::IoFailure, "not a class-stats file");
  const auto version = get<std::uint32_t>(in);
  if (version != kStatsFormatVersion) {
    fail(ErrorCode::IoFailure, "class-stats format version " + std::to_string(version) + " unsupported");
  }
  const auto k = get<std::uint32_t>(in);
  const auto n = static_cast<Eigen::Index>(get<std::uint32_t>(in));
  ClassStats stats;
  stats.eps_scale = get<double>(in);
  for (std::uint32_t i = 0; i < k; ++i) {
    const auto count = get<std::uint64_t>(in);
    get<double>(in);  // ridge is recomputed from the covariance
    Eigen::VectorXd mean(n);
    Eigen::MatrixXd cov(n, n);
    in.read(reinterpret_cast<char*>(mean.data()), static_cast<std::streamsize>(n * sizeof(double)));
    in.read(reinterpret_cast<char*>(cov.data()), static_cast<std::streamsize>(n * n * sizeof(double)));
    if (!in) fail(ErrorCode::IoFailure, "truncated class-stats file");
    stats.classes.push_back(make_model(count, std::move(mean), std::move(cov), stats.eps_scale));
  }
  return stats;
}

void write_class_png(const std::filesystem::path& path, const ClassMap& cm) {
  std::vector<std::uint8_t> gray(cm.labels.size());
  for (std::size_t i = 0; i < gray.size(); ++i) {
    gray[i] = static_cast<std::uint8_t>(std::clamp(cm.labels[i] + 1, 0, 255));
  }
  write_png_gray(path, cm.rows, cm.cols, gray);
}

}  // namespace mm::landcover
