#include "mm/matchloss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mm/error.hpp"

namespace mm::match {

namespace {

constexpr double kTiny = 1e-12;

void check_box(const Box& b) {
  if (!(b.w > 0.0) || !(b.h > 0.0) || !std::isfinite(b.cx) || !std::isfinite(b.cy) || !std::isfinite(b.w) ||
      !std::isfinite(b.h)) {
    fail(ErrorCode::DegenerateBox, "box must have finite centre and positive width/height");
  }
}

double intersection(const Box& a, const Box& b) {
  const double iw = std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0());
  const double ih = std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0());
  return iw > 0.0 && ih > 0.0 ? iw * ih : 0.0;
}

double neg_log(double p) { return -std::log(std::max(p, kTiny)); }

}  // namespace

std::string to_string(PlumeClass c) { return c == PlumeClass::PointSource ? "point_source" : "diffused_source"; }

PlumeClass plume_class_from_string(const std::string& s) {
  if (s == "point_source" || s == "point") return PlumeClass::PointSource;
  if (s == "diffused_source" || s == "diffused") return PlumeClass::DiffusedSource;
  fail(ErrorCode::InvalidArgument, "unknown plume class '" + s + "'");
}

Assignment hungarian(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  if (!cost.allFinite()) fail(ErrorCode::NonFiniteCost, "cost matrix has non-finite entries");
  if (n > m) {
    fail(ErrorCode::TooFewPredictions, std::to_string(n) + " ground truths but only " + std::to_string(m) +
                                           " predictions");
  }
  Assignment out;
  if (n == 0) return out;

  // Shortest augmenting path with row/column potentials; 1-based, column 0
  // is the virtual source.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  out.pred_of_gt.assign(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) out.pred_of_gt[p[j] - 1] = j - 1;
  }
  for (int g = 0; g < n; ++g) out.cost += cost(g, out.pred_of_gt[g]);
  return out;
}

double box_iou(const Box& a, const Box& b) {
  check_box(a);
  check_box(b);
  const double inter = intersection(a, b);
  return inter / (a.area() + b.area() - inter);
}

double giou(const Box& a, const Box& b) {
  check_box(a);
  check_box(b);
  const double inter = intersection(a, b);
  const double uni = a.area() + b.area() - inter;
  const double cw = std::max(a.x1(), b.x1()) - std::min(a.x0(), b.x0());
  const double ch = std::max(a.y1(), b.y1()) - std::min(a.y0(), b.y0());
  const double c = cw * ch;
  return inter / uni - (c - uni) / c;
}

Eigen::MatrixXd matching_cost(const Predictions& preds, const GroundTruth& gts, const LossWeights& w) {
  if (preds.plume_prob.size() != preds.boxes.size()) {
    fail(ErrorCode::DimensionMismatch, "one probability per predicted box expected");
  }
  Eigen::MatrixXd cost(static_cast<Eigen::Index>(gts.size()), static_cast<Eigen::Index>(preds.size()));
  for (std::size_t g = 0; g < gts.size(); ++g) {
    const Box& t = gts[g].box;
    for (std::size_t p = 0; p < preds.size(); ++p) {
      const Box& b = preds.boxes[p];
      const double l1 = std::fabs(b.cx - t.cx) + std::fabs(b.cy - t.cy) + std::fabs(b.w - t.w) + std::fabs(b.h - t.h);
      cost(g, p) = w.cls * (1.0 - preds.plume_prob[p]) + w.l1 * l1 + w.giou * (1.0 - giou(b, t));
    }
  }
  return cost;
}

BinaryMask downsample_majority(const BinaryMask& mask, int rows, int cols) {
  if (rows <= 0 || cols <= 0 || mask.rows % rows != 0 || mask.cols % cols != 0) {
    fail(ErrorCode::ResolutionMismatch, "mask " + std::to_string(mask.rows) + "x" + std::to_string(mask.cols) +
                                            " does not divide into " + std::to_string(rows) + "x" +
                                            std::to_string(cols));
  }
  const int fr = mask.rows / rows;
  const int fc = mask.cols / cols;
  BinaryMask out(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      int on = 0;
      for (int i = 0; i < fr; ++i) {
        for (int j = 0; j < fc; ++j) on += mask.at(r * fr + i, c * fc + j) ? 1 : 0;
      }
      out.at(r, c) = 2 * on >= fr * fc ? 1 : 0;
    }
  }
  return out;
}

Losses set_loss(const Predictions& preds, const GroundTruth& gts, const Assignment& assignment, const LossWeights& w) {
  if (assignment.pred_of_gt.size() != gts.size()) {
    fail(ErrorCode::DimensionMismatch, "assignment does not cover every ground truth");
  }
  const std::size_t np = preds.size();
  std::vector<int> gt_of_pred(np, -1);
  for (std::size_t g = 0; g < gts.size(); ++g) {
    const int p = assignment.pred_of_gt[g];
    if (p < 0 || static_cast<std::size_t>(p) >= np || gt_of_pred[p] != -1) {
      fail(ErrorCode::InvalidArgument, "assignment is not an injective map into the predictions");
    }
    gt_of_pred[p] = static_cast<int>(g);
  }

  Losses loss;
  if (np > 0) {
    double ce = 0.0;
    for (std::size_t p = 0; p < np; ++p) {
      ce += gt_of_pred[p] >= 0 ? neg_log(preds.plume_prob[p]) : neg_log(1.0 - preds.plume_prob[p]);
    }
    loss.cls = w.cls * ce / static_cast<double>(np);
  }
  if (gts.empty()) return loss;

  const double ng = static_cast<double>(gts.size());
  double l1 = 0.0, gi = 0.0, bce = 0.0;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    const Box& b = preds.boxes[assignment.pred_of_gt[g]];
    const Box& t = gts[g].box;
    l1 += std::fabs(b.cx - t.cx) + std::fabs(b.cy - t.cy) + std::fabs(b.w - t.w) + std::fabs(b.h - t.h);
    gi += 1.0 - giou(b, t);
    if (!preds.heatmaps.empty()) {
      const ScalarMap& heat = preds.heatmaps.at(assignment.pred_of_gt[g]);
      const BinaryMask target = downsample_majority(gts[g].mask, heat.rows, heat.cols);
      double sum = 0.0;
      for (int r = 0; r < heat.rows; ++r) {
        for (int c = 0; c < heat.cols; ++c) {
          sum += target.at(r, c) ? neg_log(heat.at(r, c)) : neg_log(1.0 - heat.at(r, c));
        }
      }
      bce += sum / static_cast<double>(heat.size());
    }
  }
  loss.l1 = w.l1 * l1 / ng;
  loss.giou = w.giou * gi / ng;
  loss.mask = preds.heatmaps.empty() ? 0.0 : w.mask * bce / ng;
  return loss;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.rows != b.rows || a.cols != b.cols) fail(ErrorCode::ResolutionMismatch, "masks differ in size");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    const bool x = a.bits[i] != 0, y = b.bits[i] != 0;
    inter += x && y;
    uni += x || y;
  }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

double miou(const BinaryMask& pred, const std::vector<BinaryMask>& gts) {
  if (gts.empty()) fail(ErrorCode::EmptyGroundTruth, "mIOU needs at least one ground-truth instance");
  for (const auto& g : gts) {
    if (g.rows != pred.rows || g.cols != pred.cols) {
      fail(ErrorCode::ResolutionMismatch, "prediction and ground-truth masks differ in size");
    }
  }
  const auto components = connected_components(pred);
  double sum = 0.0;
  for (const auto& g : gts) {
    double best = 0.0;
    for (const auto& comp : components) best = std::max(best, mask_iou(comp, g));
    sum += best;
  }
  return sum / static_cast<double>(gts.size());
}

double average_precision(const std::vector<ScoredBox>& dets, const std::vector<LabeledBox>& gts, double iou_thr) {
  if (gts.empty()) return 0.0;
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

  std::vector<char> taken(gts.size(), 0);
  std::vector<double> precision, recall;
  std::size_t tp = 0, fp = 0;
  for (std::size_t k : order) {
    const ScoredBox& d = dets[k];
    int best = -1;
    double best_iou = iou_thr;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g] || gts[g].image != d.image) continue;
      const double iou = box_iou(d.box, gts[g].box);
      if (iou >= best_iou && (best < 0 || iou > best_iou)) {
        best = static_cast<int>(g);
        best_iou = iou;
      }
    }
    if (best >= 0) {
      taken[best] = 1;
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(gts.size()));
  }
  // Monotone precision envelope, summed over recall steps.
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

MapResult map_at_iou(const std::vector<ScoredBox>& dets, const std::vector<LabeledBox>& gts, double iou_thr) {
  MapResult result;
  std::map<std::string, std::vector<LabeledBox>> by_class;
  for (const auto& g : gts) by_class[g.label].push_back(g);
  if (by_class.empty()) return result;
  double sum = 0.0;
  for (const auto& [label, class_gts] : by_class) {
    std::vector<ScoredBox> class_dets;
    for (const auto& d : dets) {
      if (d.label == label) {
        class_dets.push_back(d);
      } else if (d.label == "plume") {
        // A class-agnostic detection that overlaps an instance of another
        // class better than any instance of this class is left out here
        // instead of counting as a false positive.
        double own = 0.0, other = 0.0;
        for (const auto& g : gts) {
          if (g.image != d.image) continue;
          double& best = g.label == label ? own : other;
          best = std::max(best, box_iou(d.box, g.box));
        }
        if (!(other >= iou_thr && other > own)) class_dets.push_back(d);
      }
    }
    const double ap = average_precision(class_dets, class_gts, iou_thr);
    result.per_class_ap[label] = ap;
    sum += ap;
  }
  result.map = sum / static_cast<double>(by_class.size());
  return result;
}

}  // namespace mm::match
