#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "mm/raster.hpp"

namespace mm::match {

// Normalised (cx, cy, w, h).
struct Box {
  double cx = 0.0, cy = 0.0, w = 0.0, h = 0.0;

  double x0() const { return cx - 0.5 * w; }
  double x1() const { return cx + 0.5 * w; }
  double y0() const { return cy - 0.5 * h; }
  double y1() const { return cy + 0.5 * h; }
  double area() const { return w * h; }
};

enum class PlumeClass { PointSource, DiffusedSource };

std::string to_string(PlumeClass c);
PlumeClass plume_class_from_string(const std::string& s);

struct GtInstance {
  Box box;
  PlumeClass cls = PlumeClass::PointSource;
  BinaryMask mask;
};
using GroundTruth = std::vector<GtInstance>;

struct Predictions {
  std::vector<Box> boxes;
  std::vector<double> plume_prob;
  std::vector<ScalarMap> heatmaps;  // optional; per query, low resolution

  std::size_t size() const { return boxes.size(); }
};

// pred_of_gt[g] is the prediction matched to ground truth g.
struct Assignment {
  std::vector<int> pred_of_gt;
  double cost = 0.0;
};

// Minimum-cost injective assignment of the G rows into the P columns (G <= P).
Assignment hungarian(const Eigen::MatrixXd& cost);

double box_iou(const Box& a, const Box& b);
double giou(const Box& a, const Box& b);

struct LossWeights {
  double cls = 1.0;
  double l1 = 5.0;
  double giou = 2.0;
  double mask = 1.0;
};

// cost(g, p)
Eigen::MatrixXd matching_cost(const Predictions& preds, const GroundTruth& gts, const LossWeights& w = {});

struct Losses {
  double cls = 0.0;
  double l1 = 0.0;
  double giou = 0.0;
  double mask = 0.0;

  double total() const { return cls + l1 + giou + mask; }
};

// Components are reported already multiplied by their weights. Class CE is
// averaged over all predictions; box terms over ground-truth instances; mask
// BCE over matched pairs and heatmap pixels.
Losses set_loss(const Predictions& preds, const GroundTruth& gts, const Assignment& assignment,
                const LossWeights& w = {});

// Area-majority downsample of a binary mask by an integer factor.
BinaryMask downsample_majority(const BinaryMask& mask, int rows, int cols);

double mask_iou(const BinaryMask& a, const BinaryMask& b);
// Mean over ground-truth instances of the best IoU against any 8-connected
// component of the prediction.
double miou(const BinaryMask& pred, const std::vector<BinaryMask>& gts);

struct ScoredBox {
  Box box;
  double score = 0.0;
  std::string label = "plume";
  int image = 0;
};

struct LabeledBox {
  Box box;
  std::string label;
  int image = 0;
};

struct MapResult {
  double map = 0.0;
  std::map<std::string, double> per_class_ap;
};

// All-point interpolated AP per ground-truth class, averaged. Detections
// labelled "plume" compete in every class, except where they overlap an
// instance of another class (IoU >= iou_thr) more than any of their own.
MapResult map_at_iou(const std::vector<ScoredBox>& dets, const std::vector<LabeledBox>& gts, double iou_thr = 0.5);
double average_precision(const std::vector<ScoredBox>& dets, const std::vector<LabeledBox>& gts, double iou_thr);

}  // namespace mm::match
