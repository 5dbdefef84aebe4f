#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace mm::nn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// (H, W, C) activation stored token-major: x.row(i * w + j) is the
// C-vector at spatial position (i, j).
struct FeatureMap {
  int h = 0;
  int w = 0;
  MatrixXd x;

  FeatureMap() = default;
  FeatureMap(int h, int w, int c) : h(h), w(w), x(MatrixXd::Zero(static_cast<Eigen::Index>(h) * w, c)) {}
  FeatureMap(int h, int w, MatrixXd data) : h(h), w(w), x(std::move(data)) {}

  int channels() const { return static_cast<int>(x.cols()); }
  int tokens() const { return h * w; }
  auto at(int i, int j) { return x.row(static_cast<Eigen::Index>(i) * w + j); }
  auto at(int i, int j) const { return x.row(static_cast<Eigen::Index>(i) * w + j); }
};

// Deterministic, platform-independent parameter stream (SplitMix64).
class ParamRng {
 public:
  ParamRng(std::uint64_t seed, const std::string& name);
  std::uint64_t next();
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();

 private:
  std::uint64_t state_;
};

struct InitOptions {
  std::uint64_t seed = 0;
  bool zero_bias = false;
};

// Visits every parameter tensor as (name, data, rows, cols).
using ParamVisitor = std::function<void(const std::string&, double*, Eigen::Index, Eigen::Index)>;

// Pointwise affine map; also serves as a 1x1 convolution on a FeatureMap.
struct Linear {
  MatrixXd weight;  // out x in
  VectorXd bias;    // out

  Linear() = default;
  Linear(int in, int out, const InitOptions& init, const std::string& name);

  int in() const { return static_cast<int>(weight.cols()); }
  int out() const { return static_cast<int>(weight.rows()); }
  MatrixXd forward(const MatrixXd& x) const;
  FeatureMap forward(const FeatureMap& f) const { return {f.h, f.w, forward(f.x)}; }
  void visit(const std::string& prefix, const ParamVisitor& v);
};

struct LayerNorm {
  VectorXd gamma;
  VectorXd beta;
  double eps = 1e-5;

  LayerNorm() = default;
  explicit LayerNorm(int dim);
  MatrixXd forward(const MatrixXd& x) const;
  void visit(const std::string& prefix, const ParamVisitor& v);
};

// k x k convolution with zero padding, im2col + GEMM.
struct Conv2d {
  int in = 0;
  int out = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 1;
  MatrixXd weight;  // out x (kernel * kernel * in), column = (ky * kernel + kx) * in + c
  VectorXd bias;

  Conv2d() = default;
  Conv2d(int in, int out, int kernel, int stride, int pad, const InitOptions& init, const std::string& name);

  int out_size(int n) const { return (n + 2 * pad - kernel) / stride + 1; }
  FeatureMap forward(const FeatureMap& f) const;
  // Convolution with a column slice of the weights (input channels
  // [c0, c0 + f.channels())), no bias.
  FeatureMap forward_partial(const FeatureMap& f, int c0) const;
  void visit(const std::string& prefix, const ParamVisitor& v);
};

FeatureMap relu(FeatureMap f);
MatrixXd relu(MatrixXd x);
FeatureMap upsample_nearest(const FeatureMap& f, int factor);

// Running check on softmax normalisation across every attention block.
struct AttentionTrace {
  double max_row_error = 0.0;
  std::size_t rows = 0;
  // When set, receives the per-head weights (queries x keys) of each call.
  std::vector<MatrixXd>* capture = nullptr;

  void record(const MatrixXd& weights);
};

// Row-wise softmax, max-subtracted.
MatrixXd softmax_rows(const MatrixXd& scores);

struct MultiHeadAttention {
  int heads = 1;
  Linear q_proj, k_proj, v_proj, out_proj;

  MultiHeadAttention() = default;
  MultiHeadAttention(int dim, int heads, const InitOptions& init, const std::string& name);

  int dim() const { return q_proj.out(); }
  // queries: (Q, d), keys/values: (K, d) -> (Q, d). Per head:
  // softmax(q k^T / sqrt(d / heads)) v, heads concatenated then projected.
  MatrixXd forward(const MatrixXd& queries, const MatrixXd& keys, const MatrixXd& values,
                   AttentionTrace* trace = nullptr) const;
  void visit(const std::string& prefix, const ParamVisitor& v);
};

struct FeedForward {
  Linear fc1, fc2;

  FeedForward() = default;
  FeedForward(int dim, int hidden, const InitOptions& init, const std::string& name);
  MatrixXd forward(const MatrixXd& x) const { return fc2.forward(relu(fc1.forward(x))); }
  void visit(const std::string& prefix, const ParamVisitor& v);
};

}  // namespace mm::nn
