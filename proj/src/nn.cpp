#include "mm/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mm/error.hpp"

namespace mm::nn {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void fill_uniform(double* data, Eigen::Index n, double bound, ParamRng& rng) {
  for (Eigen::Index i = 0; i < n; ++i) data[i] = rng.uniform(-bound, bound);
}

}  // namespace

ParamRng::ParamRng(std::uint64_t seed, const std::string& name) : state_(seed ^ fnv1a(name)) {}

std::uint64_t ParamRng::next() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double ParamRng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double ParamRng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Linear::Linear(int in, int out, const InitOptions& init, const std::string& name)
    : weight(out, in), bias(VectorXd::Zero(out)) {
  ParamRng rng(init.seed, name);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  fill_uniform(weight.data(), weight.size(), bound, rng);
  if (!init.zero_bias) fill_uniform(bias.data(), bias.size(), bound, rng);
}

MatrixXd Linear::forward(const MatrixXd& x) const {
  if (x.cols() != weight.cols()) {
    fail(ErrorCode::DimensionMismatch, "linear layer expects " + std::to_string(weight.cols()) + " inputs, got " +
                                           std::to_string(x.cols()));
  }
  MatrixXd y = x * weight.transpose();
  y.rowwise() += bias.transpose();
  return y;
}

void Linear::visit(const std::string& prefix, const ParamVisitor& v) {
  v(prefix + ".weight", weight.data(), weight.rows(), weight.cols());
  v(prefix + ".bias", bias.data(), bias.size(), 1);
}

LayerNorm::LayerNorm(int dim) : gamma(VectorXd::Ones(dim)), beta(VectorXd::Zero(dim)) {}

MatrixXd LayerNorm::forward(const MatrixXd& x) const {
  MatrixXd y(x.rows(), x.cols());
  const double n = static_cast<double>(x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mean = x.row(i).sum() / n;
    const double var = (x.row(i).array() - mean).square().sum() / n;
    const double inv = 1.0 / std::sqrt(var + eps);
    y.row(i) = (((x.row(i).array() - mean) * inv) * gamma.transpose().array() + beta.transpose().array()).matrix();
  }
  return y;
}

void LayerNorm::visit(const std::string& prefix, const ParamVisitor& v) {
  v(prefix + ".gamma", gamma.data(), gamma.size(), 1);
  v(prefix + ".beta", beta.data(), beta.size(), 1);
}

Conv2d::Conv2d(int in, int out, int kernel, int stride, int pad, const InitOptions& init, const std::string& name)
    : in(in), out(out), kernel(kernel), stride(stride), pad(pad), weight(out, kernel * kernel * in),
      bias(VectorXd::Zero(out)) {
  ParamRng rng(init.seed, name);
  const double bound = 1.0 / std::sqrt(static_cast<double>(kernel * kernel * in));
  fill_uniform(weight.data(), weight.size(), bound, rng);
  if (!init.zero_bias) fill_uniform(bias.data(), bias.size(), bound, rng);
}

namespace {

// im2col over output rows [oy0, oy1); weights restricted to input channels
// [c0, c0 + f.channels()).
FeatureMap conv_impl(const Conv2d& conv, const FeatureMap& f, int c0, bool with_bias) {
  const int cin = f.channels();
  if (c0 < 0 || c0 + cin > conv.in) {
    fail(ErrorCode::DimensionMismatch, "conv expects " + std::to_string(conv.in) + " input channels, got " +
                                           std::to_string(cin) + " at offset " + std::to_string(c0));
  }
  const int oh = conv.out_size(f.h);
  const int ow = conv.out_size(f.w);
  const int k = conv.kernel;
  if (oh <= 0 || ow <= 0) fail(ErrorCode::BadGeometry, "convolution input too small");

  MatrixXd w;
  if (c0 == 0 && cin == conv.in) {
    w = conv.weight;
  } else {
    w.resize(conv.out, k * k * cin);
    for (int kk = 0; kk < k * k; ++kk) w.middleCols(kk * cin, cin) = conv.weight.middleCols(kk * conv.in + c0, cin);
  }
  const MatrixXd wt = w.transpose();

  FeatureMap y(oh, ow, conv.out);
  const int rows_per_chunk = std::max(1, 4000000 / std::max(1, ow * k * k * cin));
  MatrixXd cols;
  for (int oy0 = 0; oy0 < oh; oy0 += rows_per_chunk) {
    const int oy1 = std::min(oh, oy0 + rows_per_chunk);
    cols.setZero(static_cast<Eigen::Index>(oy1 - oy0) * ow, static_cast<Eigen::Index>(k) * k * cin);
    for (int oy = oy0; oy < oy1; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const Eigen::Index row = static_cast<Eigen::Index>(oy - oy0) * ow + ox;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * conv.stride - conv.pad + ky;
          if (iy < 0 || iy >= f.h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * conv.stride - conv.pad + kx;
            if (ix < 0 || ix >= f.w) continue;
            cols.row(row).segment((ky * k + kx) * cin, cin) = f.at(iy, ix);
          }
        }
      }
    }
    MatrixXd block = cols * wt;
    if (with_bias) block.rowwise() += conv.bias.transpose();
    y.x.middleRows(static_cast<Eigen::Index>(oy0) * ow, block.rows()) = block;
  }
  return y;
}

}  // namespace

FeatureMap Conv2d::forward(const FeatureMap& f) const {
  if (f.channels() != in) {
    fail(ErrorCode::DimensionMismatch, "conv expects " + std::to_string(in) + " channels, got " +
                                           std::to_string(f.channels()));
  }
  return conv_impl(*this, f, 0, true);
}

FeatureMap Conv2d::forward_partial(const FeatureMap& f, int c0) const { return conv_impl(*this, f, c0, false); }

void Conv2d::visit(const std::string& prefix, const ParamVisitor& v) {
  v(prefix + ".weight", weight.data(), weight.rows(), weight.cols());
  v(prefix + ".bias", bias.data(), bias.size(), 1);
}

MatrixXd relu(MatrixXd x) {
  x = x.cwiseMax(0.0);
  return x;
}

FeatureMap relu(FeatureMap f) {
  f.x = f.x.cwiseMax(0.0);
  return f;
}

FeatureMap upsample_nearest(const FeatureMap& f, int factor) {
  FeatureMap y(f.h * factor, f.w * factor, f.channels());
  for (int i = 0; i < y.h; ++i) {
    for (int j = 0; j < y.w; ++j) y.at(i, j) = f.at(i / factor, j / factor);
  }
  return y;
}

void AttentionTrace::record(const MatrixXd& weights) {
  for (Eigen::Index i = 0; i < weights.rows(); ++i) {
    max_row_error = std::max(max_row_error, std::fabs(weights.row(i).sum() - 1.0));
  }
  rows += static_cast<std::size_t>(weights.rows());
  if (capture) capture->push_back(weights);
}

MatrixXd softmax_rows(const MatrixXd& scores) {
  MatrixXd p(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double m = scores.row(i).maxCoeff();
    p.row(i) = (scores.row(i).array() - m).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

MultiHeadAttention::MultiHeadAttention(int dim, int heads, const InitOptions& init, const std::string& name)
    : heads(heads),
      q_proj(dim, dim, init, name + ".q_proj"),
      k_proj(dim, dim, init, name + ".k_proj"),
      v_proj(dim, dim, init, name + ".v_proj"),
      out_proj(dim, dim, init, name + ".out_proj") {
  if (heads <= 0 || dim % heads != 0) {
    fail(ErrorCode::DimensionMismatch, "model width " + std::to_string(dim) + " not divisible by " +
                                           std::to_string(heads) + " heads");
  }
}

MatrixXd MultiHeadAttention::forward(const MatrixXd& queries, const MatrixXd& keys, const MatrixXd& values,
                                     AttentionTrace* trace) const {
  if (keys.rows() != values.rows()) fail(ErrorCode::DimensionMismatch, "keys and values differ in count");
  if (keys.rows() == 0) fail(ErrorCode::DimensionMismatch, "attention over zero keys");
  const MatrixXd q = q_proj.forward(queries);
  const MatrixXd k = k_proj.forward(keys);
  const MatrixXd v = v_proj.forward(values);
  const int d = dim();
  const int hd = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  MatrixXd concat(queries.rows(), d);
  for (int h = 0; h < heads; ++h) {
    const MatrixXd scores = (q.middleCols(h * hd, hd) * k.middleCols(h * hd, hd).transpose()) * scale;
    const MatrixXd p = softmax_rows(scores);
    if (trace) trace->record(p);
    concat.middleCols(h * hd, hd) = p * v.middleCols(h * hd, hd);
  }
  return out_proj.forward(concat);
}

void MultiHeadAttention::visit(const std::string& prefix, const ParamVisitor& v) {
  q_proj.visit(prefix + ".q_proj", v);
  k_proj.visit(prefix + ".k_proj", v);
  v_proj.visit(prefix + ".v_proj", v);
  out_proj.visit(prefix + ".out_proj", v);
}

FeedForward::FeedForward(int dim, int hidden, const InitOptions& init, const std::string& name)
    : fc1(dim, hidden, init, name + ".fc1"), fc2(hidden, dim, init, name + ".fc2") {}

void FeedForward::visit(const std::string& prefix, const ParamVisitor& v) {
  fc1.visit(prefix + ".fc1", v);
  fc2.visit(prefix + ".fc2", v);
}

}  // namespace mm::nn
