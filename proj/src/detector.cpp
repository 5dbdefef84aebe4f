#include "mm/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "mm/error.hpp"

namespace mm::detector {

using nn::InitOptions;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void DetectorConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) fail(ErrorCode::InvalidArgument, std::string(name) + " must be positive");
  };
  positive(d_model, "d_model");
  positive(n_queries, "n_queries");
  positive(n_heads, "n_heads");
  positive(backbone_channels, "backbone_channels");
  positive(embed_out, "embed_out");
  positive(ffn_dim, "ffn_dim");
  positive(mask_channels, "mask_channels");
  positive(rgb_channels, "rgb_channels");
  positive(swir_channels, "swir_channels");
  if (n_layers < 0) fail(ErrorCode::InvalidArgument, "n_layers must be non-negative");
  if (d_model % n_heads != 0) {
    fail(ErrorCode::DimensionMismatch, "d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                                           std::to_string(n_heads));
  }
  if (d_model % 4 != 0) fail(ErrorCode::OddDimension, "d_model must be a multiple of 4 for the positional embedding");
}

std::string DetectorConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "d_model=" << d_model << '\n'
     << "n_queries=" << n_queries << '\n'
     << "n_layers=" << n_layers << '\n'
     << "n_heads=" << n_heads << '\n'
     << "backbone_channels=" << backbone_channels << '\n'
     << "embed_out=" << embed_out << '\n'
     << "ffn_dim=" << ffn_dim << '\n'
     << "mask_channels=" << mask_channels << '\n'
     << "rgb_channels=" << rgb_channels << '\n'
     << "swir_channels=" << swir_channels << '\n'
     << "mask_threshold=" << mask_threshold << '\n'
     << "confidence_threshold=" << confidence_threshold << '\n'
     << "zero_bias=" << (zero_bias ? 1 : 0) << '\n'
     << "seed=" << seed << '\n'
     << "downsample_factor=" << kDownsample << '\n';
  return os.str();
}

DetectorConfig DetectorConfig::from_text(const std::string& text) {
  DetectorConfig cfg;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCode::InvalidArgument, "detector config line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "d_model") cfg.d_model = std::stoi(value);
      else if (key == "n_queries") cfg.n_queries = std::stoi(value);
      else if (key == "n_layers") cfg.n_layers = std::stoi(value);
      else if (key == "n_heads") cfg.n_heads = std::stoi(value);
      else if (key == "backbone_channels") cfg.backbone_channels = std::stoi(value);
      else if (key == "embed_out") cfg.embed_out = std::stoi(value);
      else if (key == "ffn_dim") cfg.ffn_dim = std::stoi(value);
      else if (key == "mask_channels") cfg.mask_channels = std::stoi(value);
      else if (key == "rgb_channels") cfg.rgb_channels = std::stoi(value);
      else if (key == "swir_channels") cfg.swir_channels = std::stoi(value);
      else if (key == "mask_threshold") cfg.mask_threshold = std::stod(value);
      else if (key == "confidence_threshold") cfg.confidence_threshold = std::stod(value);
      else if (key == "zero_bias") cfg.zero_bias = std::stoi(value) != 0;
      else if (key == "seed") cfg.seed = std::stoull(value);
      else if (key == "downsample_factor") {
        if (std::stoi(value) != kDownsample) fail(ErrorCode::InvalidArgument, "downsample_factor is fixed at 32");
      } else {
        fail(ErrorCode::InvalidArgument, "unknown detector config key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      fail(ErrorCode::InvalidArgument, "bad value for detector config key '" + key + "': " + value);
    }
  }
  cfg.validate();
  return cfg;
}

std::vector<int> backbone_widths(int n) {
  return {std::max(8, n / 8), std::max(8, n / 4), std::max(8, n / 2), n, n};
}

Backbone::Backbone(int in_channels, int n, const InitOptions& init, const std::string& name) {
  int in = in_channels;
  int i = 0;
  for (int width : backbone_widths(n)) {
    stages.emplace_back(in, width, 3, 2, 1, init, name + ".stage" + std::to_string(i++));
    in = width;
  }
}

std::vector<FeatureMap> Backbone::stage_outputs(const FeatureMap& img) const {
  std::vector<FeatureMap> out;
  out.reserve(stages.size());
  const FeatureMap* x = &img;
  for (const auto& conv : stages) {
    out.push_back(nn::relu(conv.forward(*x)));
    x = &out.back();
  }
  return out;
}

FeatureMap Backbone::forward(const FeatureMap& img) const { return stage_outputs(img).back(); }

FeatureMap Backbone::first_stage_linear(const FeatureMap& img) const { return stages.front().forward(img); }

void Backbone::visit(const std::string& prefix, const nn::ParamVisitor& v) {
  for (std::size_t i = 0; i < stages.size(); ++i) stages[i].visit(prefix + ".stage" + std::to_string(i), v);
}

FeatureMap positional_embedding(int h, int w, int d) {
  // Each axis half is made of (sin, cos) pairs.
  if (d % 4 != 0) {
    fail(ErrorCode::OddDimension, "positional embedding width " + std::to_string(d) + " is not a multiple of 4");
  }
  if (h <= 0 || w <= 0) fail(ErrorCode::BadGeometry, "positional embedding over empty grid");
  const int half = d / 2;
  FeatureMap p(h, w, d);
  for (int c = 0; c < d; ++c) {
    const int axis_c = c < half ? c : c - half;
    const int k = axis_c / 2;
    const double omega = std::pow(10000.0, -2.0 * k / half);
    const bool use_sin = axis_c % 2 == 0;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const double pos = c < half ? i : j;
        p.at(i, j)(c) = use_sin ? std::sin(pos * omega) : std::cos(pos * omega);
      }
    }
  }
  return p;
}

Eigen::VectorXd Detections::plume_probability() const {
  Eigen::VectorXd prob(logits.rows());
  for (Eigen::Index q = 0; q < logits.rows(); ++q) {
    const double a = logits(q, kPlumeClass);
    const double b = logits(q, kNoObjectClass);
    prob(q) = 1.0 / (1.0 + std::exp(b - a));
  }
  return prob;
}

MethaneMapper::MethaneMapper(const DetectorConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const InitOptions init{cfg.seed, cfg.zero_bias};
  const int n = cfg.backbone_channels;
  const int d = cfg.d_model;
  rgb_backbone = Backbone(cfg.rgb_channels, n, init, "rgb_backbone");
  swir_backbone = Backbone(cfg.swir_channels, n, init, "swir_backbone");
  sfg_backbone = Backbone(1, n, init, "sfg_backbone");
  combine = nn::Linear(2 * n, n, init, "combine");
  input_proj = nn::Linear(n, d, init, "input_proj");
  sfg_proj = nn::Linear(n, d, init, "sfg_proj");

  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string e = "encoder." + std::to_string(l);
    encoder.push_back({nn::LayerNorm(d), nn::LayerNorm(d), nn::MultiHeadAttention(d, cfg.n_heads, init, e + ".attn"),
                       nn::FeedForward(d, cfg.ffn_dim, init, e + ".ffn")});
    const std::string r = "refiner." + std::to_string(l);
    refiner.push_back({nn::LayerNorm(d), nn::LayerNorm(d), nn::LayerNorm(d),
                       nn::MultiHeadAttention(d, cfg.n_heads, init, r + ".self_attn"),
                       nn::MultiHeadAttention(d, cfg.n_heads, init, r + ".cross_attn"),
                       nn::FeedForward(d, cfg.ffn_dim, init, r + ".ffn")});
    const std::string c = "decoder." + std::to_string(l);
    decoder.push_back({nn::LayerNorm(d), nn::LayerNorm(d),
                       nn::MultiHeadAttention(d, cfg.n_heads, init, c + ".cross_attn"),
                       nn::FeedForward(d, cfg.ffn_dim, init, c + ".ffn")});
  }
  out_proj = nn::Linear(d, cfg.embed_out, init, "out_proj");

  queries.resize(cfg.n_queries, d);
  nn::ParamRng qrng(cfg.seed, "queries");
  for (Eigen::Index i = 0; i < queries.size(); ++i) queries.data()[i] = qrng.normal();

  heads.box_mlp = {nn::Linear(cfg.embed_out, d, init, "box_mlp.0"), nn::Linear(d, d, init, "box_mlp.1"),
                   nn::Linear(d, 4, init, "box_mlp.2")};
  heads.class_head = nn::Linear(cfg.embed_out, 2, init, "class_head");

  const auto widths = backbone_widths(n);
  const int cm = cfg.mask_channels;
  mask.query_proj = nn::Linear(cfg.embed_out, d, init, "mask.query_proj");
  mask.key_proj = nn::Linear(d, d, init, "mask.key_proj");
  mask.lay1 = nn::Conv2d(d + cfg.n_heads, cm, 3, 1, 1, init, "mask.lay1");
  for (int s = 0; s < kMaskStages; ++s) {
    // Stride-16, 8, 4 stages of the RGB backbone.
    mask.adapters.emplace_back(widths[3 - s], cm, init, "mask.adapter" + std::to_string(s));
    mask.stages.emplace_back(cm, cm, 3, 1, 1, init, "mask.stage" + std::to_string(s));
  }
  mask.out = nn::Conv2d(cm, 1, 3, 1, 1, init, "mask.out");
}

void MethaneMapper::check_tile(const FeatureMap& img, int channels, const char* what) const {
  if (img.h <= 0 || img.w <= 0 || img.h % kDownsample != 0 || img.w % kDownsample != 0) {
    fail(ErrorCode::BadGeometry, std::string(what) + " tile " + std::to_string(img.h) + "x" + std::to_string(img.w) +
                                     " is not a positive multiple of 32");
  }
  if (img.channels() != channels) {
    fail(ErrorCode::DimensionMismatch, std::string(what) + " tile has " + std::to_string(img.channels()) +
                                           " channels, expected " + std::to_string(channels));
  }
}

FeatureMap MethaneMapper::backbone_forward(const Backbone& branch, const FeatureMap& img) const {
  check_tile(img, branch.stages.front().in, "backbone");
  return branch.forward(img);
}

FeatureMap MethaneMapper::concat_project(const FeatureMap& f_rgb, const FeatureMap& f_swir) const {
  if (f_rgb.h != f_swir.h || f_rgb.w != f_swir.w) {
    fail(ErrorCode::DimensionMismatch, "RGB and SWIR feature maps differ in spatial size");
  }
  MatrixXd cat(f_rgb.x.rows(), f_rgb.channels() + f_swir.channels());
  cat << f_rgb.x, f_swir.x;
  return {f_rgb.h, f_rgb.w, combine.forward(cat)};
}

FeatureMap MethaneMapper::encoder_forward(const FeatureMap& f_z, const FeatureMap& p, nn::AttentionTrace* trace) const {
  if (f_z.h != p.h || f_z.w != p.w || f_z.channels() != p.channels() || f_z.channels() != cfg_.d_model) {
    fail(ErrorCode::BadGeometry, "encoder input and positional embedding disagree in shape");
  }
  MatrixXd x = f_z.x;
  for (const auto& layer : encoder) {
    const MatrixXd y = layer.norm1.forward(x);
    const MatrixXd qk = y + p.x;
    x += layer.attn.forward(qk, qk, y, trace);
    x += layer.ffn.forward(layer.norm2.forward(x));
  }
  return {f_z.h, f_z.w, std::move(x)};
}

FeatureMap MethaneMapper::sfg_forward(const FeatureMap& enh) const {
  check_tile(enh, 1, "enhancement");
  return sfg_proj.forward(sfg_backbone.forward(enh));
}

MatrixXd MethaneMapper::query_refiner(const FeatureMap& f_mc, const MatrixXd& q0, nn::AttentionTrace* trace) const {
  if (q0.cols() != cfg_.d_model || f_mc.channels() != cfg_.d_model) {
    fail(ErrorCode::DimensionMismatch, "query refiner inputs must have d_model channels");
  }
  MatrixXd q = q0;
  for (const auto& layer : refiner) {
    const MatrixXd a = layer.norm1.forward(q);
    q += layer.self_attn.forward(a, a, a, trace);
    q += layer.cross_attn.forward(layer.norm2.forward(q), f_mc.x, f_mc.x, trace);
    q += layer.ffn.forward(layer.norm3.forward(q));
  }
  return q;
}

MatrixXd MethaneMapper::decoder_forward(const FeatureMap& f_e, const FeatureMap& p, const MatrixXd& q_ref,
                                        nn::AttentionTrace* trace) const {
  if (q_ref.cols() != cfg_.d_model || f_e.channels() != cfg_.d_model || p.x.rows() != f_e.x.rows() ||
      p.channels() != f_e.channels()) {
    fail(ErrorCode::DimensionMismatch, "decoder inputs disagree in shape");
  }
  const MatrixXd keys = f_e.x + p.x;
  MatrixXd q = q_ref;
  for (const auto& layer : decoder) {
    q += layer.cross_attn.forward(layer.norm1.forward(q), keys, f_e.x, trace);
    q += layer.ffn.forward(layer.norm2.forward(q));
  }
  return out_proj.forward(q);
}

Detections MethaneMapper::ffn_heads(const MatrixXd& e_out) const {
  if (e_out.cols() != cfg_.embed_out) fail(ErrorCode::DimensionMismatch, "head input width mismatch");
  MatrixXd h = nn::relu(heads.box_mlp[0].forward(e_out));
  h = nn::relu(heads.box_mlp[1].forward(h));
  Detections det;
  det.boxes = heads.box_mlp[2].forward(h).unaryExpr([](double v) { return sigmoid(v); });
  det.logits = heads.class_head.forward(e_out);
  return det;
}

MaskOutput MethaneMapper::mask_head(const MatrixXd& e_out, const FeatureMap& f_e,
                                    const std::vector<FeatureMap>& pyramid, const Eigen::VectorXd& confidence,
                                    int out_h, int out_w, nn::AttentionTrace* trace, bool keep_per_query) const {
  if (static_cast<int>(pyramid.size()) != kMaskStages) {
    fail(ErrorCode::BadGeometry, "mask head needs " + std::to_string(kMaskStages) + " pyramid levels");
  }
  if (confidence.size() != e_out.rows()) fail(ErrorCode::DimensionMismatch, "confidence per query expected");
  const int heads_n = cfg_.n_heads;
  const int d = cfg_.d_model;
  const int hd = d / heads_n;
  const int lh = f_e.h << kMaskStages;
  const int lw = f_e.w << kMaskStages;
  if (out_h != lh * 4 || out_w != lw * 4) {
    fail(ErrorCode::BadGeometry, "mask output size must be 4x the final heatmap size");
  }
  for (int s = 0; s < kMaskStages; ++s) {
    if (pyramid[s].h != f_e.h << (s + 1) || pyramid[s].w != f_e.w << (s + 1)) {
      fail(ErrorCode::BadGeometry, "pyramid level " + std::to_string(s) + " has wrong spatial size");
    }
  }

  const MatrixXd qh = mask.query_proj.forward(e_out);
  const MatrixXd kh = mask.key_proj.forward(f_e.x);
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<MatrixXd> weights;  // per head, (Q, T)
  for (int h = 0; h < heads_n; ++h) {
    weights.push_back(nn::softmax_rows((qh.middleCols(h * hd, hd) * kh.middleCols(h * hd, hd).transpose()) * scale));
    if (trace) trace->record(weights.back());
  }

  FeatureMap base = mask.lay1.forward_partial(f_e, 0);
  base.x.rowwise() += mask.lay1.bias.transpose();
  std::vector<FeatureMap> adapted;
  for (int s = 0; s < kMaskStages; ++s) adapted.push_back(mask.adapters[s].forward(pyramid[s]));

  MaskOutput out;
  MatrixXd merged_low = MatrixXd::Zero(lh, lw);
  bool any = false;
  for (Eigen::Index q = 0; q < e_out.rows(); ++q) {
    FeatureMap attn(f_e.h, f_e.w, heads_n);
    for (int h = 0; h < heads_n; ++h) attn.x.col(h) = weights[h].row(q).transpose();
    FeatureMap x = base;
    x.x += mask.lay1.forward_partial(attn, d).x;
    x = nn::relu(std::move(x));
    for (int s = 0; s < kMaskStages; ++s) {
      x = nn::upsample_nearest(x, 2);
      x.x += adapted[s].x;
      x = nn::relu(mask.stages[s].forward(x));
    }
    FeatureMap heat = mask.out.forward(x);
    heat.x = heat.x.unaryExpr([](double v) { return sigmoid(v); });
    if (confidence(q) >= cfg_.confidence_threshold) {
      any = true;
      for (int i = 0; i < lh; ++i) {
        for (int j = 0; j < lw; ++j) merged_low(i, j) = std::max(merged_low(i, j), heat.at(i, j)(0));
      }
    }
    if (keep_per_query) {
      out.attention.push_back(std::move(attn));
      out.heatmaps.push_back(std::move(heat));
    }
  }

  out.merged = ScalarMap(out_h, out_w, 0.0);
  std::fill(out.merged.valid.begin(), out.merged.valid.end(), 1);
  out.mask = BinaryMask(out_h, out_w);
  for (int r = 0; r < out_h; ++r) {
    for (int c = 0; c < out_w; ++c) {
      const double v = merged_low(r / 4, c / 4);
      out.merged.at(r, c) = v;
      out.mask.at(r, c) = any && v >= cfg_.mask_threshold ? 1 : 0;
    }
  }
  return out;
}

ForwardResult MethaneMapper::forward(const FeatureMap& rgb, const FeatureMap& swir, const FeatureMap& enh,
                                     bool keep_per_query) const {
  check_tile(rgb, cfg_.rgb_channels, "RGB");
  check_tile(swir, cfg_.swir_channels, "SWIR");
  check_tile(enh, 1, "enhancement");
  if (swir.h != rgb.h || swir.w != rgb.w || enh.h != rgb.h || enh.w != rgb.w) {
    fail(ErrorCode::BadGeometry, "RGB, SWIR and enhancement tiles differ in size");
  }
  ForwardResult r;
  r.rgb_stages = rgb_backbone.stage_outputs(rgb);
  r.f_rgb = r.rgb_stages.back();
  r.f_swir = swir_backbone.forward(swir);
  r.f_comb = concat_project(r.f_rgb, r.f_swir);
  r.f_z = input_proj.forward(r.f_comb);
  r.p = positional_embedding(r.f_z.h, r.f_z.w, cfg_.d_model);
  r.f_e = encoder_forward(r.f_z, r.p, &r.trace);
  r.f_mc = sfg_forward(enh);
  r.queries = queries;
  r.q_ref = query_refiner(r.f_mc, queries, &r.trace);
  r.e_out = decoder_forward(r.f_e, r.p, r.q_ref, &r.trace);
  r.detections = ffn_heads(r.e_out);
  const std::vector<FeatureMap> pyramid{r.rgb_stages[3], r.rgb_stages[2], r.rgb_stages[1]};
  r.masks = mask_head(r.e_out, r.f_e, pyramid, r.detections.plume_probability(), rgb.h, rgb.w, &r.trace,
                      keep_per_query);
  return r;
}

void MethaneMapper::visit(const nn::ParamVisitor& v) {
  rgb_backbone.visit("rgb_backbone", v);
  swir_backbone.visit("swir_backbone", v);
  sfg_backbone.visit("sfg_backbone", v);
  combine.visit("combine", v);
  input_proj.visit("input_proj", v);
  sfg_proj.visit("sfg_proj", v);
  for (std::size_t l = 0; l < encoder.size(); ++l) {
    const std::string e = "encoder." + std::to_string(l);
    encoder[l].norm1.visit(e + ".norm1", v);
    encoder[l].norm2.visit(e + ".norm2", v);
    encoder[l].attn.visit(e + ".attn", v);
    encoder[l].ffn.visit(e + ".ffn", v);
  }
  for (std::size_t l = 0; l < refiner.size(); ++l) {
    const std::string r = "refiner." + std::to_string(l);
    refiner[l].norm1.visit(r + ".norm1", v);
    refiner[l].norm2.visit(r + ".norm2", v);
    refiner[l].norm3.visit(r + ".norm3", v);
    refiner[l].self_attn.visit(r + ".self_attn", v);
    refiner[l].cross_attn.visit(r + ".cross_attn", v);
    refiner[l].ffn.visit(r + ".ffn", v);
  }
  for (std::size_t l = 0; l < decoder.size(); ++l) {
    const std::string c = "decoder." + std::to_string(l);
    decoder[l].norm1.visit(c + ".norm1", v);
    decoder[l].norm2.visit(c + ".norm2", v);
    decoder[l].cross_attn.visit(c + ".cross_attn", v);
    decoder[l].ffn.visit(c + ".ffn", v);
  }
  out_proj.visit("out_proj", v);
  v("queries", queries.data(), queries.rows(), queries.cols());
  for (std::size_t i = 0; i < heads.box_mlp.size(); ++i) heads.box_mlp[i].visit("box_mlp." + std::to_string(i), v);
  heads.class_head.visit("class_head", v);
  mask.query_proj.visit("mask.query_proj", v);
  mask.key_proj.visit("mask.key_proj", v);
  mask.lay1.visit("mask.lay1", v);
  for (std::size_t s = 0; s < mask.adapters.size(); ++s) {
    mask.adapters[s].visit("mask.adapter" + std::to_string(s), v);
    mask.stages[s].visit("mask.stage" + std::to_string(s), v);
  }
  mask.out.visit("mask.out", v);
}

void MethaneMapper::save(const std::filesystem::path& weights, const std::filesystem::path& manifest) {
  std::ofstream bin(weights, std::ios::binary);
  std::ofstream man(manifest);
  if (!bin || !man) fail(ErrorCode::IoFailure, "cannot write weights to " + weights.string());
  std::size_t offset = 0;
  visit([&](const std::string& name, double* data, Eigen::Index rows, Eigen::Index cols) {
    const auto n = static_cast<std::size_t>(rows * cols);
    bin.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
    man << name << ' ' << rows << ' ' << cols << ' ' << offset << '\n';
    offset += n;
  });
  if (!bin || !man) fail(ErrorCode::IoFailure, "short write to " + weights.string());
}

void MethaneMapper::load(const std::filesystem::path& weights, const std::filesystem::path& manifest) {
  std::ifstream man(manifest);
  std::ifstream bin(weights, std::ios::binary);
  if (!bin || !man) fail(ErrorCode::IoFailure, "cannot read weights from " + weights.string());
  std::map<std::string, std::tuple<Eigen::Index, Eigen::Index, std::size_t>> entries;
  std::string name;
  Eigen::Index rows = 0, cols = 0;
  std::size_t offset = 0;
  while (man >> name >> rows >> cols >> offset) entries[name] = {rows, cols, offset};
  visit([&](const std::string& key, double* data, Eigen::Index r, Eigen::Index c) {
    const auto it = entries.find(key);
    if (it == entries.end()) fail(ErrorCode::MissingField, "weights manifest lacks '" + key + "'");
    const auto [er, ec, off] = it->second;
    if (er != r || ec != c) {
      fail(ErrorCode::DimensionMismatch, "weights '" + key + "' have shape " + std::to_string(er) + "x" +
                                             std::to_string(ec) + ", model expects " + std::to_string(r) + "x" +
                                             std::to_string(c));
    }
    bin.seekg(static_cast<std::streamoff>(off * sizeof(double)));
    bin.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(r * c * sizeof(double)));
    if (!bin) fail(ErrorCode::IoFailure, "weights file truncated at '" + key + "'");
  });
}

FeatureMap to_feature_map(const Image& img) {
  FeatureMap f(img.rows, img.cols, img.channels);
  for (int k = 0; k < img.channels; ++k) {
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (int r = 0; r < img.rows; ++r) {
      for (int c = 0; c < img.cols; ++c) {
        if (!img.is_valid(r, c)) continue;
        sum += img.at(r, c, k);
        ++n;
      }
    }
    const double mean = n ? sum / static_cast<double>(n) : 0.0;
    for (int r = 0; r < img.rows; ++r) {
      for (int c = 0; c < img.cols; ++c) {
        if (img.is_valid(r, c)) sq += (img.at(r, c, k) - mean) * (img.at(r, c, k) - mean);
      }
    }
    double sd = n ? std::sqrt(sq / static_cast<double>(n)) : 0.0;
    if (!(sd > 0.0)) sd = 1.0;
    for (int r = 0; r < img.rows; ++r) {
      for (int c = 0; c < img.cols; ++c) {
        f.at(r, c)(k) = img.is_valid(r, c) ? (img.at(r, c, k) - mean) / sd : 0.0;
      }
    }
  }
  return f;
}

FeatureMap to_feature_map(const ScalarMap& map) {
  FeatureMap f(map.rows, map.cols, 1);
  for (int r = 0; r < map.rows; ++r) {
    for (int c = 0; c < map.cols; ++c) f.at(r, c)(0) = map.is_valid(r, c) ? map.at(r, c) : 0.0;
  }
  return f;
}

}  // namespace mm::detector
