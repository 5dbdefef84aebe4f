#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mm/nn.hpp"
#include "mm/raster.hpp"

namespace mm::detector {

using nn::FeatureMap;
using nn::MatrixXd;

inline constexpr int kDownsample = 32;
inline constexpr int kBackboneStages = 5;
inline constexpr int kMaskStages = 3;
inline constexpr int kPlumeClass = 0;
inline constexpr int kNoObjectClass = 1;

struct DetectorConfig {
  int d_model = 256;
  int n_queries = 100;
  int n_layers = 6;
  int n_heads = 8;
  int backbone_channels = 64;
  int embed_out = 512;
  int ffn_dim = 1024;
  int mask_channels = 16;
  int rgb_channels = 3;
  int swir_channels = 100;
  double mask_threshold = 0.5;
  double confidence_threshold = 0.5;
  bool zero_bias = false;
  std::uint64_t seed = 0;

  void validate() const;
  std::string to_text() const;
  static DetectorConfig from_text(const std::string& text);
};

// Channel widths of the five stride-2 stages, ending at N.
std::vector<int> backbone_widths(int n);

struct Backbone {
  std::vector<nn::Conv2d> stages;

  Backbone() = default;
  Backbone(int in_channels, int n, const nn::InitOptions& init, const std::string& name);

  // Output of every stage (post-ReLU); the last one is (H0/32, W0/32, N).
  std::vector<FeatureMap> stage_outputs(const FeatureMap& img) const;
  FeatureMap forward(const FeatureMap& img) const;
  // First-stage activations before the nonlinearity.
  FeatureMap first_stage_linear(const FeatureMap& img) const;
  void visit(const std::string& prefix, const nn::ParamVisitor& v);
};

// Fixed 2-D sinusoidal embedding, (H*W, d). Channels [0, d/2) encode the
// row index, [d/2, d) the column; within each half, channel 2k is
// sin(pos * w_k) and 2k+1 is cos(pos * w_k), w_k = 10000^(-2k / (d/2)).
FeatureMap positional_embedding(int h, int w, int d);

struct EncoderLayer {
  nn::LayerNorm norm1, norm2;
  nn::MultiHeadAttention attn;
  nn::FeedForward ffn;
};

struct RefinerLayer {
  nn::LayerNorm norm1, norm2, norm3;
  nn::MultiHeadAttention self_attn, cross_attn;
  nn::FeedForward ffn;
};

struct DecoderLayer {
  nn::LayerNorm norm1, norm2;
  nn::MultiHeadAttention cross_attn;
  nn::FeedForward ffn;
};

struct MaskHead {
  nn::Linear query_proj;  // embed_out -> d
  nn::Linear key_proj;    // d -> d
  nn::Conv2d lay1;        // (d + heads) -> mask_channels
  std::vector<nn::Linear> adapters;  // pyramid level -> mask_channels
  std::vector<nn::Conv2d> stages;    // mask_channels -> mask_channels
  nn::Conv2d out;                    // mask_channels -> 1
};

struct Heads {
  std::vector<nn::Linear> box_mlp;  // 3 layers, last -> 4
  nn::Linear class_head;            // -> 2
};

struct Detections {
  MatrixXd boxes;   // (Q, 4) cx, cy, w, h in [0, 1]
  MatrixXd logits;  // (Q, 2) plume, no-object

  Eigen::VectorXd plume_probability() const;
};

struct MaskOutput {
  std::vector<FeatureMap> attention;  // per query (H, W, heads)
  std::vector<FeatureMap> heatmaps;   // per query (H0/4, W0/4, 1), sigmoid
  ScalarMap merged;                   // (H0, W0) max over confident queries, nearest upsampled
  BinaryMask mask;                    // (H0, W0)
};

struct ForwardResult {
  FeatureMap f_rgb, f_swir, f_comb, f_z, p, f_e, f_mc;
  std::vector<FeatureMap> rgb_stages;
  MatrixXd queries, q_ref, e_out;
  Detections detections;
  MaskOutput masks;
  nn::AttentionTrace trace;
};

class MethaneMapper {
 public:
  explicit MethaneMapper(const DetectorConfig& cfg);

  const DetectorConfig& config() const { return cfg_; }

  FeatureMap backbone_forward(const Backbone& branch, const FeatureMap& img) const;
  FeatureMap concat_project(const FeatureMap& f_rgb, const FeatureMap& f_swir) const;
  FeatureMap encoder_forward(const FeatureMap& f_z, const FeatureMap& p, nn::AttentionTrace* trace = nullptr) const;
  FeatureMap sfg_forward(const FeatureMap& enh) const;
  MatrixXd query_refiner(const FeatureMap& f_mc, const MatrixXd& queries, nn::AttentionTrace* trace = nullptr) const;
  MatrixXd decoder_forward(const FeatureMap& f_e, const FeatureMap& p, const MatrixXd& q_ref,
                           nn::AttentionTrace* trace = nullptr) const;
  Detections ffn_heads(const MatrixXd& e_out) const;
  MaskOutput mask_head(const MatrixXd& e_out, const FeatureMap& f_e, const std::vector<FeatureMap>& pyramid,
                       const Eigen::VectorXd& confidence, int out_h, int out_w, nn::AttentionTrace* trace = nullptr,
                       bool keep_per_query = true) const;

  // rgb: (H0, W0, 3), swir: (H0, W0, swir_channels), enh: (H0, W0, 1).
  ForwardResult forward(const FeatureMap& rgb, const FeatureMap& swir, const FeatureMap& enh,
                        bool keep_per_query = true) const;

  void visit(const nn::ParamVisitor& v);
  void save(const std::filesystem::path& weights, const std::filesystem::path& manifest);
  void load(const std::filesystem::path& weights, const std::filesystem::path& manifest);

  Backbone rgb_backbone, swir_backbone, sfg_backbone;
  nn::Linear combine;     // 2N -> N
  nn::Linear input_proj;  // N -> d
  nn::Linear sfg_proj;    // N -> d
  std::vector<EncoderLayer> encoder;
  std::vector<RefinerLayer> refiner;
  std::vector<DecoderLayer> decoder;
  nn::Linear out_proj;  // d -> embed_out
  MatrixXd queries;     // (n_queries, d)
  Heads heads;
  MaskHead mask;

 private:
  void check_tile(const FeatureMap& img, int channels, const char* what) const;
  DetectorConfig cfg_;
};

// Image: per-channel standardisation over valid pixels. ScalarMap: copied
// as-is (enhancement maps are already standardised). Invalid pixels become 0.
FeatureMap to_feature_map(const Image& img);
FeatureMap to_feature_map(const ScalarMap& map);

}  // namespace mm::detector
