#pragma once
// Frozen-encoder adaptation heads: video clip sampling + frame-feature
// combination, linear probes, and a lightweight depthwise-separable
// segmentation decoder over encoder token grids.

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fetalus/model.hpp"
#include "fetalus/nn.hpp"

namespace fetalus::probes {

using model::Mat;
using nn::FeatureMap;

// ---------------------------------------------------------------------------
// Video clips

struct ClipSample {
  std::string video_id;
  std::array<int, 16> frame_indices{};
  double coverage = 0.0;  // (last - first + 1) / T, recorded per open question
};

// T <= 64: one clip, indices = round(linspace(0, T-1, 16)).
// T > 64: 16-frame clips with intra-clip stride 4 (span 61), start positions
// round(linspace(0, T-61, n)) with n = ceil((T-60)/8).
std::vector<ClipSample> sample_clips(const std::string& video_id, int video_length);

enum class CombineMode { average, concatenate };

// 16 x d frame embeddings -> 1 x d (average) or 1 x 16d (concatenate).
Mat combine_frames(const Mat& frame_embs, CombineMode mode);

// ---------------------------------------------------------------------------
// Linear probes

struct ProbeHyperparams {
  double lr = 0.5;        // plain gradient descent, fixed rate
  int epochs = 200;
  bool binary = false;    // binary cross-entropy head (CHD) vs softmax CE
  std::uint64_t seed = 0;
};

class LinearProbe {
 public:
  // Trains a single affine map by full-batch gradient descent; the epoch
  // with the lowest validation loss is retained.
  static LinearProbe fit(const Mat& train_x, const std::vector<int>& train_y,
                         const Mat& val_x, const std::vector<int>& val_y, int n_classes,
                         const ProbeHyperparams& hp);

  std::vector<int> predict(const Mat& x) const;
  // Binary probes: score = sigmoid logit. Multiclass: per-class probability.
  Mat predict_proba(const Mat& x) const;
  double best_val_loss() const { return best_val_loss_; }

 private:
  Mat w_;  // k x C (or k x 1 binary)
  Mat b_;  // 1 x C
  bool binary_ = false;
  double best_val_loss_ = 0.0;
};

// ---------------------------------------------------------------------------
// Segmentation decoder

struct SegDecoderConfig {
  std::vector<int> tap_layers;  // 4 encoder block indices, 1-based, ascending
  int encoder_width = 0;        // E: channels of each tap's token grid
  int grid = 0;                 // G: token grid side
  int image_size = 0;           // output side; must equal G * 2^S with S >= 3
  int proj_channels = 262;      // P: decoder width after tap projection
  int n_structures = 1;         // N_s output channels
  int kernel_size = 3;          // fixed

  // For a ViT config: taps at N_L/4, N_L/2, 3N_L/4, N_L.
  static std::vector<int> default_taps(int n_layers);
  void validate() const;
  int upsample_stages() const;  // S
};

// Closed-form parameter count of the decoder for a config (counting is
// spatial-independent, so paper-scale configs can be audited directly).
std::size_t seg_decoder_param_count(const SegDecoderConfig& cfg);

class SegDecoder {
 public:
  explicit SegDecoder(const SegDecoderConfig& cfg, std::uint64_t seed);
  SegDecoder(const SegDecoder&) = delete;
  SegDecoder& operator=(const SegDecoder&) = delete;

  const SegDecoderConfig& config() const { return cfg_; }
  std::size_t param_count() const { return reg_.total_elements(); }
  nn::ParamRegistry& params() { return reg_; }

  struct FuseTrace {
    FeatureMap concat_in, dw_out, pw_out;  // pw_out is pre-ReLU
  };
  struct Trace {
    std::vector<FeatureMap> tap_in, tap_proj_out;  // 4 each
    std::vector<FeatureMap> chain_in, chain_out;   // 6 each
    std::vector<FeatureMap> main_in, main_out;     // S each
    std::vector<FuseTrace> fuse;                   // 3
    FeatureMap head_in, head_dw_out, head_pw_out, head_relu_out;
    FeatureMap logits;
  };

  // taps: 4 feature maps (E x G x G), shallowest first. Returns pre-sigmoid
  // logits, N_s channels at image_size x image_size.
  FeatureMap forward(const std::vector<FeatureMap>& taps, Trace& trace) const;
  FeatureMap forward(const std::vector<FeatureMap>& taps) const;
  void backward(const FeatureMap& d_logits, const Trace& trace, nn::Grads& grads) const;

  static FeatureMap sigmoid(const FeatureMap& logits);

 private:
  SegDecoderConfig cfg_;
  nn::ParamRegistry reg_;

  struct Fuse {
    nn::DepthwiseConv3x3 dw;
    nn::PointwiseConv pw;
  };
  std::vector<nn::PointwiseConv> tap_proj_;      // 4x E -> P
  std::vector<nn::DepthwiseDeconv2x2> chain_up_; // 1 + 2 + 3 = 6 chain deconvs
  std::vector<nn::DepthwiseDeconv2x2> main_up_;  // S deconvs on the main path
  std::vector<Fuse> fuse_;                       // 3 fusion blocks
  nn::DepthwiseConv3x3 head_dw_;
  nn::PointwiseConv head_pw_;
  nn::PointwiseConv head_out_;
};

// Token grid (1+G^2) x W from an encoder layer -> channel-first feature map.
FeatureMap tokens_to_feature_map(const Mat& tokens, int grid);

struct SegExample {
  std::vector<FeatureMap> taps;     // precomputed frozen-encoder features
  std::vector<std::vector<float>> masks;  // per structure, image_size^2, {0,1}
};

struct SegTrainConfig {
  int epochs = 60;
  double lr = 3e-3;
  int batch_size = 8;
  std::uint64_t seed = 0;
  int n_jobs = 1;
};

struct SegTrainResult {
  std::vector<double> per_structure_dsc;
  double mean_dsc = 0.0;
  std::vector<double> loss_curve;
};

struct SegLossGrads {
  double loss = 0.0;
  FeatureMap d_logits;
};

// Per-channel binary cross-entropy + soft Dice, equal weight.
SegLossGrads seg_loss(const FeatureMap& logits, const std::vector<std::vector<float>>& masks);

// Multilabel training: per-channel binary cross-entropy + soft Dice with
// equal weight. Reports per-structure DSC on the eval set.
SegTrainResult train_seg(SegDecoder& decoder, const std::vector<SegExample>& train_set,
                         const std::vector<SegExample>& eval_set, const SegTrainConfig& cfg);

// ---------------------------------------------------------------------------
// Precomputed-embedding file: header (count, dim, dtype tag) + row-major data.

void write_embeddings(const std::filesystem::path& path, const Mat& embeddings);
Mat read_embeddings(const std::filesystem::path& path);

}  // namespace fetalus::probes
