#pragma once
// Dual encoder: patch-based vision transformer and causal text transformer
// projecting into a shared embedding space with a learnable temperature.

#include <filesystem>
#include <memory>
#include <vector>

#include "fetalus/image.hpp"
#include "fetalus/nn.hpp"

namespace fetalus::model {

using nn::Mat;

struct ModelConfig {
  int image_size = 224;   // toy 64
  int patch_size = 14;    // toy 8
  int vision_layers = 24; // toy 4
  int text_layers = 12;   // toy 2
  int vision_width = 1024;
  int text_width = 512;
  int shared_dim = 768;   // toy 128
  int max_tokens = 117;
  int vocab_size = 2048;
  double temperature_init = 0.07;

  static ModelConfig toy();
  void validate() const;
  int grid() const { return image_size / patch_size; }
  int n_patches() const { return grid() * grid(); }
  int vision_heads() const { return std::max(1, vision_width / 32); }
  int text_heads() const { return std::max(1, text_width / 32); }
};

struct VisionTower {
  nn::Linear patch_embed;  // patch*patch -> width
  nn::Param cls_token;     // 1 x width
  nn::Param pos_embed;     // (1 + n_patches) x width
  std::vector<nn::TransformerBlock> blocks;
  nn::LayerNorm ln_final;
  nn::Linear proj;  // width -> d (no bias)

  struct Trace {
    Mat patches;                 // n_patches x patch^2
    std::vector<Mat> block_in;   // input tokens per block
    std::vector<nn::TransformerBlock::Cache> block_caches;
    std::vector<Mat> block_out;  // token grids per layer (cls + patches)
    nn::LayerNorm::Cache ln_cache;
    Mat cls_normed;   // 1 x width
    Mat pre_norm;     // 1 x d, before L2 normalization
    Mat embedding;    // 1 x d, unit norm
  };

  void init(const ModelConfig& cfg, Rng& rng, nn::ParamRegistry& reg);
  Mat forward(const GrayImage& image, const ModelConfig& cfg, Trace& trace) const;
  void backward(const Mat& d_embedding, const ModelConfig& cfg, const Trace& trace,
                nn::Grads& grads) const;
};

struct TextTower {
  nn::Embedding token_embed;
  nn::Param pos_embed;  // max_tokens x width
  std::vector<nn::TransformerBlock> blocks;
  nn::LayerNorm ln_final;
  nn::Linear proj;  // width -> d (no bias)

  struct Trace {
    std::vector<int> ids;
    int eot_pos = -1;
    std::vector<Mat> block_in;
    std::vector<nn::TransformerBlock::Cache> block_caches;
    nn::LayerNorm::Cache ln_cache;
    Mat tokens_final;  // pre-ln tokens
    Mat pre_norm;
    Mat embedding;
  };

  void init(const ModelConfig& cfg, Rng& rng, nn::ParamRegistry& reg);
  Mat forward(const std::vector<int>& ids, int eot_id, const ModelConfig& cfg,
              Trace& trace) const;
  void backward(const Mat& d_embedding, const ModelConfig& cfg, const Trace& trace,
                nn::Grads& grads) const;
};

// logits[i][j] = (image_i . text_j) / tau. Inputs must be unit-norm rows;
// violations raise ContractError (checked when FETALUS_CHECK_CONTRACTS).
Mat similarity(const Mat& image_embs, const Mat& text_embs, double tau);

class ClipModel {
 public:
  ClipModel(const ModelConfig& cfg, std::uint64_t seed);
  ClipModel(const ClipModel&) = delete;
  ClipModel& operator=(const ClipModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  nn::ParamRegistry& params() { return reg_; }
  const nn::ParamRegistry& params() const { return reg_; }

  double temperature() const;
  void clamp_temperature();  // tau >= 0.01 after optimizer steps
  nn::Param& log_tau() { return log_tau_; }

  // Evaluation-mode batch encoders (unit-norm rows).
  Mat encode_image_batch(const std::vector<GrayImage>& images, int n_jobs = 1) const;
  Mat encode_text_batch(const std::vector<std::vector<int>>& sequences, int eot_id,
                        int n_jobs = 1) const;

  // Single-example forward keeping the trace for training / taps.
  Mat encode_image(const GrayImage& image, VisionTower::Trace& trace) const;
  Mat encode_text(const std::vector<int>& ids, int eot_id, TextTower::Trace& trace) const;

  VisionTower& vision() { return vision_; }
  const VisionTower& vision() const { return vision_; }
  TextTower& text() { return text_; }
  const TextTower& text() const { return text_; }

  std::size_t param_count() const { return reg_.total_elements(); }
  // Closed-form parameter counts per tower; asserted against param_count.
  static std::size_t expected_vision_params(const ModelConfig& cfg);
  static std::size_t expected_text_params(const ModelConfig& cfg);

  // Deterministic digest of all parameter bytes (frozen-encoder contract).
  std::uint64_t param_digest() const;

  void save_checkpoint(const std::filesystem::path& path) const;
  static std::unique_ptr<ClipModel> load_checkpoint(const std::filesystem::path& path);

 private:
  ModelConfig cfg_;
  VisionTower vision_;
  TextTower text_;
  nn::Param log_tau_;
  nn::ParamRegistry reg_;
};

}  // namespace fetalus::model
