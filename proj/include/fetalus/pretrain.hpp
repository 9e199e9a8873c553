#pragma once
// Symmetric contrastive pretraining: the InfoNCE-style loss over an
// image-text similarity matrix, warmup + cosine schedule, the shard-aware
// training loop, and zero-shot checkpoint selection.

#include <filesystem>
#include <functional>
#include <vector>

#include "fetalus/model.hpp"
#include "fetalus/preprocess.hpp"

namespace fetalus::pretrain {

using model::Mat;

struct TrainConfig {
  int epochs = 5;
  double base_lr = 1e-4;      // paper 5e-6 at full scale
  int warmup_steps = 100;     // paper 2000
  double weight_decay = 0.1;
  int batch_size = 64;
  std::uint64_t seed = 0;
  int n_jobs = 2;
  long long total_steps = 0;  // derived by train(); lr_at needs it

  void validate() const;
};

// loss = 1/2 [CE over rows + CE over columns], diagonal targets.
double clip_loss(const Mat& image_embs, const Mat& text_embs, double tau);

struct ClipLossGrads {
  double loss = 0.0;
  Mat d_image;      // N x d
  Mat d_text;       // N x d
  double d_log_tau = 0.0;
};
ClipLossGrads clip_loss_with_grads(const Mat& image_embs, const Mat& text_embs, double tau);

// Linear warmup 0 -> base_lr, then cosine decay to 0 across remaining steps.
double lr_at(long long step, const TrainConfig& cfg);

struct TrainItem {
  std::string image_id;
  GrayImage image;            // standardized to the model's input size
  std::vector<int> token_ids; // encoded caption, length max_tokens
};

struct StepLog {
  long long step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct CheckpointInfo {
  int epoch = 0;
  double mean_loss = 0.0;
  std::uint64_t seed = 0;
  std::filesystem::path path;
};

struct TrainResult {
  std::vector<CheckpointInfo> checkpoints;
  std::vector<StepLog> log;
  double initial_loss = 0.0;  // mean loss over the first epoch's first batch
  double final_loss = 0.0;    // last step's loss
};

// Batches are drawn within one shard at a time so upsampled pairs never
// repeat inside a batch (asserted). One checkpoint per epoch is written to
// checkpoint_dir as epoch_###.ckpt with a JSON metadata sidecar.
TrainResult train(const std::vector<std::vector<TrainItem>>& shards, model::ClipModel& m,
                  const TrainConfig& cfg, const preprocess::AugmentationPolicy& augment,
                  const std::filesystem::path& checkpoint_dir);

void write_train_log(const std::filesystem::path& path, const std::vector<StepLog>& log);

// Runs the evaluator (zero-shot macro-F1) on every checkpoint and returns the
// argmax; ties resolve to the earliest epoch.
std::size_t select_checkpoint(const std::vector<CheckpointInfo>& checkpoints,
                              const std::function<double(const model::ClipModel&)>& evaluate);

}  // namespace fetalus::pretrain
