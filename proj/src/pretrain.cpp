#include "fetalus/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

namespace fetalus::pretrain {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(base_lr > 0)) throw ConfigError("base_lr must be positive");
}

namespace {

double cross_entropy_rows(const Mat& logits) {
  double total = 0.0;
  for (int r = 0; r < logits.rows(); ++r) {
    double mx = logits.row(r).maxCoeff();
    double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    total += lse - logits(r, r);
  }
  return total / static_cast<double>(logits.rows());
}

}  // namespace

double clip_loss(const Mat& image_embs, const Mat& text_embs, double tau) {
  if (image_embs.rows() == 0) throw DomainError("clip_loss: empty batch");
  if (image_embs.rows() != text_embs.rows() || image_embs.cols() != text_embs.cols())
    throw ShapeError("clip_loss: paired batches must match in shape");
  Mat logits = model::similarity(image_embs, text_embs, tau);
  Mat logits_t = logits.transpose();
  return 0.5 * (cross_entropy_rows(logits) + cross_entropy_rows(logits_t));
}

ClipLossGrads clip_loss_with_grads(const Mat& image_embs, const Mat& text_embs, double tau) {
  if (image_embs.rows() == 0) throw DomainError("clip_loss: empty batch");
  if (image_embs.rows() != text_embs.rows() || image_embs.cols() != text_embs.cols())
    throw ShapeError("clip_loss: paired batches must match in shape");
  const auto n = image_embs.rows();
  Mat logits = model::similarity(image_embs, text_embs, tau);

  ClipLossGrads out;
  Mat logits_t = logits.transpose();
  out.loss = 0.5 * (cross_entropy_rows(logits) + cross_entropy_rows(logits_t));

  Mat p_rows = nn::softmax_rows(logits);
  Mat p_cols = nn::softmax_rows(logits_t).transpose();
  Mat d_logits = (p_rows + p_cols - 2.0 * Mat::Identity(n, n)) / (2.0 * n);

  out.d_image = d_logits * text_embs / tau;
  out.d_text = d_logits.transpose() * image_embs / tau;
  // d/d(log tau): logits = S/tau with tau = exp(p)  =>  dL/dp = -sum(dL * logits).
  out.d_log_tau = -(d_logits.cwiseProduct(logits)).sum();
  return out;
}

double lr_at(long long step, const TrainConfig& cfg) {
  if (step < 0) throw DomainError("lr_at: negative step");
  if (cfg.warmup_steps > 0 && step < cfg.warmup_steps)
    return cfg.base_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  long long total = std::max<long long>(cfg.total_steps, cfg.warmup_steps + 1);
  double progress = static_cast<double>(step - cfg.warmup_steps) /
                    static_cast<double>(total - cfg.warmup_steps);
  progress = std::clamp(progress, 0.0, 1.0);
  return cfg.base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

namespace {

// Deterministic batch-parallel execution with a fixed chunk layout: the
// reduction order never depends on the worker count.
constexpr int kGradChunks = 8;

struct BatchWork {
  const std::vector<const TrainItem*>* items;
  const model::ClipModel* m;
  const preprocess::AugmentationPolicy* base_policy;
  std::uint64_t step_seed;
  int n_jobs;
};

void forward_batch(const BatchWork& work, Mat& image_embs, Mat& text_embs,
                   std::vector<GrayImage>& augmented) {
  const auto& items = *work.items;
  const auto n = items.size();
  augmented.resize(n);
  std::vector<std::thread> workers;
  std::size_t jobs = std::max<std::size_t>(1, std::min<std::size_t>(
                                                  static_cast<std::size_t>(work.n_jobs), n));
  auto run = [&](std::size_t w) {
    for (std::size_t i = w; i < n; i += jobs) {
      preprocess::AugmentationPolicy policy = *work.base_policy;
      policy.seed = derive_seed(work.step_seed, {static_cast<std::uint64_t>(i)});
      augmented[i] = preprocess::augment(items[i]->image, policy);
      model::VisionTower::Trace vt;
      image_embs.row(static_cast<Eigen::Index>(i)) =
          work.m->encode_image(augmented[i], vt);
      model::TextTower::Trace tt;
      text_embs.row(static_cast<Eigen::Index>(i)) = work.m->encode_text(
          items[i]->token_ids, work.m->config().vocab_size - 2, tt);
    }
  };
  if (jobs == 1) {
    run(0);
  } else {
    for (std::size_t w = 0; w < jobs; ++w) workers.emplace_back(run, w);
    for (auto& t : workers) t.join();
  }
}

void backward_batch(const BatchWork& work, const std::vector<GrayImage>& augmented,
                    const ClipLossGrads& lg, nn::Grads& grads) {
  const auto& items = *work.items;
  const auto n = items.size();
  const auto& reg = work.m->params();

  std::vector<nn::Grads> chunk_grads;
  chunk_grads.reserve(kGradChunks);
  for (int c = 0; c < kGradChunks; ++c) chunk_grads.emplace_back(reg);

  std::size_t per_chunk = (n + kGradChunks - 1) / kGradChunks;
  auto run_chunk = [&](int chunk) {
    std::size_t lo = static_cast<std::size_t>(chunk) * per_chunk;
    std::size_t hi = std::min(n, lo + per_chunk);
    for (std::size_t i = lo; i < hi; ++i) {
      // Recompute the forward with traces; keeps peak memory at one trace
      // per worker instead of one per batch element.
      model::VisionTower::Trace vt;
      work.m->encode_image(augmented[i], vt);
      work.m->vision().backward(lg.d_image.row(static_cast<Eigen::Index>(i)),
                                work.m->config(), vt, chunk_grads[static_cast<std::size_t>(chunk)]);
      model::TextTower::Trace tt;
      work.m->encode_text(items[i]->token_ids, work.m->config().vocab_size - 2, tt);
      work.m->text().backward(lg.d_text.row(static_cast<Eigen::Index>(i)),
                              work.m->config(), tt, chunk_grads[static_cast<std::size_t>(chunk)]);
    }
  };

  int jobs = std::max(1, std::min(work.n_jobs, kGradChunks));
  if (jobs == 1) {
    for (int c = 0; c < kGradChunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> workers;
    for (int w = 0; w < jobs; ++w)
      workers.emplace_back([&, w] {
        for (int c = w; c < kGradChunks; c += jobs) run_chunk(c);
      });
    for (auto& t : workers) t.join();
  }
  for (int c = 0; c < kGradChunks; ++c) grads.accumulate(chunk_grads[static_cast<std::size_t>(c)]);
}

}  // namespace

TrainResult train(const std::vector<std::vector<TrainItem>>& shards, model::ClipModel& m,
                  const TrainConfig& cfg, const preprocess::AugmentationPolicy& augment,
                  const std::filesystem::path& checkpoint_dir) {
  cfg.validate();
  if (shards.empty()) throw DomainError("train: no shards");
  long long steps_per_epoch = 0;
  for (const auto& shard : shards) {
    if (!shard.empty() && shard.size() < static_cast<std::size_t>(cfg.batch_size))
      throw ConfigError("train: batch_size " + std::to_string(cfg.batch_size) +
                        " exceeds shard size " + std::to_string(shard.size()));
    steps_per_epoch += static_cast<long long>(shard.size()) / cfg.batch_size;
  }
  if (steps_per_epoch == 0) throw ConfigError("train: shards yield no full batches");

  TrainConfig run_cfg = cfg;
  run_cfg.total_steps = steps_per_epoch * cfg.epochs;

  std::filesystem::create_directories(checkpoint_dir);
  nn::AdamW opt(m.params());
  opt.weight_decay = cfg.weight_decay;
  nn::Grads grads(m.params());

  TrainResult result;
  long long global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> shard_order(shards.size());
    for (std::size_t i = 0; i < shards.size(); ++i) shard_order[i] = i;
    Rng shard_rng(derive_seed(cfg.seed, {0xE, static_cast<std::uint64_t>(epoch)}));
    shard_rng.shuffle(shard_order);

    double epoch_loss = 0.0;
    long long epoch_steps = 0;
    for (std::size_t si : shard_order) {
      const auto& shard = shards[si];
      std::vector<std::size_t> idx(shard.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      Rng item_rng(derive_seed(cfg.seed, {0xB, static_cast<std::uint64_t>(epoch), si}));
      item_rng.shuffle(idx);

      std::size_t n_batches = shard.size() / static_cast<std::size_t>(cfg.batch_size);
      for (std::size_t b = 0; b < n_batches; ++b) {
        std::vector<const TrainItem*> batch;
        std::set<std::string> seen_ids;
        for (int k = 0; k < cfg.batch_size; ++k) {
          const TrainItem& item = shard[idx[b * static_cast<std::size_t>(cfg.batch_size) +
                                            static_cast<std::size_t>(k)]];
          if (!seen_ids.insert(item.image_id).second)
            throw ContractError("train: duplicate image " + item.image_id +
                                " inside one batch (shard dedup violated)");
          batch.push_back(&item);
        }

        BatchWork work{&batch, &m, &augment,
                       derive_seed(cfg.seed, {0xA6, static_cast<std::uint64_t>(global_step)}),
                       cfg.n_jobs};
        Mat image_embs(cfg.batch_size, m.config().shared_dim);
        Mat text_embs(cfg.batch_size, m.config().shared_dim);
        std::vector<GrayImage> augmented;
        forward_batch(work, image_embs, text_embs, augmented);

        ClipLossGrads lg = clip_loss_with_grads(image_embs, text_embs, m.temperature());
        grads.zero();
        backward_batch(work, augmented, lg, grads);
        grads.of(m.log_tau())(0, 0) += lg.d_log_tau;

        double lr = lr_at(global_step, run_cfg);
        opt.step(m.params(), grads, lr);
        m.clamp_temperature();

        result.log.push_back({global_step, lr, lg.loss});
        if (global_step == 0) result.initial_loss = lg.loss;
        result.final_loss = lg.loss;
        epoch_loss += lg.loss;
        ++epoch_steps;
        ++global_step;
      }
    }

    CheckpointInfo info;
    info.epoch = epoch;
    info.mean_loss = epoch_steps > 0 ? epoch_loss / static_cast<double>(epoch_steps) : 0.0;
    info.seed = cfg.seed;
    char name[32];
    std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", epoch);
    info.path = checkpoint_dir / name;
    m.save_checkpoint(info.path);
    json meta{{"epoch", info.epoch}, {"loss", info.mean_loss}, {"seed", info.seed}};
    std::ofstream meta_out(checkpoint_dir / (std::string(name) + ".meta.json"));
    meta_out << meta.dump(2) << "\n";
    result.checkpoints.push_back(info);
  }
  return result;
}

void write_train_log(const std::filesystem::path& path, const std::vector<StepLog>& log) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot write train log: " + path.string());
  for (const auto& entry : log) {
    json j{{"step", entry.step}, {"lr", entry.lr}, {"loss", entry.loss}};
    out << j.dump() << "\n";
  }
}

std::size_t select_checkpoint(const std::vector<CheckpointInfo>& checkpoints,
                              const std::function<double(const model::ClipModel&)>& evaluate) {
  if (checkpoints.empty()) throw DomainError("select_checkpoint: no checkpoints");
  std::size_t best = 0;
  double best_score = -1.0;
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    auto m = model::ClipModel::load_checkpoint(checkpoints[i].path);
    double score = evaluate(*m);
    if (score > best_score) {  // strict: ties keep the earliest epoch
      best_score = score;
      best = i;
    }
  }
  return best;
}

}  // namespace fetalus::pretrain
