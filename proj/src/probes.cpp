#include "fetalus/probes.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <thread>

namespace fetalus::probes {

// ---------------------------------------------------------------------------
// Clip sampling

std::vector<ClipSample> sample_clips(const std::string& video_id, int video_length) {
  if (video_length < 16 || video_length > 128)
    throw DomainError("sample_clips: video length out of [16, 128]: " +
                      std::to_string(video_length));
  const int T = video_length;
  std::vector<ClipSample> clips;

  auto finish = [&](ClipSample& clip) {
    clip.video_id = video_id;
    clip.coverage =
        static_cast<double>(clip.frame_indices[15] - clip.frame_indices[0] + 1) / T;
    for (int k = 0; k < 15; ++k)
      if (clip.frame_indices[static_cast<std::size_t>(k)] >=
          clip.frame_indices[static_cast<std::size_t>(k + 1)])
        throw ContractError("sample_clips: indices not strictly increasing");
    if (clip.frame_indices[0] < 0 || clip.frame_indices[15] >= T)
      throw ContractError("sample_clips: index out of range");
    clips.push_back(clip);
  };

  if (T <= 64) {
    ClipSample clip;
    for (int k = 0; k < 16; ++k)
      clip.frame_indices[static_cast<std::size_t>(k)] =
          static_cast<int>(std::llround(static_cast<double>(k) * (T - 1) / 15.0));
    finish(clip);
  } else {
    int n_clips = (T - 60 + 7) / 8;  // ceil((T-60)/8)
    for (int c = 0; c < n_clips; ++c) {
      double start_f = n_clips == 1
                           ? 0.0
                           : static_cast<double>(c) * (T - 61) / (n_clips - 1);
      int start = static_cast<int>(std::llround(start_f));
      ClipSample clip;
      for (int k = 0; k < 16; ++k)
        clip.frame_indices[static_cast<std::size_t>(k)] = start + 4 * k;  // span 61
      finish(clip);
    }
  }
  return clips;
}

Mat combine_frames(const Mat& frame_embs, CombineMode mode) {
  if (frame_embs.rows() != 16)
    throw ShapeError("combine_frames: expected 16 frame embeddings, got " +
                     std::to_string(frame_embs.rows()));
  if (mode == CombineMode::average) return frame_embs.colwise().mean();
  Mat out(1, 16 * frame_embs.cols());
  for (int k = 0; k < 16; ++k)
    out.block(0, k * frame_embs.cols(), 1, frame_embs.cols()) = frame_embs.row(k);
  return out;
}

// ---------------------------------------------------------------------------
// Linear probes

namespace {

Mat one_hot(const std::vector<int>& y, int n_classes) {
  Mat out = Mat::Zero(static_cast<Eigen::Index>(y.size()), n_classes);
  for (std::size_t i = 0; i < y.size(); ++i) out(static_cast<Eigen::Index>(i), y[i]) = 1.0;
  return out;
}

double softmax_ce_loss(const Mat& logits, const std::vector<int>& y) {
  double total = 0.0;
  for (int r = 0; r < logits.rows(); ++r) {
    double mx = logits.row(r).maxCoeff();
    double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    total += lse - logits(r, y[static_cast<std::size_t>(r)]);
  }
  return total / static_cast<double>(logits.rows());
}

double bce_loss(const Mat& logits, const std::vector<int>& y) {
  double total = 0.0;
  for (int r = 0; r < logits.rows(); ++r) {
    double z = logits(r, 0);
    // log(1 + exp(-|z|)) form avoids overflow.
    double log1pexp = std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0);
    total += log1pexp - (y[static_cast<std::size_t>(r)] != 0 ? z : 0.0);
  }
  return total / static_cast<double>(logits.rows());
}

}  // namespace

LinearProbe LinearProbe::fit(const Mat& train_x, const std::vector<int>& train_y,
                             const Mat& val_x, const std::vector<int>& val_y, int n_classes,
                             const ProbeHyperparams& hp) {
  if (train_x.rows() == 0) throw DomainError("fit_linear_probe: empty training set");
  if (train_x.rows() != static_cast<Eigen::Index>(train_y.size()))
    throw ShapeError("fit_linear_probe: features/labels size mismatch");
  std::set<int> classes_present(train_y.begin(), train_y.end());
  if (classes_present.size() < 2)
    throw DomainError("fit_linear_probe: degenerate single-class training set");

  LinearProbe probe;
  probe.binary_ = hp.binary;
  const auto k = train_x.cols();
  const int c = hp.binary ? 1 : n_classes;
  probe.w_ = Mat::Zero(k, c);
  probe.b_ = Mat::Zero(1, c);

  Mat best_w = probe.w_, best_b = probe.b_;
  double best_val = std::numeric_limits<double>::infinity();
  const double n = static_cast<double>(train_x.rows());

  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    Mat logits = train_x * probe.w_;
    logits.rowwise() += probe.b_.row(0);
    Mat d_logits;
    if (hp.binary) {
      d_logits = logits.unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });
      for (int r = 0; r < d_logits.rows(); ++r)
        d_logits(r, 0) -= (train_y[static_cast<std::size_t>(r)] != 0 ? 1.0 : 0.0);
    } else {
      d_logits = nn::softmax_rows(logits) - one_hot(train_y, n_classes);
    }
    d_logits /= n;
    probe.w_ -= hp.lr * (train_x.transpose() * d_logits);
    probe.b_.row(0) -= hp.lr * d_logits.colwise().sum();

    if (val_x.rows() > 0) {
      Mat val_logits = val_x * probe.w_;
      val_logits.rowwise() += probe.b_.row(0);
      double val_loss = hp.binary ? bce_loss(val_logits, val_y)
                                  : softmax_ce_loss(val_logits, val_y);
      if (val_loss < best_val) {
        best_val = val_loss;
        best_w = probe.w_;
        best_b = probe.b_;
      }
    }
  }

  if (val_x.rows() > 0) {
    probe.w_ = best_w;
    probe.b_ = best_b;
    probe.best_val_loss_ = best_val;
  }
  return probe;
}

std::vector<int> LinearProbe::predict(const Mat& x) const {
  Mat logits = x * w_;
  logits.rowwise() += b_.row(0);
  std::vector<int> preds(static_cast<std::size_t>(x.rows()));
  for (int r = 0; r < logits.rows(); ++r) {
    if (binary_) {
      preds[static_cast<std::size_t>(r)] = logits(r, 0) >= 0.0 ? 1 : 0;
    } else {
      Eigen::Index best;
      logits.row(r).maxCoeff(&best);
      preds[static_cast<std::size_t>(r)] = static_cast<int>(best);
    }
  }
  return preds;
}

Mat LinearProbe::predict_proba(const Mat& x) const {
  Mat logits = x * w_;
  logits.rowwise() += b_.row(0);
  if (binary_)
    return logits.unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });
  return nn::softmax_rows(logits);
}

// ---------------------------------------------------------------------------
// Segmentation decoder

std::vector<int> SegDecoderConfig::default_taps(int n_layers) {
  return {n_layers / 4, n_layers / 2, 3 * n_layers / 4, n_layers};
}

int SegDecoderConfig::upsample_stages() const {
  int s = 0, side = grid;
  while (side < image_size) {
    side *= 2;
    ++s;
  }
  return s;
}

void SegDecoderConfig::validate() const {
  if (tap_layers.size() != 4) throw ConfigError("seg decoder needs exactly 4 tap layers");
  for (std::size_t i = 0; i + 1 < tap_layers.size(); ++i)
    if (tap_layers[i] >= tap_layers[i + 1])
      throw ConfigError("tap layers must be strictly ascending");
  if (tap_layers.front() < 1) throw ConfigError("tap layers are 1-based");
  if (encoder_width <= 0 || grid <= 0 || proj_channels <= 0 || n_structures <= 0)
    throw ConfigError("seg decoder dimensions must be positive");
  if (kernel_size != 3) throw ConfigError("seg decoder kernel size is fixed at 3");
  int s = upsample_stages();
  int side = grid;
  for (int i = 0; i < s; ++i) side *= 2;
  if (side != image_size || s < 3)
    throw ConfigError("image_size " + std::to_string(image_size) +
                      " not reachable from grid " + std::to_string(grid) +
                      " by the x2 upsampling chain (need grid * 2^S, S >= 3)");
}

std::size_t seg_decoder_param_count(const SegDecoderConfig& cfg) {
  auto e = static_cast<std::size_t>(cfg.encoder_width);
  auto p = static_cast<std::size_t>(cfg.proj_channels);
  auto s = static_cast<std::size_t>(cfg.upsample_stages());
  auto ns = static_cast<std::size_t>(cfg.n_structures);
  return 4 * e * p + 7 * p * p + p * (108 + 5 * s + ns) + ns;
}

SegDecoder::SegDecoder(const SegDecoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(seed, {0x5E6}));
  const int e = cfg_.encoder_width, p = cfg_.proj_channels;
  const int s = cfg_.upsample_stages();

  tap_proj_.resize(4);
  for (int i = 0; i < 4; ++i)
    tap_proj_[static_cast<std::size_t>(i)].init(e, p, rng, "seg.proj" + std::to_string(i), reg_);
  chain_up_.resize(6);
  for (int i = 0; i < 6; ++i)
    chain_up_[static_cast<std::size_t>(i)].init(p, rng, "seg.chain_up" + std::to_string(i), reg_);
  main_up_.resize(static_cast<std::size_t>(s));
  for (int i = 0; i < s; ++i)
    main_up_[static_cast<std::size_t>(i)].init(p, rng, "seg.main_up" + std::to_string(i), reg_);
  fuse_.resize(3);
  for (int i = 0; i < 3; ++i) {
    fuse_[static_cast<std::size_t>(i)].dw.init(2 * p, rng, "seg.fuse" + std::to_string(i) + ".dw",
                                               reg_);
    fuse_[static_cast<std::size_t>(i)].pw.init(2 * p, p, rng,
                                               "seg.fuse" + std::to_string(i) + ".pw", reg_);
  }
  head_dw_.init(p, rng, "seg.head.dw", reg_);
  head_pw_.init(p, p, rng, "seg.head.pw", reg_);
  head_out_.init(p, cfg_.n_structures, rng, "seg.head.out", reg_);
  // Zero-init output head: sigmoid outputs start at 0.5 everywhere.
  head_out_.w.value.setZero();
  head_out_.b.value.setZero();

  if (param_count() != seg_decoder_param_count(cfg_))
    throw ConfigError("seg decoder parameter accounting mismatch");
  if (param_count() > 1700000)
    throw ConfigError("seg decoder exceeds the 1.7 M parameter budget");
}

FeatureMap SegDecoder::forward(const std::vector<FeatureMap>& taps, Trace& trace) const {
  if (taps.size() != 4) throw ShapeError("seg decoder expects 4 tap feature maps");
  for (const auto& t : taps)
    if (t.c != cfg_.encoder_width || t.h != cfg_.grid || t.w != cfg_.grid)
      throw ShapeError("seg decoder tap has wrong shape");

  const int s = cfg_.upsample_stages();
  trace.tap_in = taps;
  trace.tap_proj_out.resize(4);
  for (int i = 0; i < 4; ++i)
    trace.tap_proj_out[static_cast<std::size_t>(i)] =
        tap_proj_[static_cast<std::size_t>(i)].forward(taps[static_cast<std::size_t>(i)]);

  trace.chain_in.resize(6);
  trace.chain_out.resize(6);
  auto run_chain = [&](int first, int count, const FeatureMap& start) {
    FeatureMap x = start;
    for (int i = 0; i < count; ++i) {
      trace.chain_in[static_cast<std::size_t>(first + i)] = x;
      x = chain_up_[static_cast<std::size_t>(first + i)].forward(x);
      trace.chain_out[static_cast<std::size_t>(first + i)] = x;
    }
    return x;
  };
  FeatureMap c3 = run_chain(0, 1, trace.tap_proj_out[2]);
  FeatureMap c2 = run_chain(1, 2, trace.tap_proj_out[1]);
  FeatureMap c1 = run_chain(3, 3, trace.tap_proj_out[0]);

  trace.main_in.resize(static_cast<std::size_t>(s));
  trace.main_out.resize(static_cast<std::size_t>(s));
  trace.fuse.resize(3);
  auto main_step = [&](int i, const FeatureMap& x) {
    trace.main_in[static_cast<std::size_t>(i)] = x;
    auto y = main_up_[static_cast<std::size_t>(i)].forward(x);
    trace.main_out[static_cast<std::size_t>(i)] = y;
    return y;
  };
  auto fuse_step = [&](int i, const FeatureMap& x, const FeatureMap& skip) {
    auto& ft = trace.fuse[static_cast<std::size_t>(i)];
    ft.concat_in = nn::concat_channels(x, skip);
    ft.dw_out = fuse_[static_cast<std::size_t>(i)].dw.forward(ft.concat_in);
    ft.pw_out = fuse_[static_cast<std::size_t>(i)].pw.forward(ft.dw_out);
    return nn::relu(ft.pw_out);
  };

  FeatureMap x = main_step(0, trace.tap_proj_out[3]);
  x = fuse_step(0, x, c3);
  x = main_step(1, x);
  x = fuse_step(1, x, c2);
  x = main_step(2, x);
  x = fuse_step(2, x, c1);
  for (int i = 3; i < s; ++i) x = main_step(i, x);

  trace.head_in = x;
  trace.head_dw_out = head_dw_.forward(x);
  trace.head_pw_out = head_pw_.forward(trace.head_dw_out);
  trace.head_relu_out = nn::relu(trace.head_pw_out);
  trace.logits = head_out_.forward(trace.head_relu_out);
  return trace.logits;
}

FeatureMap SegDecoder::forward(const std::vector<FeatureMap>& taps) const {
  Trace trace;
  return forward(taps, trace);
}

void SegDecoder::backward(const FeatureMap& d_logits, const Trace& trace,
                          nn::Grads& grads) const {
  const int s = cfg_.upsample_stages();
  const int p = cfg_.proj_channels;

  FeatureMap d_relu = head_out_.backward(trace.head_relu_out, d_logits, grads);
  FeatureMap d_pw = nn::relu_backward(trace.head_pw_out, d_relu);
  FeatureMap d_dw = head_pw_.backward(trace.head_dw_out, d_pw, grads);
  FeatureMap dx = head_dw_.backward(trace.head_in, d_dw, grads);

  for (int i = s - 1; i >= 3; --i)
    dx = main_up_[static_cast<std::size_t>(i)].backward(trace.main_in[static_cast<std::size_t>(i)],
                                                        dx, grads);

  std::vector<FeatureMap> d_chain_out(4);  // gradient flowing into each chain's end
  auto unfuse = [&](int i, FeatureMap d) {
    const auto& ft = trace.fuse[static_cast<std::size_t>(i)];
    FeatureMap d_pre = nn::relu_backward(ft.pw_out, d);
    FeatureMap d_dw_out = fuse_[static_cast<std::size_t>(i)].pw.backward(ft.dw_out, d_pre, grads);
    FeatureMap d_concat =
        fuse_[static_cast<std::size_t>(i)].dw.backward(ft.concat_in, d_dw_out, grads);
    FeatureMap d_main(p, d_concat.h, d_concat.w), d_skip(p, d_concat.h, d_concat.w);
    d_main.data = d_concat.data.topRows(p);
    d_skip.data = d_concat.data.bottomRows(p);
    return std::make_pair(d_main, d_skip);
  };

  auto [d_main2, d_skip2] = unfuse(2, dx);
  d_chain_out[0] = d_skip2;  // chain of z1
  dx = main_up_[2].backward(trace.main_in[2], d_main2, grads);
  auto [d_main1, d_skip1] = unfuse(1, dx);
  d_chain_out[1] = d_skip1;  // chain of z2
  dx = main_up_[1].backward(trace.main_in[1], d_main1, grads);
  auto [d_main0, d_skip0] = unfuse(0, dx);
  d_chain_out[2] = d_skip0;  // chain of z3
  dx = main_up_[0].backward(trace.main_in[0], d_main0, grads);
  FeatureMap d_proj3 = dx;  // gradient at tap_proj_out[3]

  auto back_chain = [&](int first, int count, FeatureMap d) {
    for (int i = count - 1; i >= 0; --i)
      d = chain_up_[static_cast<std::size_t>(first + i)].backward(
          trace.chain_in[static_cast<std::size_t>(first + i)], d, grads);
    return d;
  };
  FeatureMap d_proj2 = back_chain(0, 1, d_chain_out[2]);
  FeatureMap d_proj1 = back_chain(1, 2, d_chain_out[1]);
  FeatureMap d_proj0 = back_chain(3, 3, d_chain_out[0]);

  tap_proj_[3].backward(trace.tap_in[3], d_proj3, grads);
  tap_proj_[2].backward(trace.tap_in[2], d_proj2, grads);
  tap_proj_[1].backward(trace.tap_in[1], d_proj1, grads);
  tap_proj_[0].backward(trace.tap_in[0], d_proj0, grads);
}

FeatureMap SegDecoder::sigmoid(const FeatureMap& logits) {
  FeatureMap out = logits;
  out.data = out.data.unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });
  return out;
}

FeatureMap tokens_to_feature_map(const Mat& tokens, int grid) {
  if (tokens.rows() != 1 + grid * grid)
    throw ShapeError("tokens_to_feature_map: token count does not match grid");
  FeatureMap out(static_cast<int>(tokens.cols()), grid, grid);
  for (int i = 0; i < grid * grid; ++i)
    for (int ch = 0; ch < tokens.cols(); ++ch) out.data(ch, i) = tokens(1 + i, ch);
  return out;
}

SegLossGrads seg_loss(const FeatureMap& logits, const std::vector<std::vector<float>>& masks) {
  const int c = logits.c;
  const auto hw = static_cast<std::size_t>(logits.h) * static_cast<std::size_t>(logits.w);
  if (static_cast<int>(masks.size()) != c)
    throw ShapeError("seg_loss: mask channels do not match decoder outputs");

  SegLossGrads out;
  out.d_logits = FeatureMap(c, logits.h, logits.w);
  const double eps = 1.0;
  double bce_total = 0.0, dice_total = 0.0;
  for (int ch = 0; ch < c; ++ch) {
    if (masks[static_cast<std::size_t>(ch)].size() != hw)
      throw ShapeError("seg_loss: mask size does not match decoder output");
    double sum_p = 0.0, sum_y = 0.0, sum_py = 0.0;
    std::vector<double> probs(hw);
    for (std::size_t i = 0; i < hw; ++i) {
      double z = logits.data(ch, static_cast<Eigen::Index>(i));
      double pr = 1.0 / (1.0 + std::exp(-z));
      double y = masks[static_cast<std::size_t>(ch)][i];
      probs[i] = pr;
      sum_p += pr;
      sum_y += y;
      sum_py += pr * y;
      double log1pexp = std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0);
      bce_total += log1pexp - (y != 0.0f ? z : 0.0);
    }
    double denom = sum_p + sum_y + eps;
    double dice = (2.0 * sum_py + eps) / denom;
    dice_total += dice;
    for (std::size_t i = 0; i < hw; ++i) {
      double pr = probs[i];
      double y = masks[static_cast<std::size_t>(ch)][i];
      double d_bce = (pr - y) / (static_cast<double>(hw) * c);
      double d_dice_dp = (2.0 * y * denom - (2.0 * sum_py + eps)) / (denom * denom);
      double d_dice = -d_dice_dp * pr * (1.0 - pr) / c;
      out.d_logits.data(ch, static_cast<Eigen::Index>(i)) = d_bce + d_dice;
    }
  }
  out.loss = bce_total / (static_cast<double>(hw) * c) + (1.0 - dice_total / c);
  return out;
}

SegTrainResult train_seg(SegDecoder& decoder, const std::vector<SegExample>& train_set,
                         const std::vector<SegExample>& eval_set, const SegTrainConfig& cfg) {
  if (train_set.empty()) throw DomainError("train_seg: empty training set");
  nn::AdamW opt(decoder.params());
  opt.weight_decay = 0.0;
  nn::Grads grads(decoder.params());

  SegTrainResult result;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, {0x5E61, static_cast<std::uint64_t>(epoch)}));
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t b = 0; b * static_cast<std::size_t>(cfg.batch_size) < order.size(); ++b) {
      std::size_t lo = b * static_cast<std::size_t>(cfg.batch_size);
      std::size_t hi = std::min(order.size(), lo + static_cast<std::size_t>(cfg.batch_size));
      grads.zero();
      double batch_loss = 0.0;

      std::vector<nn::Grads> item_grads;
      std::vector<double> item_loss(hi - lo, 0.0);
      for (std::size_t i = lo; i < hi; ++i) item_grads.emplace_back(decoder.params());
      auto run_item = [&](std::size_t i) {
        const SegExample& ex = train_set[order[i]];
        SegDecoder::Trace trace;
        FeatureMap logits = decoder.forward(ex.taps, trace);
        auto lg = seg_loss(logits, ex.masks);
        lg.d_logits.data /= static_cast<double>(hi - lo);
        decoder.backward(lg.d_logits, trace, item_grads[i - lo]);
        item_loss[i - lo] = lg.loss;
      };
      int jobs = std::max(1, cfg.n_jobs);
      if (jobs == 1 || hi - lo < 2) {
        for (std::size_t i = lo; i < hi; ++i) run_item(i);
      } else {
        std::vector<std::thread> workers;
        for (int w = 0; w < jobs; ++w)
          workers.emplace_back([&, w] {
            for (std::size_t i = lo + static_cast<std::size_t>(w); i < hi;
                 i += static_cast<std::size_t>(jobs))
              run_item(i);
          });
        for (auto& t : workers) t.join();
      }
      for (std::size_t i = lo; i < hi; ++i) {
        grads.accumulate(item_grads[i - lo]);
        batch_loss += item_loss[i - lo];
      }

      opt.step(decoder.params(), grads, cfg.lr);
      epoch_loss += batch_loss / static_cast<double>(hi - lo);
      ++n_batches;
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(n_batches));
  }

  // Per-structure DSC on the eval set (mean of per-image DSC at 0.5).
  const auto& sample = eval_set.empty() ? train_set : eval_set;
  int n_structures = decoder.config().n_structures;
  std::vector<double> dsc_sum(static_cast<std::size_t>(n_structures), 0.0);
  for (const auto& ex : sample) {
    FeatureMap probs = SegDecoder::sigmoid(decoder.forward(ex.taps));
    for (int ch = 0; ch < n_structures; ++ch) {
      double inter = 0.0, a = 0.0, bsum = 0.0;
      for (Eigen::Index i = 0; i < probs.data.cols(); ++i) {
        bool pa = probs.data(ch, i) >= 0.5;
        bool pb = ex.masks[static_cast<std::size_t>(ch)][static_cast<std::size_t>(i)] >= 0.5f;
        inter += (pa && pb);
        a += pa;
        bsum += pb;
      }
      dsc_sum[static_cast<std::size_t>(ch)] += (a + bsum == 0.0) ? 1.0 : 2.0 * inter / (a + bsum);
    }
  }
  for (int ch = 0; ch < n_structures; ++ch) {
    result.per_structure_dsc.push_back(dsc_sum[static_cast<std::size_t>(ch)] /
                                       static_cast<double>(sample.size()));
    result.mean_dsc += result.per_structure_dsc.back();
  }
  result.mean_dsc /= n_structures;
  return result;
}

// ---------------------------------------------------------------------------
// Embedding files

namespace {
constexpr char kEmbMagic[4] = {'F', 'E', 'M', 'B'};
}

void write_embeddings(const std::filesystem::path& path, const Mat& embeddings) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError("cannot write embeddings: " + path.string());
  out.write(kEmbMagic, sizeof(kEmbMagic));
  std::uint32_t dtype = 1;  // f64
  std::uint64_t n = static_cast<std::uint64_t>(embeddings.rows());
  std::uint64_t d = static_cast<std::uint64_t>(embeddings.cols());
  out.write(reinterpret_cast<const char*>(&dtype), sizeof(dtype));
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(&d), sizeof(d));
  out.write(reinterpret_cast<const char*>(embeddings.data()),
            static_cast<std::streamsize>(sizeof(double) * n * d));
}

Mat read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot read embeddings: " + path.string());
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kEmbMagic, sizeof(magic)) != 0)
    throw DomainError("embeddings: bad magic in " + path.string());
  std::uint32_t dtype;
  std::uint64_t n, d;
  in.read(reinterpret_cast<char*>(&dtype), sizeof(dtype));
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  in.read(reinterpret_cast<char*>(&d), sizeof(d));
  if (!in || dtype != 1) throw DomainError("embeddings: unsupported header");
  Mat out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  in.read(reinterpret_cast<char*>(out.data()),
          static_cast<std::streamsize>(sizeof(double) * n * d));
  if (!in) throw DomainError("embeddings: truncated file");
  return out;
}

}  // namespace fetalus::probes
