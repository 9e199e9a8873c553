#include "fetalus/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <thread>

#include <nlohmann/json.hpp>

// Unit-norm contract checks on similarity inputs. On by default; defining
// FETALUS_NO_CONTRACT_CHECKS disables them for release-critical paths.
#ifndef FETALUS_NO_CONTRACT_CHECKS
#define FETALUS_CHECK_CONTRACTS 1
#endif

namespace fetalus::model {

using nlohmann::json;

ModelConfig ModelConfig::toy() {
  ModelConfig cfg;
  cfg.image_size = 64;
  cfg.patch_size = 8;
  cfg.vision_layers = 4;
  cfg.text_layers = 2;
  cfg.vision_width = 128;
  cfg.text_width = 128;
  cfg.shared_dim = 128;
  cfg.max_tokens = 117;
  cfg.vocab_size = 2048;
  return cfg;
}

void ModelConfig::validate() const {
  if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0)
    throw ConfigError("image_size must be a positive multiple of patch_size");
  if (shared_dim <= 0) throw ConfigError("shared_dim must be positive");
  if (vision_layers < 1 || text_layers < 1) throw ConfigError("towers need >= 1 layer");
  if (vision_width % vision_heads() != 0 || text_width % text_heads() != 0)
    throw ConfigError("tower width must be divisible by its head count");
  if (max_tokens < 2) throw ConfigError("max_tokens must be >= 2");
  if (vocab_size < 4) throw ConfigError("vocab_size too small");
  if (!(temperature_init >= 0.01)) throw ConfigError("temperature_init must be >= 0.01");
}

// ---------------------------------------------------------------------------

void VisionTower::init(const ModelConfig& cfg, Rng& rng, nn::ParamRegistry& reg) {
  patch_embed.init(cfg.patch_size * cfg.patch_size, cfg.vision_width, rng, 0.02,
                   "vision.patch_embed", reg);
  cls_token.value = Mat::Zero(1, cfg.vision_width);
  for (int c = 0; c < cfg.vision_width; ++c) cls_token.value(0, c) = rng.trunc_normal(0, 0.02);
  reg.add(cls_token, "vision.cls", false);
  pos_embed.value = Mat::Zero(1 + cfg.n_patches(), cfg.vision_width);
  for (int r = 0; r < pos_embed.value.rows(); ++r)
    for (int c = 0; c < cfg.vision_width; ++c) pos_embed.value(r, c) = rng.trunc_normal(0, 0.02);
  reg.add(pos_embed, "vision.pos", false);
  blocks.resize(static_cast<std::size_t>(cfg.vision_layers));
  for (int l = 0; l < cfg.vision_layers; ++l)
    blocks[static_cast<std::size_t>(l)].init(cfg.vision_width, cfg.vision_heads(), false, rng,
                                             "vision.block" + std::to_string(l), reg);
  ln_final.init(cfg.vision_width, "vision.ln_final", reg);
  proj.init(cfg.vision_width, cfg.shared_dim, rng, 0.02, "vision.proj", reg, /*bias=*/false);
}

namespace {

Mat extract_patches(const GrayImage& image, const ModelConfig& cfg) {
  if (image.h != cfg.image_size || image.w != cfg.image_size)
    throw ShapeError("encode_image: expected " + std::to_string(cfg.image_size) + "x" +
                     std::to_string(cfg.image_size) + " image, got " +
                     std::to_string(image.h) + "x" + std::to_string(image.w));
  const int g = cfg.grid(), p = cfg.patch_size;
  Mat patches(g * g, p * p);
  for (int pr = 0; pr < g; ++pr)
    for (int pc = 0; pc < g; ++pc) {
      int row = pr * g + pc;
      for (int r = 0; r < p; ++r)
        for (int c = 0; c < p; ++c)
          patches(row, r * p + c) = image.at(pr * p + r, pc * p + c);
    }
  return patches;
}

}  // namespace

Mat VisionTower::forward(const GrayImage& image, const ModelConfig& cfg, Trace& trace) const {
  trace.patches = extract_patches(image, cfg);
  Mat patch_tokens = patch_embed.forward(trace.patches);

  Mat tokens(1 + patch_tokens.rows(), patch_tokens.cols());
  tokens.row(0) = cls_token.value.row(0);
  tokens.bottomRows(patch_tokens.rows()) = patch_tokens;
  tokens += pos_embed.value;

  trace.block_in.clear();
  trace.block_out.clear();
  trace.block_caches.assign(blocks.size(), {});
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    trace.block_in.push_back(tokens);
    tokens = blocks[l].forward(tokens, trace.block_caches[l]);
    trace.block_out.push_back(tokens);
  }

  trace.cls_normed = ln_final.forward(tokens.topRows(1), trace.ln_cache);
  trace.pre_norm = proj.forward(trace.cls_normed);
  trace.embedding = nn::l2_normalize_rows(trace.pre_norm);
  return trace.embedding;
}

void VisionTower::backward(const Mat& d_embedding, const ModelConfig& cfg, const Trace& trace,
                           nn::Grads& grads) const {
  (void)cfg;
  Mat d_pre = nn::l2_normalize_rows_backward(trace.pre_norm, trace.embedding, d_embedding);
  Mat d_cls_normed = proj.backward(trace.cls_normed, d_pre, grads);
  Mat d_cls = ln_final.backward(d_cls_normed, trace.ln_cache, grads);

  Mat d_tokens = Mat::Zero(trace.block_out.back().rows(), trace.block_out.back().cols());
  d_tokens.row(0) = d_cls.row(0);
  for (std::size_t l = blocks.size(); l-- > 0;)
    d_tokens = blocks[l].backward(d_tokens, trace.block_caches[l], grads);

  grads.of(pos_embed) += d_tokens;
  grads.of(cls_token).row(0) += d_tokens.row(0);
  Mat d_patch_tokens = d_tokens.bottomRows(d_tokens.rows() - 1);
  patch_embed.backward(trace.patches, d_patch_tokens, grads);
}

// ---------------------------------------------------------------------------

void TextTower::init(const ModelConfig& cfg, Rng& rng, nn::ParamRegistry& reg) {
  token_embed.init(cfg.vocab_size, cfg.text_width, rng, 0.02, "text.token_embed", reg);
  pos_embed.value = Mat::Zero(cfg.max_tokens, cfg.text_width);
  for (int r = 0; r < cfg.max_tokens; ++r)
    for (int c = 0; c < cfg.text_width; ++c) pos_embed.value(r, c) = rng.trunc_normal(0, 0.01);
  reg.add(pos_embed, "text.pos", false);
  blocks.resize(static_cast<std::size_t>(cfg.text_layers));
  for (int l = 0; l < cfg.text_layers; ++l)
    blocks[static_cast<std::size_t>(l)].init(cfg.text_width, cfg.text_heads(), true, rng,
                                             "text.block" + std::to_string(l), reg);
  ln_final.init(cfg.text_width, "text.ln_final", reg);
  proj.init(cfg.text_width, cfg.shared_dim, rng, 0.02, "text.proj", reg, /*bias=*/false);
}

Mat TextTower::forward(const std::vector<int>& ids, int eot_id, const ModelConfig& cfg,
                       Trace& trace) const {
  if (ids.size() != static_cast<std::size_t>(cfg.max_tokens))
    throw ShapeError("encode_text: sequence length must equal max_tokens");
  for (int id : ids)
    if (id < 0 || id >= cfg.vocab_size)
      throw DomainError("encode_text: token id outside vocab: " + std::to_string(id));

  trace.ids = ids;
  trace.eot_pos = -1;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] == eot_id) {
      trace.eot_pos = static_cast<int>(i);
      break;
    }
  if (trace.eot_pos < 0) throw DomainError("encode_text: sequence lacks the EOT token");

  Mat tokens = token_embed.forward(ids) + pos_embed.value;
  trace.block_in.clear();
  trace.block_caches.assign(blocks.size(), {});
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    trace.block_in.push_back(tokens);
    tokens = blocks[l].forward(tokens, trace.block_caches[l]);
  }
  trace.tokens_final = tokens;

  Mat eot_feature = ln_final.forward(tokens.row(trace.eot_pos), trace.ln_cache);
  trace.pre_norm = proj.forward(eot_feature);
  trace.embedding = nn::l2_normalize_rows(trace.pre_norm);
  return trace.embedding;
}

void TextTower::backward(const Mat& d_embedding, const ModelConfig& cfg, const Trace& trace,
                         nn::Grads& grads) const {
  (void)cfg;
  Mat d_pre = nn::l2_normalize_rows_backward(trace.pre_norm, trace.embedding, d_embedding);
  Mat eot_feature = trace.tokens_final.row(trace.eot_pos);
  // ln_final was applied to the EOT row only; recompute its normed output
  // from the cache for the projection backward.
  Mat eot_normed = trace.ln_cache.xhat.cwiseProduct(
                       ln_final.gamma.value.replicate(trace.ln_cache.xhat.rows(), 1)) +
                   ln_final.beta.value.replicate(trace.ln_cache.xhat.rows(), 1);
  Mat d_eot_normed = proj.backward(eot_normed, d_pre, grads);
  Mat d_eot = ln_final.backward(d_eot_normed, trace.ln_cache, grads);

  Mat d_tokens = Mat::Zero(trace.tokens_final.rows(), trace.tokens_final.cols());
  d_tokens.row(trace.eot_pos) = d_eot.row(0);
  for (std::size_t l = blocks.size(); l-- > 0;)
    d_tokens = blocks[l].backward(d_tokens, trace.block_caches[l], grads);

  grads.of(pos_embed) += d_tokens;
  token_embed.backward(trace.ids, d_tokens, grads);
}

// ---------------------------------------------------------------------------

Mat similarity(const Mat& image_embs, const Mat& text_embs, double tau) {
  if (image_embs.cols() != text_embs.cols())
    throw ShapeError("similarity: embedding dims differ");
  if (!(tau > 0.0)) throw DomainError("similarity: temperature must be positive");
#ifdef FETALUS_CHECK_CONTRACTS
  for (int r = 0; r < image_embs.rows(); ++r)
    if (std::abs(image_embs.row(r).norm() - 1.0) > 1e-3)
      throw ContractError("similarity: image embedding row " + std::to_string(r) +
                          " is not unit-norm");
  for (int r = 0; r < text_embs.rows(); ++r)
    if (std::abs(text_embs.row(r).norm() - 1.0) > 1e-3)
      throw ContractError("similarity: text embedding row " + std::to_string(r) +
                          " is not unit-norm");
#endif
  return image_embs * text_embs.transpose() / tau;
}

// ---------------------------------------------------------------------------

ClipModel::ClipModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(seed, {0xC11F}));
  vision_.init(cfg_, rng, reg_);
  text_.init(cfg_, rng, reg_);
  log_tau_.value = Mat::Constant(1, 1, std::log(cfg_.temperature_init));
  reg_.add(log_tau_, "logit.log_tau", false);
}

double ClipModel::temperature() const { return std::exp(log_tau_.value(0, 0)); }

void ClipModel::clamp_temperature() {
  double floor_log = std::log(0.01);
  if (log_tau_.value(0, 0) < floor_log) log_tau_.value(0, 0) = floor_log;
}

Mat ClipModel::encode_image(const GrayImage& image, VisionTower::Trace& trace) const {
  return vision_.forward(image, cfg_, trace);
}

Mat ClipModel::encode_text(const std::vector<int>& ids, int eot_id,
                           TextTower::Trace& trace) const {
  return text_.forward(ids, eot_id, cfg_, trace);
}

namespace {

// Deterministic batch-parallel map: results indexed by position, workers
// pull chunks; output does not depend on the number of jobs.
template <typename Fn>
void parallel_for(std::size_t n, int n_jobs, Fn&& fn) {
  if (n_jobs <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  std::size_t jobs = std::min<std::size_t>(static_cast<std::size_t>(n_jobs), n);
  for (std::size_t w = 0; w < jobs; ++w)
    workers.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += jobs) fn(i);
    });
  for (auto& t : workers) t.join();
}

}  // namespace

Mat ClipModel::encode_image_batch(const std::vector<GrayImage>& images, int n_jobs) const {
  Mat out(static_cast<Eigen::Index>(images.size()), cfg_.shared_dim);
  std::vector<std::string> errors(images.size());
  parallel_for(images.size(), n_jobs, [&](std::size_t i) {
    try {
      VisionTower::Trace trace;
      out.row(static_cast<Eigen::Index>(i)) = vision_.forward(images[i], cfg_, trace);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (const auto& e : errors)
    if (!e.empty()) throw ShapeError(e);
  return out;
}

Mat ClipModel::encode_text_batch(const std::vector<std::vector<int>>& sequences, int eot_id,
                                 int n_jobs) const {
  Mat out(static_cast<Eigen::Index>(sequences.size()), cfg_.shared_dim);
  std::vector<std::string> errors(sequences.size());
  parallel_for(sequences.size(), n_jobs, [&](std::size_t i) {
    try {
      TextTower::Trace trace;
      out.row(static_cast<Eigen::Index>(i)) = text_.forward(sequences[i], eot_id, cfg_, trace);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (const auto& e : errors)
    if (!e.empty()) throw DomainError(e);
  return out;
}

std::size_t ClipModel::expected_vision_params(const ModelConfig& cfg) {
  auto w = static_cast<std::size_t>(cfg.vision_width);
  auto p = static_cast<std::size_t>(cfg.patch_size);
  auto d = static_cast<std::size_t>(cfg.shared_dim);
  auto n = static_cast<std::size_t>(cfg.n_patches());
  std::size_t per_block = 12 * w * w + 13 * w;
  return p * p * w + w          // patch embed
         + w                    // cls token
         + (n + 1) * w          // positional embedding
         + static_cast<std::size_t>(cfg.vision_layers) * per_block
         + 2 * w                // final layer norm
         + w * d;               // projection
}

std::size_t ClipModel::expected_text_params(const ModelConfig& cfg) {
  auto w = static_cast<std::size_t>(cfg.text_width);
  auto d = static_cast<std::size_t>(cfg.shared_dim);
  std::size_t per_block = 12 * w * w + 13 * w;
  return static_cast<std::size_t>(cfg.vocab_size) * w
         + static_cast<std::size_t>(cfg.max_tokens) * w
         + static_cast<std::size_t>(cfg.text_layers) * per_block
         + 2 * w
         + w * d;
}

std::uint64_t ClipModel::param_digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < reg_.size(); ++i) {
    const Mat& m = reg_.at(i).value;
    const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
    std::size_t n = static_cast<std::size_t>(m.size()) * sizeof(double);
    for (std::size_t b = 0; b < n; ++b) {
      h ^= bytes[b];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

namespace {

json config_to_json(const ModelConfig& c) {
  return json{{"image_size", c.image_size},     {"patch_size", c.patch_size},
              {"vision_layers", c.vision_layers}, {"text_layers", c.text_layers},
              {"vision_width", c.vision_width},  {"text_width", c.text_width},
              {"shared_dim", c.shared_dim},      {"max_tokens", c.max_tokens},
              {"vocab_size", c.vocab_size},      {"temperature_init", c.temperature_init}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.image_size = j.at("image_size").get<int>();
  c.patch_size = j.at("patch_size").get<int>();
  c.vision_layers = j.at("vision_layers").get<int>();
  c.text_layers = j.at("text_layers").get<int>();
  c.vision_width = j.at("vision_width").get<int>();
  c.text_width = j.at("text_width").get<int>();
  c.shared_dim = j.at("shared_dim").get<int>();
  c.max_tokens = j.at("max_tokens").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.temperature_init = j.at("temperature_init").get<double>();
  return c;
}

constexpr char kCheckpointMagic[8] = {'F', 'U', 'S', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DomainError("checkpoint: truncated file");
  return v;
}

}  // namespace

void ClipModel::save_checkpoint(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError("cannot write checkpoint: " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_pod<std::uint32_t>(out, 1);  // container version
  std::string cfg_json = config_to_json(cfg_).dump();
  write_pod<std::uint64_t>(out, cfg_json.size());
  out.write(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));
  write_pod<std::uint64_t>(out, reg_.size());
  for (std::size_t i = 0; i < reg_.size(); ++i) {
    const auto& p = reg_.at(i);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(p.value.rows()));
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(p.value.cols()));
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p.value.size())));
  }
}

std::unique_ptr<ClipModel> ClipModel::load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot read checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw DomainError("checkpoint: bad magic in " + path.string());
  auto version = read_pod<std::uint32_t>(in);
  if (version != 1) throw DomainError("checkpoint: unsupported version");
  auto cfg_len = read_pod<std::uint64_t>(in);
  std::string cfg_json(cfg_len, '\0');
  in.read(cfg_json.data(), static_cast<std::streamsize>(cfg_len));
  ModelConfig cfg = config_from_json(json::parse(cfg_json));

  auto model = std::make_unique<ClipModel>(cfg, /*seed=*/0);
  auto n_tensors = read_pod<std::uint64_t>(in);
  if (n_tensors != model->reg_.size())
    throw DomainError("checkpoint: tensor count mismatch");
  std::map<std::string, nn::Param*> by_name;
  for (std::size_t i = 0; i < model->reg_.size(); ++i)
    by_name[model->reg_.at(i).name] = &model->reg_.at(i);
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    auto name_len = read_pod<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    auto rows = read_pod<std::uint64_t>(in);
    auto cols = read_pod<std::uint64_t>(in);
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DomainError("checkpoint: unknown tensor " + name);
    nn::Param& p = *it->second;
    if (static_cast<std::uint64_t>(p.value.rows()) != rows ||
        static_cast<std::uint64_t>(p.value.cols()) != cols)
      throw DomainError("checkpoint: shape mismatch for " + name);
    in.read(reinterpret_cast<char*>(p.value.data()),
            static_cast<std::streamsize>(sizeof(double) * rows * cols));
    if (!in) throw DomainError("checkpoint: truncated tensor " + name);
  }
  return model;
}

}  // namespace fetalus::model
