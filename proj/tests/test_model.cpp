#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fetalus/bpe.hpp"
#include "fetalus/model.hpp"

using namespace fetalus;
using namespace fetalus::model;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg = ModelConfig::toy();
  cfg.image_size = 16;
  cfg.patch_size = 8;
  cfg.vision_layers = 2;
  cfg.text_layers = 1;
  cfg.vision_width = 32;
  cfg.text_width = 32;
  cfg.shared_dim = 16;
  cfg.max_tokens = 12;
  cfg.vocab_size = 300;
  return cfg;
}

GrayImage test_image(int size, std::uint64_t seed) {
  GrayImage img(size, size);
  Rng rng(seed);
  for (auto& v : img.data) v = static_cast<float>(rng.uniform());
  return img;
}

std::vector<int> test_ids(const ModelConfig& cfg, std::uint64_t seed) {
  // SOT + random body + EOT + padding (matches tokenizer layout).
  std::vector<int> ids(static_cast<std::size_t>(cfg.max_tokens), cfg.vocab_size - 1);
  ids[0] = cfg.vocab_size - 3;
  Rng rng(seed);
  std::size_t body = 4 + rng.uniform_index(4);
  for (std::size_t i = 1; i <= body; ++i) ids[i] = static_cast<int>(rng.uniform_index(256));
  ids[body + 1] = cfg.vocab_size - 2;
  return ids;
}

}  // namespace

TEST_CASE("embeddings are unit-norm and deterministic") {
  auto cfg = tiny_config();
  ClipModel m(cfg, 1);
  auto img = test_image(cfg.image_size, 2);
  Mat embs = m.encode_image_batch({img, img});
  CHECK(std::abs(embs.row(0).norm() - 1.0) < 1e-5);
  CHECK(std::abs(embs.row(1).norm() - 1.0) < 1e-5);
  CHECK((embs.row(0) - embs.row(1)).norm() == doctest::Approx(0.0));

  auto ids = test_ids(cfg, 5);
  Mat text = m.encode_text_batch({ids, ids}, cfg.vocab_size - 2);
  CHECK(std::abs(text.row(0).norm() - 1.0) < 1e-5);
  CHECK((text.row(0) - text.row(1)).norm() == doctest::Approx(0.0));
}

TEST_CASE("batch order permutes outputs identically") {
  auto cfg = tiny_config();
  ClipModel m(cfg, 3);
  auto a = test_image(cfg.image_size, 10);
  auto b = test_image(cfg.image_size, 11);
  Mat ab = m.encode_image_batch({a, b});
  Mat ba = m.encode_image_batch({b, a});
  CHECK((ab.row(0) - ba.row(1)).norm() == doctest::Approx(0.0));
  CHECK((ab.row(1) - ba.row(0)).norm() == doctest::Approx(0.0));
}

TEST_CASE("token grid exposes the expected spatial layout") {
  auto cfg = ModelConfig::toy();  // 64 px, patch 8 -> 8x8 grid
  ClipModel m(cfg, 4);
  VisionTower::Trace trace;
  m.encode_image(test_image(cfg.image_size, 1), trace);
  CHECK(trace.block_out.size() == static_cast<std::size_t>(cfg.vision_layers));
  for (const auto& tokens : trace.block_out) {
    CHECK(tokens.rows() == 1 + 64);
    CHECK(tokens.cols() == cfg.vision_width);
  }
}

TEST_CASE("wrong spatial size raises a shape error") {
  auto cfg = tiny_config();
  ClipModel m(cfg, 5);
  CHECK_THROWS_AS(m.encode_image_batch({test_image(24, 0)}), ShapeError);
}

TEST_CASE("token ids outside the vocab raise a domain error") {
  auto cfg = tiny_config();
  ClipModel m(cfg, 6);
  auto ids = test_ids(cfg, 1);
  ids[2] = cfg.vocab_size;
  CHECK_THROWS_AS(m.encode_text_batch({ids}, cfg.vocab_size - 2), DomainError);
}

TEST_CASE("prompts differing only after the truncation point encode identically") {
  std::vector<std::string> corpus{"fetal brain view one", "fetal femur view two"};
  auto vocab = bpe::Vocab::train(corpus, 300);
  std::string prefix;
  for (int i = 0; i < 300; ++i) prefix += "zq ";
  auto ids1 = bpe::encode(prefix + "alpha ending", vocab);
  auto ids2 = bpe::encode(prefix + "omega tail", vocab);
  REQUIRE(ids1 == ids2);  // truncation cut both to the same prefix

  auto cfg = tiny_config();
  cfg.max_tokens = 117;
  ClipModel m(cfg, 7);
  Mat e = m.encode_text_batch({ids1, ids2}, vocab.eot_id());
  CHECK((e.row(0) - e.row(1)).norm() == doctest::Approx(0.0));
}

TEST_CASE("similarity values and contracts") {
  Mat a(1, 4), b(2, 4);
  a << 1, 0, 0, 0;
  b << 1, 0, 0, 0, 0, 1, 0, 0;
  Mat logits = similarity(a, b, 1.0);
  CHECK(logits(0, 0) == doctest::Approx(1.0));
  CHECK(logits(0, 1) == doctest::Approx(0.0));

  // cosine 0.5 at tau=0.07 -> 7.142857...
  Mat c(1, 4), d(1, 4);
  c << 1, 0, 0, 0;
  d << 0.5, std::sqrt(3.0) / 2.0, 0, 0;
  CHECK(similarity(c, d, 0.07)(0, 0) == doctest::Approx(0.5 / 0.07).epsilon(1e-9));

  Mat bad(1, 4);
  bad << 2, 0, 0, 0;
  CHECK_THROWS_AS(similarity(bad, b, 1.0), ContractError);
  CHECK_THROWS_AS(similarity(a, b, 0.0), DomainError);
}

TEST_CASE("parameter count matches the closed-form expression") {
  for (auto cfg : {tiny_config(), ModelConfig::toy()}) {
    ClipModel m(cfg, 8);
    std::size_t expected = ClipModel::expected_vision_params(cfg) +
                           ClipModel::expected_text_params(cfg) + 1;  // + temperature
    CHECK(m.param_count() == expected);
  }
}

TEST_CASE("temperature is clamped at 0.01") {
  auto cfg = tiny_config();
  ClipModel m(cfg, 9);
  CHECK(m.temperature() == doctest::Approx(0.07));
  m.log_tau().value(0, 0) = std::log(0.001);
  m.clamp_temperature();
  CHECK(m.temperature() == doctest::Approx(0.01));
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  auto cfg = tiny_config();
  ClipModel m(cfg, 10);
  auto path = std::filesystem::temp_directory_path() / "fetalus_test_model.ckpt";
  m.save_checkpoint(path);
  auto loaded = ClipModel::load_checkpoint(path);
  CHECK(loaded->param_digest() == m.param_digest());
  CHECK(loaded->config().vision_width == cfg.vision_width);

  auto img = test_image(cfg.image_size, 3);
  Mat e1 = m.encode_image_batch({img});
  Mat e2 = loaded->encode_image_batch({img});
  CHECK((e1 - e2).norm() == doctest::Approx(0.0));
  std::filesystem::remove(path);
}

TEST_CASE("invalid configs are rejected") {
  auto cfg = tiny_config();
  cfg.image_size = 17;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.shared_dim = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
