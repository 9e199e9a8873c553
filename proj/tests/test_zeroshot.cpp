#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fetalus/zeroshot.hpp"

using namespace fetalus;
using namespace fetalus::zeroshot;
using fetalus::nn::Mat;

namespace {

model::ModelConfig zs_config() {
  model::ModelConfig cfg;
  cfg.image_size = 16;
  cfg.patch_size = 8;
  cfg.vision_layers = 1;
  cfg.text_layers = 1;
  cfg.vision_width = 32;
  cfg.text_width = 32;
  cfg.shared_dim = 16;
  cfg.max_tokens = 32;
  cfg.vocab_size = 0;  // set after the vocab is trained
  return cfg;
}

}  // namespace

TEST_CASE("prompt bank validation") {
  CHECK_THROWS_AS(PromptBank::from_string("[a]\nonly\nfour\nprompts\nhere\n"), DomainError);
  auto bank = PromptBank::from_string("[a]\n1\n2\n3\n4\n5\n[b]\nx1\nx2\nx3\nx4\nx5\n");
  CHECK(bank.class_names() == std::vector<std::string>{"a", "b"});
  auto shipped = PromptBank::load(std::filesystem::path(FETALUS_ASSET_DIR) /
                                  "prompt_bank_caption_style.txt");
  CHECK(shipped.class_names().size() == 5);
  auto typical = PromptBank::load(std::filesystem::path(FETALUS_ASSET_DIR) /
                                  "prompt_bank_typical.txt");
  CHECK(typical.class_names().size() == 5);
}

TEST_CASE("class embeddings: identical prompts equal a single-prompt embedding") {
  auto vocab = bpe::Vocab::train({"the fetal brain", "the fetal heart"}, 300);
  auto cfg = zs_config();
  cfg.vocab_size = static_cast<int>(vocab.size());
  model::ClipModel m(cfg, 3);

  auto bank = PromptBank::from_map(
      {{"brain", {"the fetal brain", "the fetal brain", "the fetal brain", "the fetal brain",
                  "the fetal brain"}},
       {"heart", {"the fetal heart", "heart view", "cardiac scan", "four chambers",
                  "fetal thorax"}}});
  auto embs = class_embeddings(bank, m, vocab);
  Mat single = m.encode_text_batch({bpe::encode("the fetal brain", vocab, cfg.max_tokens)},
                                   vocab.eot_id());
  CHECK((embs.at("brain") - single).norm() < 1e-9);
  CHECK((embs.at("brain") - embs.at("heart")).norm() > 1e-6);
  CHECK(std::abs(embs.at("heart").row(0).norm() - 1.0) < 1e-9);
}

TEST_CASE("averaging two unit vectors at 90 degrees lands at 45 degrees") {
  // exercised through the renormalized-mean convention used by the ensemble
  Mat a(1, 2), b(1, 2);
  a << 1, 0;
  b << 0, 1;
  Mat mean = 0.5 * (a + b);
  Mat renorm = nn::l2_normalize_rows(mean);
  CHECK(renorm.row(0).dot(a.row(0)) == doctest::Approx(std::sqrt(0.5)));
  CHECK(renorm.row(0).dot(b.row(0)) == doctest::Approx(std::sqrt(0.5)));
}

TEST_CASE("classify argmax, ties, rescaling invariance") {
  std::map<std::string, Mat> class_embs;
  Mat e1(1, 3), e2(1, 3), e3(1, 3);
  e1 << 1, 0, 0;
  e2 << 0, 1, 0;
  e3 << 0, 0, 1;
  class_embs["alpha"] = e1;
  class_embs["beta"] = e2;
  class_embs["gamma"] = e3;

  Mat img(1, 3);
  img << 1, 0, 0;
  auto result = classify(img, class_embs);
  CHECK(result.predicted == "alpha");
  CHECK(result.scores.at("alpha") == doctest::Approx(1.0));
  CHECK(result.scores.at("beta") == doctest::Approx(0.0));

  // single class returns that class
  std::map<std::string, Mat> only{{"solo", e2}};
  CHECK(classify(img, only).predicted == "solo");

  // exact tie between alpha and beta resolves to name order
  Mat tied(1, 3);
  tied << std::sqrt(0.5), std::sqrt(0.5), 0;
  CHECK(classify(tied, class_embs).predicted == "alpha");

  CHECK_THROWS_AS(classify(img, {}), DomainError);
}

TEST_CASE("ga_from_scores: symmetric unimodal peak and consecutive-run median") {
  const int n_days = kGaMaxDays - kGaMinDays + 1;
  std::vector<double> scores(static_cast<std::size_t>(n_days));

  // strictly unimodal, symmetric around t* = 140
  for (int i = 0; i < n_days; ++i) {
    int t = kGaMinDays + i;
    scores[static_cast<std::size_t>(i)] = -std::abs(t - 140);
  }
  auto est = ga_from_scores(scores);
  CHECK(est.ga_days == 140);
  CHECK(est.top_candidates.size() == 15);

  // top-15 = {100..114}: make them the highest scores
  for (int i = 0; i < n_days; ++i) {
    int t = kGaMinDays + i;
    scores[static_cast<std::size_t>(i)] = (t >= 100 && t <= 114) ? 10.0 + (114 - t) : 0.0;
  }
  est = ga_from_scores(scores);
  CHECK(est.ga_days == 107);

  // sweep-order invariance: scores determine the estimate, and ties break
  // toward smaller GA
  std::vector<double> flat(static_cast<std::size_t>(n_days), 1.0);
  est = ga_from_scores(flat);
  CHECK(est.ga_days == 98 + 7);
}

TEST_CASE("check_validity: inclusive bounds and the exclusion band") {
  auto set = synthetic_quantile_set();
  GAEstimate est;
  est.ga_days = 150;
  auto [lo, hi] = hc_percentile_bounds(150, set);

  CHECK(check_validity(0.5 * (lo + hi), est, set) == Validity::valid);
  CHECK(check_validity(lo, est, set) == Validity::valid);  // inclusive
  CHECK(check_validity(hi, est, set) == Validity::valid);
  CHECK(check_validity(hi + 1.0, est, set) == Validity::invalid);
  CHECK(check_validity(99.0, est, set) == Validity::excluded);
  CHECK(check_validity(343.0, est, set) == Validity::excluded);
}

TEST_CASE("GA estimator sweeps, caches, and stays within the domain") {
  auto templates = curation::TemplateBank::load(std::filesystem::path(FETALUS_ASSET_DIR) /
                                                "caption_templates.txt");
  std::vector<std::string> corpus;
  for (int t : {98, 140, 200, 280})
    for (const auto& s : templates.templates_for("brain"))
      corpus.push_back(curation::render_template(s, t, 0.7));
  auto vocab = bpe::Vocab::train(corpus, 600);

  auto cfg = zs_config();
  cfg.vocab_size = static_cast<int>(vocab.size());
  model::ClipModel m(cfg, 9);

  GaEstimator estimator(templates, "brain", m, vocab, /*n_jobs=*/2);
  GrayImage img(cfg.image_size, cfg.image_size, 0.4f);
  img.at(3, 3) = 0.9f;
  Mat emb = m.encode_image_batch({img});

  auto est = estimator.estimate(emb, 0.7);
  CHECK(est.ga_days >= kGaMinDays);
  CHECK(est.ga_days <= kGaMaxDays);
  CHECK(est.top_candidates.size() == 15);

  // deterministic + cache-consistent
  auto est2 = estimator.estimate(emb, 0.7);
  CHECK(est.ga_days == est2.ga_days);
  CHECK(est.top_candidates == est2.top_candidates);

  int argmax = estimator.estimate_argmax(emb, 0.7);
  CHECK(argmax >= kGaMinDays);
  CHECK(argmax <= kGaMaxDays);
  CHECK_THROWS_AS(estimator.estimate(emb, 0.0), DomainError);
}
