#pragma once
// Prompt-ensembled zero-shot classification and gestational-age estimation
// with growth-percentile validity checking.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fetalus/bpe.hpp"
#include "fetalus/curation.hpp"
#include "fetalus/model.hpp"
#include "fetalus/quantile.hpp"

namespace fetalus::zeroshot {

using model::Mat;

// class name -> exactly 5 prompt strings.
class PromptBank {
 public:
  static PromptBank load(const std::filesystem::path& path);
  static PromptBank from_string(const std::string& text);
  static PromptBank from_map(const std::map<std::string, std::vector<std::string>>& prompts);

  const std::map<std::string, std::vector<std::string>>& prompts() const { return prompts_; }
  std::vector<std::string> class_names() const;

 private:
  std::map<std::string, std::vector<std::string>> prompts_;
  void validate() const;
};

// Encode the 5 prompts per class, average the unit vectors, re-normalize.
std::map<std::string, Mat> class_embeddings(const PromptBank& bank, const model::ClipModel& m,
                                            const bpe::Vocab& vocab, int n_jobs = 1);

struct Classification {
  std::string predicted;
  std::map<std::string, double> scores;  // per-class cosine
};

// Argmax cosine; ties resolve to the first class in name order.
Classification classify(const Mat& image_emb,
                        const std::map<std::string, Mat>& class_embs);

struct GAEstimate {
  int ga_days = 0;
  std::vector<int> top_candidates;  // the 15 highest-scoring GA values
  std::optional<bool> valid;
};

// Top 15 days by score (ties toward smaller GA), prediction = median
// (8th order statistic). scores[i] is the score of day 98 + i.
GAEstimate ga_from_scores(const std::vector<double>& scores);

// Sweeps GA candidates day by day over [98, 280], scoring each day as the
// mean cosine over 5 prompts built from the brain caption templates with the
// candidate GA and the image's pixel spacing. Prediction = median of the top
// 15 days (ties toward smaller GA). Prompt embeddings are cached per
// spacing, so batch evaluation pays the text-encoder sweep once.
class GaEstimator {
 public:
  GaEstimator(const curation::TemplateBank& templates, std::string label_key,
              const model::ClipModel& m, const bpe::Vocab& vocab, int n_jobs = 1);

  GAEstimate estimate(const Mat& image_emb, double pixel_spacing_mm);
  // Argmax-only baseline (no median-of-top-15 postprocessing).
  int estimate_argmax(const Mat& image_emb, double pixel_spacing_mm);

  // Per-day mean-cosine scores for one image, index 0 == 98 days.
  std::vector<double> score_sweep(const Mat& image_emb, double pixel_spacing_mm);

 private:
  const curation::TemplateBank& templates_;
  std::string label_key_;
  const model::ClipModel& model_;
  const bpe::Vocab& vocab_;
  int n_jobs_;
  std::map<std::string, Mat> sweep_cache_;  // spacing string -> (183*5) x d

  const Mat& sweep_embeddings(double pixel_spacing_mm);
};

enum class Validity { valid, invalid, excluded };

// valid iff hc_lo <= true_hc <= hc_hi at the predicted GA (inclusive).
// HC outside [100, 342] mm is excluded, mirroring the evaluation restriction.
Validity check_validity(double true_hc_mm, const GAEstimate& estimate,
                        const QuantileSet& models);

}  // namespace fetalus::zeroshot
