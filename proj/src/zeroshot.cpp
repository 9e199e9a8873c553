#include "fetalus/zeroshot.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace fetalus::zeroshot {

PromptBank PromptBank::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open prompt bank: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str());
}

PromptBank PromptBank::from_string(const std::string& text) {
  PromptBank bank;
  std::istringstream in(text);
  std::string line, current;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      current = line.substr(1, line.size() - 2);
      continue;
    }
    if (current.empty()) throw DomainError("prompt line outside any [class] section");
    bank.prompts_[current].push_back(line);
  }
  bank.validate();
  return bank;
}

PromptBank PromptBank::from_map(const std::map<std::string, std::vector<std::string>>& prompts) {
  PromptBank bank;
  bank.prompts_ = prompts;
  bank.validate();
  return bank;
}

void PromptBank::validate() const {
  if (prompts_.empty()) throw DomainError("prompt bank is empty");
  for (const auto& [cls, ps] : prompts_)
    if (ps.size() != 5)
      throw DomainError("class '" + cls + "' must have exactly 5 prompts, found " +
                        std::to_string(ps.size()));
}

std::vector<std::string> PromptBank::class_names() const {
  std::vector<std::string> names;
  for (const auto& [cls, _] : prompts_) names.push_back(cls);
  return names;
}

std::map<std::string, Mat> class_embeddings(const PromptBank& bank, const model::ClipModel& m,
                                            const bpe::Vocab& vocab, int n_jobs) {
  std::map<std::string, Mat> out;
  for (const auto& [cls, prompts] : bank.prompts()) {
    std::vector<std::vector<int>> sequences;
    sequences.reserve(prompts.size());
    for (const auto& p : prompts)
      sequences.push_back(bpe::encode(p, vocab, m.config().max_tokens));
    Mat embs = m.encode_text_batch(sequences, vocab.eot_id(), n_jobs);
    Mat mean = embs.colwise().mean();
    out[cls] = nn::l2_normalize_rows(mean);
  }
  return out;
}

Classification classify(const Mat& image_emb,
                        const std::map<std::string, Mat>& class_embs) {
  if (class_embs.empty()) throw DomainError("classify: empty class map");
  Classification result;
  double best = -2.0;
  for (const auto& [cls, emb] : class_embs) {
    double score = image_emb.row(0).dot(emb.row(0));
    result.scores[cls] = score;
    if (score > best) {  // strict: ties keep the first class in name order
      best = score;
      result.predicted = cls;
    }
  }
  return result;
}

GaEstimator::GaEstimator(const curation::TemplateBank& templates, std::string label_key,
                         const model::ClipModel& m, const bpe::Vocab& vocab, int n_jobs)
    : templates_(templates), label_key_(std::move(label_key)), model_(m), vocab_(vocab),
      n_jobs_(n_jobs) {
  if (!templates_.has(label_key_))
    throw DomainError("GaEstimator: no templates for label set '" + label_key_ + "'");
}

const Mat& GaEstimator::sweep_embeddings(double pixel_spacing_mm) {
  std::string key = format_number(pixel_spacing_mm);
  auto it = sweep_cache_.find(key);
  if (it != sweep_cache_.end()) return it->second;

  const auto& skeletons = templates_.templates_for(label_key_);
  std::vector<std::vector<int>> sequences;
  sequences.reserve(static_cast<std::size_t>(kGaMaxDays - kGaMinDays + 1) * skeletons.size());
  for (int t = kGaMinDays; t <= kGaMaxDays; ++t)
    for (const auto& skeleton : skeletons) {
      std::string prompt = curation::render_template(skeleton, t, pixel_spacing_mm);
      sequences.push_back(bpe::encode(prompt, vocab_, model_.config().max_tokens));
    }
  Mat embs = model_.encode_text_batch(sequences, vocab_.eot_id(), n_jobs_);
  return sweep_cache_.emplace(key, std::move(embs)).first->second;
}

std::vector<double> GaEstimator::score_sweep(const Mat& image_emb, double pixel_spacing_mm) {
  const Mat& sweep = sweep_embeddings(pixel_spacing_mm);
  const int n_days = kGaMaxDays - kGaMinDays + 1;
  const auto n_prompts = static_cast<int>(sweep.rows() / n_days);
  std::vector<double> scores(static_cast<std::size_t>(n_days), 0.0);
  Eigen::VectorXd cosines = sweep * image_emb.row(0).transpose();
  for (int d = 0; d < n_days; ++d) {
    double acc = 0.0;
    for (int p = 0; p < n_prompts; ++p) acc += cosines(d * n_prompts + p);
    scores[static_cast<std::size_t>(d)] = acc / n_prompts;
  }
  return scores;
}

GAEstimate ga_from_scores(const std::vector<double>& scores) {
  if (scores.size() != static_cast<std::size_t>(kGaMaxDays - kGaMinDays + 1))
    throw ShapeError("ga_from_scores: expected one score per day in [98, 280]");
  std::vector<int> days(scores.size());
  for (std::size_t i = 0; i < days.size(); ++i) days[i] = kGaMinDays + static_cast<int>(i);
  std::stable_sort(days.begin(), days.end(), [&](int a, int b) {
    double sa = scores[static_cast<std::size_t>(a - kGaMinDays)];
    double sb = scores[static_cast<std::size_t>(b - kGaMinDays)];
    if (sa != sb) return sa > sb;
    return a < b;  // ties toward smaller GA
  });

  GAEstimate est;
  est.top_candidates.assign(days.begin(), days.begin() + 15);
  std::vector<int> sorted_top = est.top_candidates;
  std::sort(sorted_top.begin(), sorted_top.end());
  est.ga_days = sorted_top[7];  // median = 8th order statistic of 15
  return est;
}

GAEstimate GaEstimator::estimate(const Mat& image_emb, double pixel_spacing_mm) {
  if (!(pixel_spacing_mm > 0)) throw DomainError("estimate_ga: pixel spacing required");
  return ga_from_scores(score_sweep(image_emb, pixel_spacing_mm));
}

int GaEstimator::estimate_argmax(const Mat& image_emb, double pixel_spacing_mm) {
  auto scores = score_sweep(image_emb, pixel_spacing_mm);
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return kGaMinDays + static_cast<int>(best);
}

Validity check_validity(double true_hc_mm, const GAEstimate& estimate,
                        const QuantileSet& models) {
  if (true_hc_mm < 100.0 || true_hc_mm > 342.0) return Validity::excluded;
  auto [lo, hi] = hc_percentile_bounds(estimate.ga_days, models);
  return (lo <= true_hc_mm && true_hc_mm <= hi) ? Validity::valid : Validity::invalid;
}

}  // namespace fetalus::zeroshot
