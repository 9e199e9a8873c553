#pragma once
// Evaluation metrics, patient-wise cross-validation harnesses, and the
// Wilcoxon signed-rank test.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fetalus/common.hpp"
#include "fetalus/image.hpp"

namespace fetalus {

// Unweighted mean of per-class F1. A class with no predictions and no
// positives contributes 0.
double macro_f1(const std::vector<int>& preds, const std::vector<int>& labels,
                int n_classes);

// Exact pairwise AUROC: P(score_pos > score_neg) + 0.5 P(tie).
// Throws DomainError unless both classes are present.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// Dice similarity coefficient; both masks empty -> 1.0.
double dsc(const Mask& pred, const Mask& truth);
double dsc(const std::vector<float>& pred, const std::vector<float>& truth,
           float threshold = 0.5f);

// Two-sided Wilcoxon signed-rank p-value. Zero deltas are dropped; at least
// 5 nonzero deltas required. Exact distribution (DP over signed-rank sums,
// average ranks for ties) for n <= exact_threshold, normal approximation
// with continuity and tie correction above.
double wilcoxon_signed_rank(const std::vector<double>& deltas, int exact_threshold = 25);

// Rows = true class, columns = predicted class.
std::vector<std::vector<int>> confusion_matrix(const std::vector<int>& preds,
                                               const std::vector<int>& labels,
                                               int n_classes);

// One (fold, seed) training/evaluation outcome.
struct ProbeRun {
  std::string task;
  int fold = 0;       // 0-4 fold index, or support-set index
  int seed_index = 0; // 0-4
  std::string metric;
  double value = 0.0;
  std::int64_t timestamp = 0;  // unix seconds
};

void write_probe_runs(const std::filesystem::path& path, const std::vector<ProbeRun>& runs);
std::vector<ProbeRun> read_probe_runs(const std::filesystem::path& path);

// Dataset view used by the harnesses: per-sample patient id and class label.
struct HarnessDataset {
  std::vector<std::string> patient_ids;
  std::vector<int> labels;
  std::size_t size() const { return patient_ids.size(); }
};

// Index split handed to a trainer. Train/val/test index into the dataset.
struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

// Trainer callback: fit on train, model-select on val, return the test metric.
using ProbeTrainer =
    std::function<double(const SplitIndices&, std::uint64_t run_seed)>;

// Patient-wise stratified 80/20 split (stratification key = patient majority
// class), deterministic in master_seed. Returns patient-id partition.
struct PatientSplit {
  std::vector<std::string> train_patients;
  std::vector<std::string> test_patients;
};
PatientSplit patient_train_test_split(const HarnessDataset& data, double test_frac,
                                      std::uint64_t master_seed);

// Full-data protocol: stratified 5-fold CV over training patients x 5 seeds
// = exactly 25 runs, each evaluated on the fixed held-out test set.
std::vector<ProbeRun> cv_harness(const HarnessDataset& data, const std::string& task,
                                 const std::string& metric_name, const ProbeTrainer& trainer,
                                 std::uint64_t master_seed, int n_folds = 5, int n_seeds = 5);

// Data-efficient protocol: 5 random support sets (N train + N val patients,
// disjoint, drawn outside the test split) x 5 seeds = 25 runs.
std::vector<ProbeRun> support_set_harness(const HarnessDataset& data, int n_patients,
                                          const std::string& task,
                                          const std::string& metric_name,
                                          const ProbeTrainer& trainer,
                                          std::uint64_t master_seed, int n_sets = 5,
                                          int n_seeds = 5);

double mean(const std::vector<double>& v);
double stddev(const std::vector<double>& v);
double median(std::vector<double> v);

}  // namespace fetalus
