#include "fetalus/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

namespace fetalus {

using nlohmann::json;

double macro_f1(const std::vector<int>& preds, const std::vector<int>& labels,
                int n_classes) {
  if (n_classes <= 0) throw DomainError("macro_f1: empty class set");
  if (preds.size() != labels.size()) throw ShapeError("macro_f1: size mismatch");
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes)
      throw DomainError("macro_f1: label outside class set");
    if (preds[i] < 0 || preds[i] >= n_classes)
      throw DomainError("macro_f1: prediction outside class set");
  }
  double sum = 0.0;
  for (int c = 0; c < n_classes; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      bool p = preds[i] == c, t = labels[i] == c;
      tp += (p && t);
      fp += (p && !t);
      fn += (!p && t);
    }
    double f1 = 0.0;  // classes with no predictions and no positives count as 0
    if (2 * tp + fp + fn > 0)
      f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    sum += f1;
  }
  return sum / n_classes;
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("auroc: size mismatch");
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i)
    (labels[i] != 0 ? pos : neg).push_back(scores[i]);
  if (pos.empty() || neg.empty())
    throw DomainError("auroc: undefined, both classes must be present");
  double wins = 0.0;
  for (double p : pos)
    for (double n : neg) {
      if (p > n)
        wins += 1.0;
      else if (p == n)
        wins += 0.5;
    }
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

double dsc(const Mask& pred, const Mask& truth) {
  if (pred.h != truth.h || pred.w != truth.w) throw ShapeError("dsc: shape mismatch");
  std::size_t inter = 0, a = 0, b = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    bool pa = pred.data[i] != 0, pb = truth.data[i] != 0;
    inter += (pa && pb);
    a += pa;
    b += pb;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

double dsc(const std::vector<float>& pred, const std::vector<float>& truth,
           float threshold) {
  if (pred.size() != truth.size()) throw ShapeError("dsc: size mismatch");
  std::size_t inter = 0, a = 0, b = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    bool pa = pred[i] >= threshold, pb = truth[i] >= threshold;
    inter += (pa && pb);
    a += pa;
    b += pb;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

namespace {

// Average ranks of |deltas|, doubled so tied ranks stay integral.
std::vector<long long> doubled_ranks(const std::vector<double>& abs_deltas) {
  std::size_t n = abs_deltas.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return abs_deltas[a] < abs_deltas[b]; });
  std::vector<long long> r2(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && abs_deltas[order[j + 1]] == abs_deltas[order[i]]) ++j;
    // Ranks i+1 .. j+1 tie; average rank = (i+j+2)/2, doubled = i+j+2.
    long long avg2 = static_cast<long long>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k) r2[order[k]] = avg2;
    i = j + 1;
  }
  return r2;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

double wilcoxon_signed_rank(const std::vector<double>& deltas, int exact_threshold) {
  std::vector<double> nz;
  for (double d : deltas)
    if (d != 0.0) nz.push_back(d);
  if (nz.empty()) throw DomainError("wilcoxon: all deltas zero, test undefined");
  if (nz.size() < 5) throw DomainError("wilcoxon: need at least 5 nonzero deltas");

  std::size_t n = nz.size();
  std::vector<double> abs_d(n);
  for (std::size_t i = 0; i < n; ++i) abs_d[i] = std::abs(nz[i]);
  std::vector<long long> r2 = doubled_ranks(abs_d);

  double w_pos = 0.0, w_neg = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    (nz[i] > 0 ? w_pos : w_neg) += static_cast<double>(r2[i]) / 2.0;
  double w = std::min(w_pos, w_neg);

  if (n <= static_cast<std::size_t>(exact_threshold)) {
    // Exact null distribution of W+ over all 2^n sign assignments via DP
    // on the doubled rank sum.
    long long total2 = 0;
    for (long long r : r2) total2 += r;
    std::vector<double> count(static_cast<std::size_t>(total2) + 1, 0.0);
    count[0] = 1.0;
    for (long long r : r2) {
      for (long long s = total2; s >= r; --s)
        count[static_cast<std::size_t>(s)] += count[static_cast<std::size_t>(s - r)];
    }
    long long w2 = static_cast<long long>(std::llround(2.0 * w));
    double below = 0.0;
    for (long long s = 0; s <= std::min(w2, total2); ++s)
      below += count[static_cast<std::size_t>(s)];
    double p = 2.0 * below / std::pow(2.0, static_cast<double>(n));
    return std::min(1.0, p);
  }

  // Normal approximation with continuity correction and tie-corrected variance.
  double dn = static_cast<double>(n);
  double mu = dn * (dn + 1.0) / 4.0;
  double var = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0;
  std::map<long long, int> tie_groups;
  for (long long r : r2) tie_groups[r]++;
  for (const auto& [_, t] : tie_groups) {
    double td = t;
    var -= (td * td * td - td) / 48.0;
  }
  double sigma = std::sqrt(var);
  double z = (w - mu + 0.5) / sigma;
  double p = 2.0 * normal_cdf(z);
  return std::max(1e-300, std::min(1.0, p));
}

std::vector<std::vector<int>> confusion_matrix(const std::vector<int>& preds,
                                               const std::vector<int>& labels,
                                               int n_classes) {
  if (n_classes <= 0) throw DomainError("confusion_matrix: empty class set");
  if (preds.size() != labels.size()) throw ShapeError("confusion_matrix: size mismatch");
  std::vector<std::vector<int>> m(static_cast<std::size_t>(n_classes),
                                  std::vector<int>(static_cast<std::size_t>(n_classes), 0));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes || preds[i] < 0 || preds[i] >= n_classes)
      throw DomainError("confusion_matrix: index outside class set");
    m[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(preds[i])]++;
  }
  return m;
}

void write_probe_runs(const std::filesystem::path& path, const std::vector<ProbeRun>& runs) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot write probe runs: " + path.string());
  for (const auto& r : runs) {
    json j{{"task", r.task},      {"fold", r.fold},   {"seed_index", r.seed_index},
           {"metric", r.metric},  {"value", r.value}, {"timestamp", r.timestamp}};
    out << j.dump() << "\n";
  }
}

std::vector<ProbeRun> read_probe_runs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot read probe runs: " + path.string());
  std::vector<ProbeRun> runs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    ProbeRun r;
    r.task = j.at("task").get<std::string>();
    r.fold = j.at("fold").get<int>();
    r.seed_index = j.at("seed_index").get<int>();
    r.metric = j.at("metric").get<std::string>();
    r.value = j.at("value").get<double>();
    r.timestamp = j.at("timestamp").get<std::int64_t>();
    runs.push_back(std::move(r));
  }
  return runs;
}

namespace {

struct PatientInfo {
  std::string id;
  int majority_class = 0;
  std::vector<std::size_t> sample_indices;
};

std::vector<PatientInfo> group_by_patient(const HarnessDataset& data) {
  std::map<std::string, PatientInfo> by_id;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto& p = by_id[data.patient_ids[i]];
    p.id = data.patient_ids[i];
    p.sample_indices.push_back(i);
  }
  std::vector<PatientInfo> patients;
  for (auto& [id, p] : by_id) {
    std::map<int, int> counts;
    for (std::size_t i : p.sample_indices) counts[data.labels[i]]++;
    int best = -1, best_count = -1;
    for (const auto& [cls, cnt] : counts)
      if (cnt > best_count) best = cls, best_count = cnt;
    p.majority_class = best;
    patients.push_back(std::move(p));
  }
  return patients;  // sorted by id via map ordering
}

std::map<int, std::vector<std::size_t>> stratify(const std::vector<PatientInfo>& patients) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < patients.size(); ++i)
    by_class[patients[i].majority_class].push_back(i);
  return by_class;
}

}  // namespace

PatientSplit patient_train_test_split(const HarnessDataset& data, double test_frac,
                                      std::uint64_t master_seed) {
  auto patients = group_by_patient(data);
  auto by_class = stratify(patients);
  PatientSplit split;
  for (auto& [cls, idxs] : by_class) {
    Rng rng(derive_seed(master_seed, {0xA11, static_cast<std::uint64_t>(cls)}));
    rng.shuffle(idxs);
    std::size_t n_test = static_cast<std::size_t>(
        std::llround(test_frac * static_cast<double>(idxs.size())));
    if (idxs.size() >= 2 && n_test == 0) n_test = 1;
    for (std::size_t i = 0; i < idxs.size(); ++i) {
      auto& dst = i < n_test ? split.test_patients : split.train_patients;
      dst.push_back(patients[idxs[i]].id);
    }
  }
  std::sort(split.train_patients.begin(), split.train_patients.end());
  std::sort(split.test_patients.begin(), split.test_patients.end());
  return split;
}

namespace {

std::vector<std::size_t> samples_of(const std::vector<PatientInfo>& patients,
                                    const std::vector<std::size_t>& patient_idx) {
  std::vector<std::size_t> out;
  for (std::size_t pi : patient_idx)
    for (std::size_t s : patients[pi].sample_indices) out.push_back(s);
  std::sort(out.begin(), out.end());
  return out;
}

void check_no_leakage(const HarnessDataset& data, const SplitIndices& split) {
  std::vector<std::string> train_p, test_p;
  for (auto i : split.train) train_p.push_back(data.patient_ids[i]);
  for (auto i : split.val) train_p.push_back(data.patient_ids[i]);
  for (auto i : split.test) test_p.push_back(data.patient_ids[i]);
  std::sort(train_p.begin(), train_p.end());
  std::sort(test_p.begin(), test_p.end());
  std::vector<std::string> inter;
  std::set_intersection(train_p.begin(), train_p.end(), test_p.begin(), test_p.end(),
                        std::back_inserter(inter));
  if (!inter.empty())
    throw ContractError("patient leakage between train/val and test: " + inter.front());
}

}  // namespace

std::vector<ProbeRun> cv_harness(const HarnessDataset& data, const std::string& task,
                                 const std::string& metric_name, const ProbeTrainer& trainer,
                                 std::uint64_t master_seed, int n_folds, int n_seeds) {
  auto patients = group_by_patient(data);
  auto split = patient_train_test_split(data, 0.2, master_seed);

  std::map<std::string, std::size_t> patient_index;
  for (std::size_t i = 0; i < patients.size(); ++i) patient_index[patients[i].id] = i;

  std::vector<std::size_t> train_pi, test_pi;
  for (const auto& id : split.train_patients) train_pi.push_back(patient_index[id]);
  for (const auto& id : split.test_patients) test_pi.push_back(patient_index[id]);
  auto test_samples = samples_of(patients, test_pi);

  // Stratified fold assignment over training patients with a global cursor
  // so overall fold sizes differ by at most one patient.
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t pi : train_pi) by_class[patients[pi].majority_class].push_back(pi);
  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(n_folds));
  std::size_t cursor = 0;
  for (auto& [cls, idxs] : by_class) {
    Rng rng(derive_seed(master_seed, {0xF01d, static_cast<std::uint64_t>(cls)}));
    rng.shuffle(idxs);
    for (std::size_t pi : idxs) folds[cursor++ % static_cast<std::size_t>(n_folds)].push_back(pi);
  }

  std::vector<ProbeRun> runs;
  for (int f = 0; f < n_folds; ++f) {
    SplitIndices si;
    for (int g = 0; g < n_folds; ++g) {
      auto samples = samples_of(patients, folds[static_cast<std::size_t>(g)]);
      auto& dst = (g == f) ? si.val : si.train;
      dst.insert(dst.end(), samples.begin(), samples.end());
    }
    si.test = test_samples;
    check_no_leakage(data, si);
    for (int s = 0; s < n_seeds; ++s) {
      std::uint64_t run_seed = derive_seed(
          master_seed, {0x5eed, static_cast<std::uint64_t>(f), static_cast<std::uint64_t>(s)});
      ProbeRun run;
      run.task = task;
      run.fold = f;
      run.seed_index = s;
      run.metric = metric_name;
      run.value = trainer(si, run_seed);
      run.timestamp = static_cast<std::int64_t>(std::time(nullptr));
      runs.push_back(std::move(run));
    }
  }
  return runs;
}

std::vector<ProbeRun> support_set_harness(const HarnessDataset& data, int n_patients,
                                          const std::string& task,
                                          const std::string& metric_name,
                                          const ProbeTrainer& trainer,
                                          std::uint64_t master_seed, int n_sets,
                                          int n_seeds) {
  if (n_patients < 1) throw DomainError("support_set_harness: N must be >= 1");
  auto patients = group_by_patient(data);
  auto split = patient_train_test_split(data, 0.2, master_seed);

  std::map<std::string, std::size_t> patient_index;
  for (std::size_t i = 0; i < patients.size(); ++i) patient_index[patients[i].id] = i;
  std::vector<std::size_t> pool, test_pi;
  for (const auto& id : split.train_patients) pool.push_back(patient_index[id]);
  for (const auto& id : split.test_patients) test_pi.push_back(patient_index[id]);
  auto test_samples = samples_of(patients, test_pi);

  if (pool.size() < 2 * static_cast<std::size_t>(n_patients))
    throw DomainError("support_set_harness: need at least " + std::to_string(2 * n_patients) +
                      " patients outside the test split, have " + std::to_string(pool.size()));

  std::vector<ProbeRun> runs;
  for (int set = 0; set < n_sets; ++set) {
    auto shuffled = pool;
    Rng rng(derive_seed(master_seed, {0x5e7, static_cast<std::uint64_t>(set)}));
    rng.shuffle(shuffled);
    SplitIndices si;
    std::vector<std::size_t> train_pi(shuffled.begin(), shuffled.begin() + n_patients);
    std::vector<std::size_t> val_pi(shuffled.begin() + n_patients,
                                    shuffled.begin() + 2 * n_patients);
    si.train = samples_of(patients, train_pi);
    si.val = samples_of(patients, val_pi);
    si.test = test_samples;
    check_no_leakage(data, si);
    for (int s = 0; s < n_seeds; ++s) {
      std::uint64_t run_seed = derive_seed(
          master_seed,
          {0x5e7d, static_cast<std::uint64_t>(set), static_cast<std::uint64_t>(s)});
      ProbeRun run;
      run.task = task;
      run.fold = set;
      run.seed_index = s;
      run.metric = metric_name;
      run.value = trainer(si, run_seed);
      run.timestamp = static_cast<std::int64_t>(std::time(nullptr));
      runs.push_back(std::move(run));
    }
  }
  return runs;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace fetalus
