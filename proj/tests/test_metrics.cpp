#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "fetalus/metrics.hpp"

using namespace fetalus;

// Independent AUROC oracle via the rank-sum identity (different algebraic
// route than the implementation's pairwise comparison).
static double auroc_rank_oracle(const std::vector<double>& scores,
                                const std::vector<int>& labels) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(scores.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    double avg = (static_cast<double>(i + j) / 2.0) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t k = 0; k < labels.size(); ++k)
    if (labels[k] != 0) {
      rank_sum_pos += rank[k];
      ++n_pos;
    }
  std::size_t n_neg = labels.size() - n_pos;
  return (rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0) /
         (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Brute-force Wilcoxon oracle: enumerate all 2^n sign assignments.
static double wilcoxon_bruteforce(const std::vector<double>& deltas) {
  std::vector<double> nz;
  for (double d : deltas)
    if (d != 0) nz.push_back(d);
  std::size_t n = nz.size();
  std::vector<double> abs_d(n);
  for (std::size_t k = 0; k < n; ++k) abs_d[k] = std::abs(nz[k]);
  // average ranks
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return abs_d[a] < abs_d[b]; });
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && abs_d[order[j + 1]] == abs_d[order[i]]) ++j;
    double avg = (static_cast<double>(i + j) / 2.0) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double w_pos = 0, w_neg = 0;
  for (std::size_t k = 0; k < n; ++k) (nz[k] > 0 ? w_pos : w_neg) += rank[k];
  double w_obs = std::min(w_pos, w_neg);

  std::size_t count_le = 0;
  for (std::size_t mask = 0; mask < (1ULL << n); ++mask) {
    double w = 0;
    for (std::size_t k = 0; k < n; ++k)
      if (mask & (1ULL << k)) w += rank[k];
    if (w <= w_obs + 1e-12) ++count_le;
  }
  double p = 2.0 * static_cast<double>(count_le) / std::pow(2.0, static_cast<double>(n));
  return std::min(1.0, p);
}

TEST_CASE("macro_f1 basics and hand-computed oracle") {
  CHECK(macro_f1({0, 1, 2}, {0, 1, 2}, 3) == doctest::Approx(1.0));
  // all predictions class 0, labels half/half: (2/3 + 0) / 2 = 1/3
  CHECK(macro_f1({0, 0, 0, 0}, {0, 0, 1, 1}, 2) == doctest::Approx(1.0 / 3.0));
  // class 2 absent from labels and preds contributes 0
  CHECK(macro_f1({0, 1}, {0, 1}, 3) == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(macro_f1({0, 3}, {0, 1}, 2), DomainError);
  CHECK_THROWS_AS(macro_f1({}, {}, 0), DomainError);
}

TEST_CASE("macro_f1 invariant under class relabeling") {
  std::vector<int> preds{0, 1, 2, 1, 0, 2, 2, 1};
  std::vector<int> labels{0, 1, 2, 2, 0, 1, 2, 1};
  double base = macro_f1(preds, labels, 3);
  // permutation 0->2, 1->0, 2->1
  auto perm = [](int c) { return c == 0 ? 2 : (c == 1 ? 0 : 1); };
  std::vector<int> p2, l2;
  for (int v : preds) p2.push_back(perm(v));
  for (int v : labels) l2.push_back(perm(v));
  CHECK(macro_f1(p2, l2, 3) == doctest::Approx(base));
}

TEST_CASE("auroc exact cases") {
  CHECK(auroc({0.9, 0.8, 0.3, 0.2}, {1, 1, 0, 0}) == doctest::Approx(1.0));
  CHECK(auroc({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}) == doctest::Approx(0.5));
  CHECK(auroc({0.9, 0.2, 0.8, 0.3}, {1, 0, 1, 0}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(auroc({0.5, 0.6}, {1, 1}), DomainError);
}

TEST_CASE("auroc matches rank-sum oracle on random N=20 instances") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 20; ++i) {
      // Quantized scores force ties to exercise the 1/2 term.
      scores.push_back(std::floor(rng.uniform() * 8.0) / 8.0);
      labels.push_back(rng.uniform() < 0.4 ? 1 : 0);
    }
    if (std::count(labels.begin(), labels.end(), 1) == 0) labels[0] = 1;
    if (std::count(labels.begin(), labels.end(), 0) == 0) labels[1] = 0;
    CHECK(auroc(scores, labels) == doctest::Approx(auroc_rank_oracle(scores, labels)).epsilon(1e-12));
  }
}

TEST_CASE("auroc invariant under strictly monotone transform") {
  std::vector<double> scores{0.1, 0.4, 0.35, 0.8, 0.7, 0.2};
  std::vector<int> labels{0, 1, 0, 1, 1, 0};
  double base = auroc(scores, labels);
  std::vector<double> transformed;
  for (double s : scores) transformed.push_back(std::exp(3.0 * s) + 5.0);
  CHECK(auroc(transformed, labels) == doctest::Approx(base));
}

TEST_CASE("dsc formula and conventions") {
  Mask a(4, 4), b(4, 4);
  CHECK(dsc(a, b) == doctest::Approx(1.0));  // both empty
  a.at(0, 0) = 1;
  CHECK(dsc(a, b) == doctest::Approx(0.0));  // disjoint
  b.at(0, 0) = 1;
  CHECK(dsc(a, b) == doctest::Approx(1.0));
  // |A|=|B|=2 overlap 1 -> 0.5
  a.at(1, 1) = 1;
  b.at(2, 2) = 1;
  CHECK(dsc(a, b) == doctest::Approx(0.5));
  CHECK(dsc(a, b) == doctest::Approx(dsc(b, a)));  // symmetry
  Mask c(3, 3);
  CHECK_THROWS_AS(dsc(a, c), ShapeError);
}

TEST_CASE("wilcoxon exact: all-positive n=5 gives 2/32") {
  CHECK(wilcoxon_signed_rank({1, 2, 3, 4, 5}) == doctest::Approx(2.0 / 32.0));
}

TEST_CASE("wilcoxon exact: symmetric deltas give p = 1") {
  CHECK(wilcoxon_signed_rank({-1, 1, -2, 2, -3, 3}) == doctest::Approx(1.0));
}

TEST_CASE("wilcoxon matches 2^n enumeration oracle") {
  Rng rng(13);
  for (int trial = 0; trial < 8; ++trial) {
    std::vector<double> deltas;
    for (int i = 0; i < 9; ++i) {
      double d = std::floor(rng.uniform(-4, 4));
      deltas.push_back(d);
    }
    int nonzero = 0;
    for (double d : deltas) nonzero += (d != 0);
    if (nonzero < 5) continue;
    CHECK(wilcoxon_signed_rank(deltas) ==
          doctest::Approx(wilcoxon_bruteforce(deltas)).epsilon(1e-12));
  }
}

TEST_CASE("wilcoxon exact n=25 agrees with normal approximation within 0.01") {
  Rng rng(21);
  std::vector<double> deltas;
  for (int i = 0; i < 25; ++i) deltas.push_back(rng.normal(0.3, 1.0));
  double exact = wilcoxon_signed_rank(deltas, /*exact_threshold=*/25);
  double approx = wilcoxon_signed_rank(deltas, /*exact_threshold=*/0);
  CHECK(std::abs(exact - approx) < 0.01);
}

TEST_CASE("wilcoxon edge cases and monotonicity") {
  CHECK_THROWS_AS(wilcoxon_signed_rank({0, 0, 0, 0, 0}), DomainError);
  CHECK_THROWS_AS(wilcoxon_signed_rank({1, -1, 0, 0, 0}), DomainError);
  // p decreases as the delta set becomes more one-sided
  double p1 = wilcoxon_signed_rank({1, 2, 3, -4, -5, 6});
  double p2 = wilcoxon_signed_rank({1, 2, 3, 4, -5, 6});
  double p3 = wilcoxon_signed_rank({1, 2, 3, 4, 5, 6});
  CHECK(p1 > 0.0);
  CHECK(p1 <= 1.0);
  CHECK(p2 <= p1);
  CHECK(p3 <= p2);
}

TEST_CASE("confusion matrix contracts") {
  auto m = confusion_matrix({0, 1, 1}, {0, 1, 0}, 2);
  CHECK(m[0][0] == 1);
  CHECK(m[0][1] == 1);
  CHECK(m[1][1] == 1);
  int total = 0;
  for (const auto& row : m)
    for (int v : row) total += v;
  CHECK(total == 3);
  // transpose symmetry
  auto mt = confusion_matrix({0, 1, 0}, {0, 1, 1}, 2);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) CHECK(m[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] == mt[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)]);
}

namespace {

HarnessDataset synthetic_dataset(int n_patients, int per_patient, int n_classes,
                                 std::uint64_t seed) {
  HarnessDataset data;
  Rng rng(seed);
  for (int p = 0; p < n_patients; ++p) {
    int cls = p % n_classes;
    for (int k = 0; k < per_patient; ++k) {
      data.patient_ids.push_back("P" + std::to_string(p));
      data.labels.push_back(cls);
    }
  }
  (void)rng;
  return data;
}

}  // namespace

TEST_CASE("cv_harness produces 25 runs with no leakage and balanced folds") {
  auto data = synthetic_dataset(40, 5, 4, 1);
  std::vector<SplitIndices> seen;
  auto trainer = [&](const SplitIndices& si, std::uint64_t) {
    seen.push_back(si);
    return 0.5;
  };
  auto runs = cv_harness(data, "toy", "f1", trainer, 99);
  CHECK(runs.size() == 25);
  std::set<std::pair<int, int>> combos;
  for (const auto& r : runs) combos.insert({r.fold, r.seed_index});
  CHECK(combos.size() == 25);

  for (const auto& si : seen) {
    std::set<std::string> train_p, test_p;
    for (auto i : si.train) train_p.insert(data.patient_ids[i]);
    for (auto i : si.val) train_p.insert(data.patient_ids[i]);
    for (auto i : si.test) test_p.insert(data.patient_ids[i]);
    for (const auto& p : test_p) CHECK(train_p.count(p) == 0);
  }

  // Fold sizes (patients in val per fold) differ by at most one.
  std::vector<std::size_t> fold_sizes;
  for (int f = 0; f < 5; ++f) {
    std::set<std::string> val_p;
    for (auto i : seen[static_cast<std::size_t>(f * 5)].val) val_p.insert(data.patient_ids[i]);
    fold_sizes.push_back(val_p.size());
  }
  auto [mn, mx] = std::minmax_element(fold_sizes.begin(), fold_sizes.end());
  CHECK(*mx - *mn <= 1);
}

TEST_CASE("cv_harness is deterministic in the master seed") {
  auto data = synthetic_dataset(20, 4, 2, 3);
  std::vector<std::vector<std::size_t>> first, second;
  auto capture = [](std::vector<std::vector<std::size_t>>& store) {
    return [&store](const SplitIndices& si, std::uint64_t) {
      store.push_back(si.val);
      return 0.0;
    };
  };
  cv_harness(data, "t", "m", capture(first), 42);
  cv_harness(data, "t", "m", capture(second), 42);
  CHECK(first == second);
}

TEST_CASE("support_set_harness contracts") {
  auto data = synthetic_dataset(12, 3, 3, 5);
  auto trainer = [&](const SplitIndices& si, std::uint64_t) {
    std::set<std::string> train_p, val_p;
    for (auto i : si.train) train_p.insert(data.patient_ids[i]);
    for (auto i : si.val) val_p.insert(data.patient_ids[i]);
    CHECK(train_p.size() == 2);
    CHECK(val_p.size() == 2);
    for (const auto& p : val_p) CHECK(train_p.count(p) == 0);
    return 1.0;
  };
  auto runs = support_set_harness(data, 2, "t", "m", trainer, 77);
  CHECK(runs.size() == 25);
  CHECK_THROWS_AS(support_set_harness(data, 50, "t", "m", trainer, 77), DomainError);
}

TEST_CASE("probe run files round-trip") {
  std::vector<ProbeRun> runs{{"task", 1, 2, "f1", 0.75, 1234567}};
  auto path = std::filesystem::temp_directory_path() / "fetalus_test_runs.jsonl";
  write_probe_runs(path, runs);
  auto loaded = read_probe_runs(path);
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0].task == "task");
  CHECK(loaded[0].fold == 1);
  CHECK(loaded[0].value == doctest::Approx(0.75));
  std::filesystem::remove(path);
}
