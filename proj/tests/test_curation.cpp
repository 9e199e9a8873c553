#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "fetalus/curation.hpp"

using namespace fetalus;
using namespace fetalus::curation;

namespace {

const char* kMiniBank = R"(# test templates v1
[brain]
Brain view one[[GA:, age {ga}]][[PX:, spacing {px}]].
Brain view two[[GA: at {ga}]][[PX: with {px}]].
Brain view three[[GA:, {ga}]][[PX:, {px}]].
Brain view four[[GA: taken at {ga}]][[PX: sampled at {px}]].
Brain view five[[GA:, gestation {ga}]][[PX:, scale {px}]].
[femur]
Femur one[[GA:, age {ga}]].
Femur two[[GA: at {ga}]].
Femur three[[GA:, {ga}]].
Femur four[[GA: taken at {ga}]].
Femur five[[GA:, gestation {ga}]].
)";

ImageRecord make_record(const std::string& id, std::vector<std::string> labels,
                        std::optional<int> ga, std::optional<double> px,
                        Subgroup sg = Subgroup::standard_view) {
  ImageRecord r;
  r.image_id = id;
  r.patient_id = "P0";
  r.image_path = "images/" + id + ".png";
  r.labels = std::move(labels);
  r.ga_days = ga;
  r.pixel_spacing_mm = px;
  r.subgroup = sg;
  return r;
}

}  // namespace

TEST_CASE("caption set embeds GA and spacing verbatim, five distinct variants") {
  auto bank = TemplateBank::from_string(kMiniBank);
  auto record = make_record("i0", {"brain"}, 140, 0.2);
  auto set = build_caption_set(record, bank);
  CHECK(set.captions.size() == 5);
  std::set<std::string> unique(set.captions.begin(), set.captions.end());
  CHECK(unique.size() == 5);
  for (const auto& c : set.captions) {
    CHECK(c.find("20w 0d") != std::string::npos);
    CHECK(c.find("0.2 mm/px") != std::string::npos);
  }
}

TEST_CASE("missing GA drops the GA clause") {
  auto bank = TemplateBank::from_string(kMiniBank);
  auto record = make_record("i1", {"femur"}, std::nullopt, std::nullopt);
  auto set = build_caption_set(record, bank);
  for (const auto& c : set.captions) {
    CHECK(c.find("w ") == std::string::npos);
    CHECK(c.find("{ga}") == std::string::npos);
  }
  CHECK(set.captions[0] == "Femur one.");
}

TEST_CASE("caption building is deterministic") {
  auto bank = TemplateBank::from_string(kMiniBank);
  auto record = make_record("i2", {"brain"}, 203, 0.75);
  auto a = build_caption_set(record, bank);
  auto b = build_caption_set(record, bank);
  CHECK(a.captions == b.captions);
  // 203 days = 29w 0d
  CHECK(a.captions[0].find("29w 0d") != std::string::npos);
}

TEST_CASE("unknown label set raises with the labels listed") {
  auto bank = TemplateBank::from_string(kMiniBank);
  auto record = make_record("i3", {"spine"}, 140, 0.5);
  CHECK_THROWS_WITH_AS(build_caption_set(record, bank),
                       doctest::Contains("spine"), DomainError);
  auto empty = make_record("i4", {}, 140, 0.5);
  CHECK_THROWS_AS(build_caption_set(empty, bank), DomainError);
}

TEST_CASE("shipped template bank covers the phantom label sets") {
  auto bank = TemplateBank::load(std::filesystem::path(FETALUS_ASSET_DIR) /
                                 "caption_templates.txt");
  for (const auto& key :
       {"abdomen", "brain", "cervix", "femur", "heart", "other", "brain+transcerebellum",
        "brain+transthalamic", "brain+transventricular"})
    CHECK(bank.has(key));

  auto record = make_record("i5", {"transthalamic", "brain"}, 154, 0.7);
  CHECK(record.label_key() == "brain+transthalamic");
  auto set = build_caption_set(record, bank);
  for (const auto& c : set.captions) CHECK(c.find("22w 0d") != std::string::npos);
}

TEST_CASE("confident_flags: calibrated one-hot predictions flag nothing") {
  std::vector<std::vector<double>> probs{{1, 0}, {1, 0}, {0, 1}, {0, 1}};
  std::vector<int> labels{0, 0, 1, 1};
  CHECK(confident_flags(probs, labels).empty());
}

TEST_CASE("confident_flags: hand-enumerated 3-sample case") {
  // thresholds: t0 = (0.9 + 0.2)/2 = 0.55, t1 = 0.9 (only sample 2 has label 1)
  // sample 0: confident for class 0 only -> matches label -> not flagged
  // sample 1: 0.2 < 0.55 and 0.8 < 0.9 -> no confident class -> not flagged
  // sample 2: 0.9 >= 0.9 -> class 1 -> matches label -> not flagged
  std::vector<std::vector<double>> probs{{0.9, 0.1}, {0.2, 0.8}, {0.1, 0.9}};
  std::vector<int> labels{0, 0, 1};
  CHECK(confident_flags(probs, labels).empty());

  // Making sample 1 confidently class 1 flags it.
  probs[1] = {0.05, 0.95};
  auto flags = confident_flags(probs, labels);
  // new t1 = (0.95 + 0.9)/2 = 0.925 computed over label-1 samples only: only
  // sample 2 -> t1 = 0.9; sample 1 has 0.95 >= 0.9 and label 0 -> flagged
  CHECK(flags == std::set<std::size_t>{1});
}

TEST_CASE("confident_flags: zero-support class never confidently assigned") {
  std::vector<std::vector<double>> probs{{0.2, 0.8}, {0.3, 0.7}};
  std::vector<int> labels{1, 1};  // class 0 has no support
  CHECK(confident_flags(probs, labels).empty());
}

TEST_CASE("confident_flags recovers most injected corruptions on separable data") {
  // Synthetic separable out-of-fold probabilities: the model predicts the
  // TRUE class with ~0.9 probability regardless of the given label.
  Rng rng(31);
  const int n = 400, n_classes = 4;
  std::vector<int> true_class(n), labels(n);
  std::vector<std::vector<double>> probs(n, std::vector<double>(n_classes, 0.0));
  for (int i = 0; i < n; ++i) {
    true_class[static_cast<std::size_t>(i)] = i % n_classes;
    double top = 0.86 + 0.1 * rng.uniform();
    for (int c = 0; c < n_classes; ++c)
      probs[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] =
          c == true_class[static_cast<std::size_t>(i)] ? top : (1.0 - top) / (n_classes - 1);
    labels[static_cast<std::size_t>(i)] = true_class[static_cast<std::size_t>(i)];
  }
  // Corrupt 10% of labels.
  std::set<std::size_t> corrupted;
  for (int i = 0; i < n / 10; ++i) {
    auto idx = static_cast<std::size_t>(rng.uniform_index(n));
    labels[idx] = (true_class[idx] + 1 + static_cast<int>(rng.uniform_index(n_classes - 1))) %
                  n_classes;
    corrupted.insert(idx);
  }
  auto flags = confident_flags(probs, labels);
  std::size_t caught = 0;
  for (auto i : corrupted) caught += flags.count(i);
  CHECK(static_cast<double>(caught) >= 0.8 * static_cast<double>(corrupted.size()));
  // and few false flags on clean samples
  std::size_t false_flags = 0;
  for (auto i : flags) false_flags += corrupted.count(i) == 0;
  CHECK(static_cast<double>(false_flags) <= 0.02 * static_cast<double>(n));
}

TEST_CASE("pseudo_label thresholds are strict") {
  CHECK(pseudo_label({0.95, 0.05}) == 0);
  CHECK(pseudo_label({0.6, 0.4}) == std::nullopt);
  CHECK(pseudo_label({0.9, 0.1}) == std::nullopt);  // strictly exceeding 90%
  CHECK(pseudo_label({0.05, 0.95}) == 1);
  CHECK_THROWS_AS(pseudo_label({0.5, 0.4}), DomainError);  // sums to 0.9
}

TEST_CASE("route_subgroup by lexicon membership") {
  auto lexicon = default_view_lexicon();
  CHECK(route_subgroup(make_record("a", {"brain"}, {}, {}), lexicon) ==
        Subgroup::standard_view);
  CHECK(route_subgroup(make_record("b", {}, {}, {}), lexicon) == Subgroup::unlabeled);
  CHECK(route_subgroup(make_record("c", {"brain", "spine"}, {}, {}), lexicon) ==
        Subgroup::standard_view);  // both in lexicon
  CHECK(route_subgroup(make_record("d", {"brain", "placenta edge"}, {}, {}), lexicon) ==
        Subgroup::multi_keyword);
  CHECK(route_subgroup(make_record("e", {"4ch"}, {}, {}, Subgroup::textbook), lexicon) ==
        Subgroup::textbook);
}

namespace {

std::pair<std::vector<ImageRecord>, std::vector<CaptionSet>> shard_fixture(int n_hospital,
                                                                           int n_textbook) {
  std::vector<ImageRecord> records;
  std::vector<CaptionSet> captions;
  for (int i = 0; i < n_hospital; ++i) {
    auto r = make_record("h" + std::to_string(i), {"brain"}, 140, 0.7);
    records.push_back(r);
    captions.push_back({r.image_id, {"c1 " + r.image_id, "c2 " + r.image_id,
                                     "c3 " + r.image_id, "c4 " + r.image_id,
                                     "c5 " + r.image_id}});
  }
  for (int i = 0; i < n_textbook; ++i) {
    auto r = make_record("t" + std::to_string(i), {"heart"}, {}, {}, Subgroup::textbook);
    records.push_back(r);
    captions.push_back({r.image_id, {"t1 " + r.image_id, "t2 " + r.image_id,
                                     "t3 " + r.image_id, "t4 " + r.image_id,
                                     "t5 " + r.image_id}});
  }
  return {records, captions};
}

}  // namespace

TEST_CASE("build_shards: factor-1 records fill ceil(total/shard_size) shards uniquely") {
  auto [records, captions] = shard_fixture(100, 0);
  std::map<Subgroup, int> factors{{Subgroup::textbook, 10}};
  auto shards = build_shards(records, captions, factors, 10, 1);
  CHECK(shards.size() == 10);
  for (const auto& shard : shards) {
    std::set<std::string> ids;
    for (const auto& e : shard) ids.insert(e.image_id);
    CHECK(ids.size() == shard.size());
  }
}

TEST_CASE("build_shards: an upsampled record lands once in each shard") {
  auto [records, captions] = shard_fixture(0, 1);
  std::map<Subgroup, int> factors{{Subgroup::textbook, 10}};
  auto shards = build_shards(records, captions, factors, 1, 1);
  CHECK(shards.size() == 10);
  for (const auto& shard : shards) {
    REQUIRE(shard.size() == 1);
    CHECK(shard[0].image_id == "t0");
  }
}

TEST_CASE("build_shards: dedup impossible raises") {
  auto [records, captions] = shard_fixture(0, 1);
  std::map<Subgroup, int> factors{{Subgroup::textbook, 10}};
  // total = 10 replicas, shard_size 2 -> 5 shards < factor 10
  CHECK_THROWS_AS(build_shards(records, captions, factors, 2, 1), DomainError);
}

TEST_CASE("build_shards: dedup holds under mixed textbook x10 upsampling") {
  auto [records, captions] = shard_fixture(200, 15);
  std::map<Subgroup, int> factors{{Subgroup::textbook, 10}};
  auto shards = build_shards(records, captions, factors, 25, 7);
  std::size_t total = 0;
  std::map<std::string, int> appearances;
  for (const auto& shard : shards) {
    std::set<std::string> ids;
    for (const auto& e : shard) {
      CHECK(ids.insert(e.image_id).second);  // unique within shard
      appearances[e.image_id]++;
      ++total;
    }
  }
  CHECK(total == 200 + 15 * 10);
  for (int i = 0; i < 15; ++i) CHECK(appearances["t" + std::to_string(i)] == 10);
}

TEST_CASE("shard files round-trip") {
  auto [records, captions] = shard_fixture(12, 2);
  std::map<Subgroup, int> factors{{Subgroup::textbook, 3}};
  auto shards = build_shards(records, captions, factors, 6, 3);
  auto dir = std::filesystem::temp_directory_path() / "fetalus_test_shards";
  std::filesystem::remove_all(dir);
  write_shards(dir, shards);
  auto loaded = read_shards(dir);
  REQUIRE(loaded.size() == shards.size());
  for (std::size_t i = 0; i < shards.size(); ++i) {
    REQUIRE(loaded[i].size() == shards[i].size());
    for (std::size_t j = 0; j < shards[i].size(); ++j) {
      CHECK(loaded[i][j].image_id == shards[i][j].image_id);
      CHECK(loaded[i][j].caption == shards[i][j].caption);
    }
  }
  std::filesystem::remove_all(dir);
}
