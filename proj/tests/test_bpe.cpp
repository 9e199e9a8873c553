#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fetalus/bpe.hpp"
#include "fetalus/curation.hpp"

using namespace fetalus;
using namespace fetalus::bpe;

TEST_CASE("first merge is the highest-frequency pair") {
  // pair (a,b) occurs 3x across "abab" and "ab"
  auto vocab = Vocab::train({"abab", "ab"}, 260);  // exactly one merge
  REQUIRE(vocab.n_merges() == 1);
  CHECK(vocab.merges()[0].first == "a");
  CHECK(vocab.merges()[0].second == "b");
}

TEST_CASE("vocab_size boundaries") {
  CHECK_THROWS_AS(Vocab::train({"abc"}, 256), DomainError);
  CHECK_THROWS_AS(Vocab::train({"abc"}, 100), DomainError);
  CHECK_THROWS_AS(Vocab::train({}, 300), DomainError);
}

TEST_CASE("training is deterministic") {
  std::vector<std::string> corpus{"the fetal brain plane", "the fetal femur plane",
                                  "fetal heart view", "the the the"};
  auto a = Vocab::train(corpus, 300);
  auto b = Vocab::train(corpus, 300);
  CHECK(a.merges() == b.merges());
}

TEST_CASE("round trip through encode/decode is lossless below truncation") {
  std::vector<std::string> corpus{"fetal ultrasound image of the brain",
                                  "fetal ultrasound image of the femur"};
  auto vocab = Vocab::train(corpus, 300);
  for (const auto& s :
       {std::string("fetal brain image"), std::string("unseen words with 20w 3d tokens"),
        std::string("punctuation, 0.7 mm/px!"), std::string("  leading and  double spaces")}) {
    auto ids = encode(s, vocab);
    CHECK(decode(ids, vocab) == s);
  }
}

TEST_CASE("encode shape contracts") {
  auto vocab = Vocab::train({"abc def"}, 300);
  auto empty = encode("", vocab);
  REQUIRE(empty.size() == 117);
  CHECK(empty[0] == vocab.sot_id());
  CHECK(empty[1] == vocab.eot_id());
  for (std::size_t i = 2; i < empty.size(); ++i) CHECK(empty[i] == vocab.pad_id());

  std::string long_text(500, 'x');
  auto truncated = encode(long_text, vocab);
  REQUIRE(truncated.size() == 117);
  CHECK(truncated[116] == vocab.eot_id());
  for (int id : truncated) CHECK(id != -1);
}

TEST_CASE("every template-bank caption encodes to exactly 117 ids") {
  auto bank = curation::TemplateBank::load(std::filesystem::path(FETALUS_ASSET_DIR) /
                                           "caption_templates.txt");
  std::vector<std::string> corpus;
  ImageRecord record;
  record.image_id = "x";
  record.patient_id = "p";
  record.ga_days = 161;
  record.pixel_spacing_mm = 0.7;
  for (const auto& key : bank.label_keys()) {
    record.labels.clear();
    std::string part;
    std::stringstream ss(key);
    while (std::getline(ss, part, '+')) record.labels.push_back(part);
    auto set = curation::build_caption_set(record, bank);
    corpus.insert(corpus.end(), set.captions.begin(), set.captions.end());
  }
  auto vocab = Vocab::train(corpus, 2048);
  for (const auto& caption : corpus) {
    auto ids = encode(caption, vocab);
    CHECK(ids.size() == 117);
    // captions fit without truncation: an EOT appears before the end
    bool truncated = ids[116] == vocab.eot_id() && ids[115] != vocab.pad_id();
    bool has_room = false;
    for (std::size_t i = 0; i + 1 < ids.size(); ++i)
      if (ids[i] == vocab.eot_id()) has_room = true;
    CHECK((has_room || !truncated));
  }
}

TEST_CASE("vocab file round-trip preserves tokenization") {
  auto vocab = Vocab::train({"fetal ultrasound of the fetal brain", "mm/px 20w 3d"}, 400);
  auto path = std::filesystem::temp_directory_path() / "fetalus_test_vocab.txt";
  vocab.save(path);
  auto loaded = Vocab::load(path);
  CHECK(loaded.n_merges() == vocab.n_merges());
  for (const auto& s : {"fetal brain", "novel 31w 6d text"})
    CHECK(encode(s, loaded) == encode(s, vocab));
  std::filesystem::remove(path);
}

TEST_CASE("pretokenization is lossless") {
  std::string s = "a  b\tc\nd  ";
  auto pieces = pretokenize(s);
  std::string joined;
  for (const auto& p : pieces) joined += p;
  CHECK(joined == s);
}
