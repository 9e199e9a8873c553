#pragma once
// Byte-pair-encoding tokenizer with a byte-level base alphabet (every string
// is encodable) and a fixed 117-token sequence budget including the
// start/end specials.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fetalus/common.hpp"

namespace fetalus::bpe {

constexpr int kMaxTokens = 117;

class Vocab {
 public:
  // Greedy highest-frequency merges until vocab_size ids exist (256 bytes +
  // merges + 3 specials); ties break lexicographically on the pair. Stops
  // early if the corpus runs out of mergeable pairs.
  static Vocab train(const std::vector<std::string>& corpus, std::size_t vocab_size);

  static Vocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return 256 + merges_.size() + 3; }
  std::size_t n_merges() const { return merges_.size(); }
  int sot_id() const { return static_cast<int>(256 + merges_.size()); }
  int eot_id() const { return sot_id() + 1; }
  int pad_id() const { return sot_id() + 2; }

  // Token ids for a raw string (no specials, no padding).
  std::vector<int> tokenize(const std::string& text) const;
  const std::string& token_text(int id) const;

  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }

 private:
  std::vector<std::pair<std::string, std::string>> merges_;  // rank order
  std::map<std::pair<std::string, std::string>, int> rank_;
  std::vector<std::string> token_texts_;  // id -> byte string (specials empty)
  std::map<std::string, int> token_ids_;

  void rebuild_tables();
  std::vector<int> tokenize_word(const std::string& word) const;
};

// SOT + tokens + EOT, truncated so the total length never exceeds max_len
// (EOT is always kept), padded to exactly max_len with the pad id.
std::vector<int> encode(const std::string& text, const Vocab& vocab,
                        int max_len = kMaxTokens);

// Inverse of encode up to truncation; specials and padding are dropped.
std::string decode(const std::vector<int>& ids, const Vocab& vocab);

// Splits into maximal whitespace / non-whitespace runs; concatenation of the
// pieces reproduces the input exactly (lossless round trip).
std::vector<std::string> pretokenize(const std::string& text);

}  // namespace fetalus::bpe
