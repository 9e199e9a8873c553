#include "fetalus/bpe.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>

namespace fetalus::bpe {

namespace {

// Tokens may contain arbitrary bytes; escape non-printables and '%' as %XX
// for the one-merge-per-line vocab file.
std::string escape_token(const std::string& t) {
  std::string out;
  for (unsigned char ch : t) {
    if (ch > 32 && ch < 127 && ch != '%') {
      out += static_cast<char>(ch);
    } else {
      char buf[4];
      std::snprintf(buf, sizeof(buf), "%%%02X", ch);
      out += buf;
    }
  }
  return out;
}

std::string unescape_token(const std::string& t) {
  std::string out;
  for (std::size_t i = 0; i < t.size();) {
    if (t[i] == '%' && i + 2 < t.size()) {
      out += static_cast<char>(std::stoi(t.substr(i + 1, 2), nullptr, 16));
      i += 3;
    } else {
      out += t[i++];
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> pretokenize(const std::string& text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    bool ws = std::isspace(static_cast<unsigned char>(text[i])) != 0;
    std::size_t j = i;
    while (j < text.size() &&
           (std::isspace(static_cast<unsigned char>(text[j])) != 0) == ws)
      ++j;
    out.push_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

void Vocab::rebuild_tables() {
  rank_.clear();
  token_texts_.assign(256, "");
  token_ids_.clear();
  for (int b = 0; b < 256; ++b) {
    token_texts_[static_cast<std::size_t>(b)] = std::string(1, static_cast<char>(b));
    token_ids_[token_texts_[static_cast<std::size_t>(b)]] = b;
  }
  for (std::size_t i = 0; i < merges_.size(); ++i) {
    rank_[merges_[i]] = static_cast<int>(i);
    std::string merged = merges_[i].first + merges_[i].second;
    token_texts_.push_back(merged);
    token_ids_[merged] = static_cast<int>(256 + i);
  }
  token_texts_.push_back("");  // sot
  token_texts_.push_back("");  // eot
  token_texts_.push_back("");  // pad
}

Vocab Vocab::train(const std::vector<std::string>& corpus, std::size_t vocab_size) {
  if (corpus.empty()) throw DomainError("train_bpe: empty corpus");
  if (vocab_size <= 256)
    throw DomainError("train_bpe: vocab_size must exceed the 256-byte base alphabet");
  if (vocab_size < 259)
    throw DomainError("train_bpe: vocab_size must be >= 259 to fit the special tokens");
  std::size_t target_merges = vocab_size - 259;

  // Unique pretokens with counts keep retraining cheap on template corpora.
  std::map<std::string, long long> word_counts;
  for (const auto& text : corpus)
    for (const auto& w : pretokenize(text)) word_counts[w]++;

  std::vector<std::vector<std::string>> words;
  std::vector<long long> counts;
  for (const auto& [w, n] : word_counts) {
    std::vector<std::string> symbols;
    for (char ch : w) symbols.emplace_back(1, ch);
    words.push_back(std::move(symbols));
    counts.push_back(n);
  }

  Vocab vocab;
  while (vocab.merges_.size() < target_merges) {
    std::map<std::pair<std::string, std::string>, long long> pair_counts;
    for (std::size_t wi = 0; wi < words.size(); ++wi)
      for (std::size_t k = 0; k + 1 < words[wi].size(); ++k)
        pair_counts[{words[wi][k], words[wi][k + 1]}] += counts[wi];
    if (pair_counts.empty()) break;

    // Highest frequency wins; ties break on lexicographic pair order (the
    // map iterates in ascending pair order, so strict '>' keeps the first).
    std::pair<std::string, std::string> best;
    long long best_count = 0;
    for (const auto& [pair, n] : pair_counts)
      if (n > best_count) {
        best = pair;
        best_count = n;
      }

    vocab.merges_.push_back(best);
    std::string merged = best.first + best.second;
    for (auto& symbols : words) {
      std::vector<std::string> next;
      next.reserve(symbols.size());
      for (std::size_t k = 0; k < symbols.size(); ++k) {
        if (k + 1 < symbols.size() && symbols[k] == best.first &&
            symbols[k + 1] == best.second) {
          next.push_back(merged);
          ++k;
        } else {
          next.push_back(symbols[k]);
        }
      }
      symbols = std::move(next);
    }
  }

  vocab.rebuild_tables();
  return vocab;
}

std::vector<int> Vocab::tokenize_word(const std::string& word) const {
  std::vector<std::string> symbols;
  for (char ch : word) symbols.emplace_back(1, ch);
  while (symbols.size() > 1) {
    int best_rank = -1;
    std::size_t best_pos = 0;
    for (std::size_t k = 0; k + 1 < symbols.size(); ++k) {
      auto it = rank_.find({symbols[k], symbols[k + 1]});
      if (it != rank_.end() && (best_rank < 0 || it->second < best_rank)) {
        best_rank = it->second;
        best_pos = k;
      }
    }
    if (best_rank < 0) break;
    symbols[best_pos] = symbols[best_pos] + symbols[best_pos + 1];
    symbols.erase(symbols.begin() + static_cast<std::ptrdiff_t>(best_pos) + 1);
  }
  std::vector<int> ids;
  ids.reserve(symbols.size());
  for (const auto& s : symbols) ids.push_back(token_ids_.at(s));
  return ids;
}

std::vector<int> Vocab::tokenize(const std::string& text) const {
  std::vector<int> ids;
  for (const auto& w : pretokenize(text)) {
    auto word_ids = tokenize_word(w);
    ids.insert(ids.end(), word_ids.begin(), word_ids.end());
  }
  return ids;
}

const std::string& Vocab::token_text(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= token_texts_.size())
    throw DomainError("token id out of range: " + std::to_string(id));
  return token_texts_[static_cast<std::size_t>(id)];
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot write vocab file: " + path.string());
  out << "# bpe merges v1\n";
  for (const auto& [a, b] : merges_) out << escape_token(a) << " " << escape_token(b) << "\n";
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot read vocab file: " + path.string());
  Vocab vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::size_t sp = line.find(' ');
    if (sp == std::string::npos) throw DomainError("malformed merge line: " + line);
    vocab.merges_.emplace_back(unescape_token(line.substr(0, sp)),
                               unescape_token(line.substr(sp + 1)));
  }
  vocab.rebuild_tables();
  return vocab;
}

std::vector<int> encode(const std::string& text, const Vocab& vocab, int max_len) {
  if (max_len < 2) throw DomainError("encode: max_len must be at least 2");
  std::vector<int> body = vocab.tokenize(text);
  if (body.size() > static_cast<std::size_t>(max_len - 2))
    body.resize(static_cast<std::size_t>(max_len - 2));  // keep the prefix
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(max_len));
  out.push_back(vocab.sot_id());
  out.insert(out.end(), body.begin(), body.end());
  out.push_back(vocab.eot_id());
  out.resize(static_cast<std::size_t>(max_len), vocab.pad_id());
  return out;
}

std::string decode(const std::vector<int>& ids, const Vocab& vocab) {
  std::string out;
  for (int id : ids) {
    if (id == vocab.sot_id() || id == vocab.eot_id() || id == vocab.pad_id()) continue;
    out += vocab.token_text(id);
  }
  return out;
}

}  // namespace fetalus::bpe
