#include "fetalus/curation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fetalus::curation {

using nlohmann::json;

TemplateBank TemplateBank::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open template bank: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str());
}

TemplateBank TemplateBank::from_string(const std::string& text) {
  TemplateBank bank;
  std::istringstream in(text);
  std::string line, current;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (bank.version_.empty()) bank.version_ = line.substr(1);
      continue;
    }
    if (line.front() == '[' && line.back() == ']') {
      current = line.substr(1, line.size() - 2);
      continue;
    }
    if (current.empty()) throw DomainError("template line outside any [label set] section");
    bank.templates_[current].push_back(line);
  }
  for (const auto& [key, tpls] : bank.templates_) {
    if (tpls.size() != 5)
      throw DomainError("label set '" + key + "' must have exactly 5 templates, found " +
                        std::to_string(tpls.size()));
  }
  return bank;
}

const std::vector<std::string>& TemplateBank::templates_for(const std::string& label_key) const {
  auto it = templates_.find(label_key);
  if (it == templates_.end()) throw DomainError("unknown label set: " + label_key);
  return it->second;
}

std::vector<std::string> TemplateBank::label_keys() const {
  std::vector<std::string> keys;
  for (const auto& [k, _] : templates_) keys.push_back(k);
  return keys;
}

namespace {

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

}  // namespace

std::string render_template(const std::string& skeleton, std::optional<int> ga_days,
                            std::optional<double> pixel_spacing_mm) {
  std::string out;
  std::size_t i = 0;
  while (i < skeleton.size()) {
    if (skeleton.compare(i, 2, "[[") == 0) {
      std::size_t colon = skeleton.find(':', i + 2);
      std::size_t end = skeleton.find("]]", i + 2);
      if (colon == std::string::npos || end == std::string::npos || colon > end)
        throw DomainError("malformed conditional block in template: " + skeleton);
      std::string tag = skeleton.substr(i + 2, colon - i - 2);
      std::string body = skeleton.substr(colon + 1, end - colon - 1);
      if (tag != "GA" && tag != "PX")
        throw DomainError("unknown conditional tag '" + tag + "' in template");
      bool keep = (tag == "GA" && ga_days.has_value()) ||
                  (tag == "PX" && pixel_spacing_mm.has_value());
      if (keep) out += body;
      i = end + 2;
    } else {
      out += skeleton[i];
      ++i;
    }
  }
  if (ga_days) replace_all(out, "{ga}", format_ga_weeks_days(*ga_days));
  if (pixel_spacing_mm)
    replace_all(out, "{px}", format_number(*pixel_spacing_mm) + " mm/px");
  return out;
}

CaptionSet build_caption_set(const ImageRecord& record, const TemplateBank& bank) {
  if (record.labels.empty())
    throw DomainError("build_caption_set: record " + record.image_id + " has no labels");
  std::string key = record.label_key();
  if (!bank.has(key)) {
    std::string labels;
    for (const auto& l : record.labels) labels += (labels.empty() ? "" : ", ") + l;
    throw DomainError("unknown label set {" + labels + "} (no caption templates)");
  }
  CaptionSet set;
  set.image_id = record.image_id;
  for (const auto& skeleton : bank.templates_for(key))
    set.captions.push_back(render_template(skeleton, record.ga_days, record.pixel_spacing_mm));
  for (std::size_t a = 0; a < set.captions.size(); ++a)
    for (std::size_t b = a + 1; b < set.captions.size(); ++b)
      if (set.captions[a] == set.captions[b])
        throw DomainError("caption templates for '" + key + "' render identically");
  return set;
}

std::set<std::size_t> confident_flags(const std::vector<std::vector<double>>& oof_probs,
                                      const std::vector<int>& labels) {
  if (oof_probs.size() != labels.size())
    throw ShapeError("confident_flags: probs/labels size mismatch");
  if (oof_probs.empty()) return {};
  std::size_t n_classes = oof_probs.front().size();
  for (const auto& row : oof_probs)
    if (row.size() != n_classes) throw ShapeError("confident_flags: ragged probability rows");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= n_classes)
      throw DomainError("confident_flags: label outside class set");

  // Per-class confidence threshold: mean in-class probability. Zero-support
  // classes can never be confidently assigned.
  std::vector<double> threshold(n_classes, std::numeric_limits<double>::infinity());
  std::vector<double> sum(n_classes, 0.0);
  std::vector<std::size_t> count(n_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto c = static_cast<std::size_t>(labels[i]);
    sum[c] += oof_probs[i][c];
    count[c]++;
  }
  for (std::size_t c = 0; c < n_classes; ++c)
    if (count[c] > 0) threshold[c] = sum[c] / static_cast<double>(count[c]);

  std::set<std::size_t> flagged;
  for (std::size_t i = 0; i < oof_probs.size(); ++i) {
    int best = -1;
    for (std::size_t j = 0; j < n_classes; ++j) {
      if (oof_probs[i][j] < threshold[j]) continue;
      if (best < 0 || oof_probs[i][j] > oof_probs[i][static_cast<std::size_t>(best)])
        best = static_cast<int>(j);
    }
    if (best >= 0 && best != labels[i]) flagged.insert(i);
  }
  return flagged;
}

std::optional<int> pseudo_label(const std::vector<double>& probs, double threshold) {
  if (probs.empty()) throw DomainError("pseudo_label: empty probability vector");
  double total = 0.0;
  for (double p : probs) total += p;
  if (std::abs(total - 1.0) > 1e-6)
    throw DomainError("pseudo_label: probabilities must sum to 1");
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[best]) best = i;
  if (probs[best] > threshold) return static_cast<int>(best);
  return std::nullopt;
}

std::set<std::string> default_view_lexicon() {
  return {// 12 standard clinical views
          "abdomen", "brain", "cord", "diaphragm", "feet", "femur", "heart", "kidney",
          "lips and nose", "orbit", "profile", "spine",
          // heart subviews
          "lvot", "rvot", "4ch", "3vv",
          // brain subviews
          "transcerebellum", "transthalamic", "transventricular"};
}

Subgroup route_subgroup(const ImageRecord& record, const std::set<std::string>& lexicon) {
  if (record.subgroup == Subgroup::textbook) return Subgroup::textbook;
  if (record.labels.empty()) return Subgroup::unlabeled;
  for (const auto& l : record.labels)
    if (lexicon.count(l) == 0) return Subgroup::multi_keyword;
  return Subgroup::standard_view;
}

std::vector<Shard> build_shards(const std::vector<ImageRecord>& records,
                                const std::vector<CaptionSet>& captions,
                                const std::map<Subgroup, int>& upsample_map,
                                std::size_t shard_size, std::uint64_t seed) {
  if (shard_size == 0) throw DomainError("build_shards: shard_size must be >= 1");
  for (const auto& [sg, f] : upsample_map)
    if (f < 1)
      throw DomainError("build_shards: upsample factor for " + to_string(sg) +
                        " must be >= 1");

  std::map<std::string, const CaptionSet*> caption_of;
  for (const auto& cs : captions) caption_of[cs.image_id] = &cs;

  auto factor_of = [&](const ImageRecord& r) {
    auto it = upsample_map.find(r.subgroup);
    return it == upsample_map.end() ? 1 : it->second;
  };

  std::size_t total = 0;
  for (const auto& r : records) total += static_cast<std::size_t>(factor_of(r));
  if (total == 0) return {};
  std::size_t n_shards = (total + shard_size - 1) / shard_size;

  for (const auto& r : records) {
    auto f = static_cast<std::size_t>(factor_of(r));
    if (f > n_shards)
      throw DomainError("cannot satisfy dedup: upsample factor " + std::to_string(f) +
                        " exceeds shard count " + std::to_string(n_shards));
    if (caption_of.count(r.image_id) == 0)
      throw DomainError("build_shards: no captions for record " + r.image_id);
  }

  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, {0x5A4D}));
  rng.shuffle(order);

  std::vector<Shard> shards(n_shards);
  std::size_t cursor = 0;
  for (std::size_t oi : order) {
    const ImageRecord& r = records[oi];
    const CaptionSet& cs = *caption_of.at(r.image_id);
    auto f = static_cast<std::size_t>(factor_of(r));
    // Replicas cycle through the caption variants; single copies draw one.
    std::size_t caption_base = f == 1 ? rng.uniform_index(cs.captions.size()) : 0;
    for (std::size_t j = 0; j < f; ++j) {
      ShardEntry entry;
      entry.image_id = r.image_id;
      entry.image_path = r.image_path;
      entry.caption = cs.captions[(caption_base + j) % cs.captions.size()];
      shards[(cursor + j) % n_shards].push_back(std::move(entry));
    }
    cursor += f;
  }
  return shards;
}

void write_shards(const std::filesystem::path& dir, const std::vector<Shard>& shards) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < shards.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "shard_%04d.jsonl", static_cast<int>(i));
    std::ofstream out(dir / name);
    if (!out) throw DomainError("cannot write shard file");
    for (const auto& e : shards[i]) {
      json j{{"id", e.image_id}, {"image", e.image_path}, {"caption", e.caption}};
      out << j.dump() << "\n";
    }
  }
}

std::vector<Shard> read_shards(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.path().extension() == ".jsonl" &&
        entry.path().filename().string().rfind("shard_", 0) == 0)
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<Shard> shards;
  for (const auto& f : files) {
    std::ifstream in(f);
    Shard shard;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      shard.push_back({j.at("id").get<std::string>(), j.at("image").get<std::string>(),
                       j.at("caption").get<std::string>()});
    }
    shards.push_back(std::move(shard));
  }
  return shards;
}

}  // namespace fetalus::curation
