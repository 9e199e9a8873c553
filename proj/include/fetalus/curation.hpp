#pragma once
// Turns labeled manifests into pretraining-ready image-caption shards:
// deterministic caption templating, subgroup routing, confident-learning
// label flags, pseudo-labeling, and dedup-aware upsampled sharding.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fetalus/common.hpp"
#include "fetalus/manifest.hpp"

namespace fetalus::curation {

struct CaptionSet {
  std::string image_id;
  std::vector<std::string> captions;  // exactly 5, pairwise distinct
};

// Human-editable template bank. Each label set owns five sentence skeletons
// with optional [[GA: ... {ga} ...]] and [[PX: ... {px} ...]] clauses that
// are dropped when the record lacks the field. {ga} renders as "20w 3d",
// {px} as "0.7 mm/px".
class TemplateBank {
 public:
  static TemplateBank load(const std::filesystem::path& path);
  static TemplateBank from_string(const std::string& text);

  bool has(const std::string& label_key) const { return templates_.count(label_key) > 0; }
  const std::vector<std::string>& templates_for(const std::string& label_key) const;
  std::vector<std::string> label_keys() const;
  const std::string& version() const { return version_; }

 private:
  std::string version_;
  std::map<std::string, std::vector<std::string>> templates_;
};

// Fills the label set's five templates with the record's GA and pixel
// spacing. Throws DomainError when the label set has no templates.
CaptionSet build_caption_set(const ImageRecord& record, const TemplateBank& bank);

// Expands a template skeleton for given optional fields (exposed for tests).
std::string render_template(const std::string& skeleton, std::optional<int> ga_days,
                            std::optional<double> pixel_spacing_mm);

// Confident-joint label filter over out-of-fold probabilities: per-class
// threshold t_c = mean in-class probability; a sample is flagged when its
// highest confidently-assigned class differs from its given label. A class
// with zero support gets an infinite threshold.
std::set<std::size_t> confident_flags(const std::vector<std::vector<double>>& oof_probs,
                                      const std::vector<int>& labels);

// Argmax class when the top probability strictly exceeds the threshold.
std::optional<int> pseudo_label(const std::vector<double>& probs, double threshold = 0.9);

// Standard-view lexicon used for subgroup routing (configurable; the full
// clinical list plus heart/brain subviews by default).
std::set<std::string> default_view_lexicon();
Subgroup route_subgroup(const ImageRecord& record, const std::set<std::string>& lexicon);

struct ShardEntry {
  std::string image_id;
  std::string image_path;
  std::string caption;
};
using Shard = std::vector<ShardEntry>;

// Replicates each pair by its subgroup's upsample factor and distributes the
// replicas over ceil(total/shard_size) shards such that no shard sees the
// same image twice. Throws when a factor exceeds the shard count.
std::vector<Shard> build_shards(const std::vector<ImageRecord>& records,
                                const std::vector<CaptionSet>& captions,
                                const std::map<Subgroup, int>& upsample_map,
                                std::size_t shard_size, std::uint64_t seed);

void write_shards(const std::filesystem::path& dir, const std::vector<Shard>& shards);
std::vector<Shard> read_shards(const std::filesystem::path& dir);

}  // namespace fetalus::curation
