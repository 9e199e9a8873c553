#include "fetalus/manifest.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

namespace fetalus {

using nlohmann::json;

std::string to_string(Subgroup s) {
  switch (s) {
    case Subgroup::standard_view: return "standard_view";
    case Subgroup::multi_keyword: return "multi_keyword";
    case Subgroup::unlabeled: return "unlabeled";
    case Subgroup::textbook: return "textbook";
  }
  return "standard_view";
}

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

Subgroup subgroup_from_string(const std::string& s) {
  if (s == "standard_view") return Subgroup::standard_view;
  if (s == "multi_keyword") return Subgroup::multi_keyword;
  if (s == "unlabeled") return Subgroup::unlabeled;
  if (s == "textbook") return Subgroup::textbook;
  throw DomainError("unknown subgroup: " + s);
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw DomainError("unknown split: " + s);
}

std::string ImageRecord::label_key() const {
  auto sorted = labels;
  std::sort(sorted.begin(), sorted.end());
  std::string key;
  for (const auto& l : sorted) {
    if (!key.empty()) key += "+";
    key += l;
  }
  return key;
}

namespace {

json record_to_json(const ImageRecord& r) {
  json j{{"id", r.image_id},
         {"patient_id", r.patient_id},
         {"image", r.image_path},
         {"labels", r.labels},
         {"subgroup", to_string(r.subgroup)},
         {"split", to_string(r.split)}};
  if (r.ga_days) j["ga_days"] = *r.ga_days;
  if (r.pixel_spacing_mm) j["pixel_spacing_mm"] = *r.pixel_spacing_mm;
  if (!r.mask_paths.empty()) j["masks"] = r.mask_paths;
  return j;
}

ImageRecord record_from_json(const json& j) {
  ImageRecord r;
  r.image_id = j.at("id").get<std::string>();
  r.patient_id = j.at("patient_id").get<std::string>();
  r.image_path = j.at("image").get<std::string>();
  r.labels = j.at("labels").get<std::vector<std::string>>();
  r.subgroup = subgroup_from_string(j.at("subgroup").get<std::string>());
  r.split = split_from_string(j.at("split").get<std::string>());
  if (j.contains("ga_days")) r.ga_days = j.at("ga_days").get<int>();
  if (j.contains("pixel_spacing_mm"))
    r.pixel_spacing_mm = j.at("pixel_spacing_mm").get<double>();
  if (j.contains("masks"))
    r.mask_paths = j.at("masks").get<std::map<std::string, std::string>>();
  return r;
}

}  // namespace

void write_manifest(const std::filesystem::path& path, const std::vector<ImageRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot write manifest: " + path.string());
  for (const auto& r : records) out << record_to_json(r).dump() << "\n";
}

std::vector<ImageRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot read manifest: " + path.string());
  std::vector<ImageRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    records.push_back(record_from_json(json::parse(line)));
  }
  return records;
}

void write_video_manifest(const std::filesystem::path& path,
                          const std::vector<VideoRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot write video manifest: " + path.string());
  for (const auto& r : records) {
    json j{{"id", r.video_id},     {"patient_id", r.patient_id}, {"frames_dir", r.frames_dir},
           {"n_frames", r.n_frames}, {"chd", r.chd},             {"split", to_string(r.split)}};
    if (r.ga_days) j["ga_days"] = *r.ga_days;
    if (r.pixel_spacing_mm) j["pixel_spacing_mm"] = *r.pixel_spacing_mm;
    out << j.dump() << "\n";
  }
}

std::vector<VideoRecord> read_video_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot read video manifest: " + path.string());
  std::vector<VideoRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    VideoRecord r;
    r.video_id = j.at("id").get<std::string>();
    r.patient_id = j.at("patient_id").get<std::string>();
    r.frames_dir = j.at("frames_dir").get<std::string>();
    r.n_frames = j.at("n_frames").get<int>();
    r.chd = j.at("chd").get<bool>();
    r.split = split_from_string(j.at("split").get<std::string>());
    if (j.contains("ga_days")) r.ga_days = j.at("ga_days").get<int>();
    if (j.contains("pixel_spacing_mm"))
      r.pixel_spacing_mm = j.at("pixel_spacing_mm").get<double>();
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace fetalus
