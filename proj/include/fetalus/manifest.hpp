#pragma once
// Image/video record types and line-delimited manifest IO.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fetalus/common.hpp"

namespace fetalus {

enum class Subgroup { standard_view, multi_keyword, unlabeled, textbook };
enum class Split { train, test };

std::string to_string(Subgroup s);
std::string to_string(Split s);
Subgroup subgroup_from_string(const std::string& s);
Split split_from_string(const std::string& s);

struct ImageRecord {
  std::string image_id;
  std::string patient_id;
  std::string image_path;           // relative to the manifest's directory
  std::vector<std::string> labels;  // sorted keyword set
  std::optional<int> ga_days;
  std::optional<double> pixel_spacing_mm;
  Subgroup subgroup = Subgroup::standard_view;
  Split split = Split::train;
  std::map<std::string, std::string> mask_paths;  // structure name -> relative path

  // Canonical key for a label set, e.g. "brain+transthalamic".
  std::string label_key() const;
};

struct VideoRecord {
  std::string video_id;
  std::string patient_id;
  std::string frames_dir;  // relative; frames stored as frame_0000.png ...
  int n_frames = 0;
  bool chd = false;
  std::optional<int> ga_days;
  std::optional<double> pixel_spacing_mm;
  Split split = Split::train;
};

void write_manifest(const std::filesystem::path& path, const std::vector<ImageRecord>& records);
std::vector<ImageRecord> read_manifest(const std::filesystem::path& path);

void write_video_manifest(const std::filesystem::path& path,
                          const std::vector<VideoRecord>& records);
std::vector<VideoRecord> read_video_manifest(const std::filesystem::path& path);

}  // namespace fetalus
