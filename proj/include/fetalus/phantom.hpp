#pragma once
// Deterministic synthetic fetal-ultrasound generator. Renders a curvilinear
// fan with a class-specific geometric signature, ground-truth masks, optional
// burned-in colored annotations, and beating-heart videos. Everything is a
// pure function of (spec, seed), so downstream claims are testable without
// clinical data.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fetalus/image.hpp"
#include "fetalus/manifest.hpp"
#include "fetalus/quantile.hpp"

namespace fetalus::phantom {

enum class ViewClass { abdomen, brain, femur, heart, cervix, other };
enum class BrainSubview { none, transcerebellum, transthalamic, transventricular };

std::string to_string(ViewClass v);
std::string to_string(BrainSubview v);
ViewClass view_from_string(const std::string& s);
BrainSubview subview_from_string(const std::string& s);

constexpr int kCanvas = 256;  // native render size (square)

struct PhantomSpec {
  ViewClass view_class = ViewClass::brain;
  BrainSubview brain_subview = BrainSubview::none;
  int ga_days = 140;
  double pixel_spacing_mm = 0.7;
  std::optional<std::string> annotation_text;
  std::uint64_t noise_seed = 0;

  void validate() const;
};

struct PhantomImage {
  GrayImage pixels;      // luminance render, [0,1]
  RgbImage rgb;          // same render; annotation band is colored here
  Mask fan_mask;
  Mask annotation_mask;
  std::vector<std::pair<std::string, Mask>> structures;  // per-structure ground truth
  PhantomSpec spec;

  // Construction geometry of the head ellipse (brain views only, else 0).
  double head_semi_major_px = 0.0;
  double head_circumference_mm = 0.0;

  const Mask* structure(const std::string& name) const;
};

// Renders one image. Throws DomainError for invalid ga_days or spacing.
PhantomImage gen_image(const PhantomSpec& spec);

// Heart-view frame sequence with periodic chamber oscillation; chd=true
// consistently shrinks one chamber in every frame. 16 <= n_frames <= 128.
std::vector<PhantomImage> gen_video(const PhantomSpec& spec, int n_frames, bool chd);

struct DatasetOptions {
  std::map<std::string, double> class_mix;  // view name -> weight
  double annotate_fraction = 0.0;           // fraction of images given a text band
  double brain_pixel_spacing = 0.7;         // fixed so head size maps to GA cleanly
  double test_fraction = 0.2;               // patient-wise split
};

struct PhantomRecord {
  ImageRecord record;
  PhantomSpec spec;
};

// Assigns patients, gestational ages, classes (exact quotas via largest
// remainder, so proportions track class_mix), spacings and splits. Pure in
// (arguments, seed); rendering to disk happens in materialize_dataset.
std::vector<PhantomRecord> gen_dataset(int n_patients, int images_per_patient,
                                       const DatasetOptions& options, std::uint64_t seed);

struct VideoDatasetOptions {
  double chd_fraction = 0.5;
  int min_frames = 16;
  int max_frames = 128;
  double test_fraction = 0.2;
};

struct PhantomVideoRecord {
  VideoRecord record;
  PhantomSpec spec;
};

std::vector<PhantomVideoRecord> gen_video_dataset(int n_videos,
                                                  const VideoDatasetOptions& options,
                                                  std::uint64_t seed);

// Renders records under out_dir (images/, masks/) and writes manifest.jsonl.
// Annotated images are stored as RGB PNGs, clean ones as grayscale PNGs.
void materialize_dataset(const std::vector<PhantomRecord>& records,
                         const std::filesystem::path& out_dir,
                         bool write_structure_masks = true);
void materialize_video_dataset(const std::vector<PhantomVideoRecord>& records,
                               const std::filesystem::path& out_dir);

}  // namespace fetalus::phantom
