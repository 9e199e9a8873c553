#pragma once
// Frame standardization: fan extraction (largest nonzero component),
// colored-annotation removal via Fast-Marching inpainting, square padding +
// resize, and the training-time augmentations.

#include <cstdint>

#include "fetalus/common.hpp"
#include "fetalus/image.hpp"

namespace fetalus::preprocess {

struct CropRect {
  int r0 = 0, c0 = 0, h = 0, w = 0;
};

struct FanExtraction {
  GrayImage cropped;   // input cropped to the fan's bounding box
  Mask mask;           // fan mask at the cropped size
  Mask full_mask;      // fan mask at the input size
  CropRect crop;
};

// Foreground = nonzero pixels; the largest 8-connected component is the fan.
// Throws DomainError("no foreground") on an all-zero image.
FanExtraction extract_fan(const GrayImage& image);

// Chroma threshold, mask dilation radius and inpaint radius for annotation
// removal. The method is fixed (Telea fast marching); these were tuned on
// phantom annotations.
struct InpaintParams {
  float chroma_threshold = 0.15f;
  int dilate_radius = 2;
  double inpaint_radius = 3.0;
};

struct InpaintResult {
  GrayImage image;
  int inpainted_pixels = 0;
};

// Detects colored (non-gray) pixels, dilates, inpaints, returns grayscale.
// A pure-gray image passes through unchanged.
InpaintResult remove_annotations(const RgbImage& image, const InpaintParams& params = {});

// Zero-pads the shorter side symmetrically (odd remainder goes to the
// bottom/right), exposed separately so the padding contract is testable.
GrayImage pad_to_square(const GrayImage& image);
Mask pad_to_square(const Mask& mask);

// pad_to_square + bilinear resize to side x side. Idempotent on side x side.
GrayImage standardize(const GrayImage& image, int side = 224);

// Same geometry as standardize but nearest-neighbor, for ground-truth masks.
Mask standardize_mask(const Mask& mask, int side);

GrayImage crop(const GrayImage& image, const CropRect& rect);
Mask crop(const Mask& mask, const CropRect& rect);

struct AugmentationPolicy {
  double rotation_deg_min = -7.0, rotation_deg_max = 7.0;
  double translation_frac_min = -0.05, translation_frac_max = 0.05;
  double brightness_min = 0.85, brightness_max = 1.15;
  double contrast_min = 0.85, contrast_max = 1.15;
  double saturation_min = 0.85, saturation_max = 1.15;
  std::uint64_t seed = 0;

  static AugmentationPolicy identity();
  bool is_identity() const;
};

// Samples rotation, translation and jitter uniformly from the policy ranges
// (fixed draw order, so a given seed always produces the same output) and
// applies rotate -> translate -> jitter, clipping to [0,1]. Saturation is a
// no-op on single-channel images.
GrayImage augment(const GrayImage& image, const AugmentationPolicy& policy);

}  // namespace fetalus::preprocess
