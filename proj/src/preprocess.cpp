#include "fetalus/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgproc.hpp>
#include <opencv2/photo.hpp>

namespace fetalus::preprocess {

namespace {

cv::Mat to_cv32f(const GrayImage& img) {
  cv::Mat m(img.h, img.w, CV_32FC1);
  for (int r = 0; r < img.h; ++r)
    for (int c = 0; c < img.w; ++c) m.at<float>(r, c) = img.at(r, c);
  return m;
}

GrayImage from_cv32f(const cv::Mat& m) {
  GrayImage img(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) img.at(r, c) = m.at<float>(r, c);
  return img;
}

}  // namespace

FanExtraction extract_fan(const GrayImage& image) {
  if (image.empty()) throw DomainError("extract_fan: empty image");
  cv::Mat binary(image.h, image.w, CV_8UC1);
  bool any = false;
  for (int r = 0; r < image.h; ++r)
    for (int c = 0; c < image.w; ++c) {
      bool fg = image.at(r, c) != 0.0f;
      binary.at<std::uint8_t>(r, c) = fg ? 255 : 0;
      any |= fg;
    }
  if (!any) throw DomainError("extract_fan: no foreground (all-zero image)");

  cv::Mat labels, stats, centroids;
  int n = cv::connectedComponentsWithStats(binary, labels, stats, centroids, 8);
  int best = -1, best_area = -1;
  for (int i = 1; i < n; ++i) {
    int area = stats.at<int>(i, cv::CC_STAT_AREA);
    if (area > best_area) {
      best_area = area;
      best = i;
    }
  }

  FanExtraction out;
  out.full_mask = Mask(image.h, image.w);
  for (int r = 0; r < image.h; ++r)
    for (int c = 0; c < image.w; ++c)
      out.full_mask.at(r, c) = labels.at<int>(r, c) == best ? 1 : 0;

  out.crop.r0 = stats.at<int>(best, cv::CC_STAT_TOP);
  out.crop.c0 = stats.at<int>(best, cv::CC_STAT_LEFT);
  out.crop.h = stats.at<int>(best, cv::CC_STAT_HEIGHT);
  out.crop.w = stats.at<int>(best, cv::CC_STAT_WIDTH);
  out.cropped = crop(image, out.crop);
  out.mask = crop(out.full_mask, out.crop);
  return out;
}

InpaintResult remove_annotations(const RgbImage& image, const InpaintParams& params) {
  if (image.empty()) throw DomainError("remove_annotations: empty image");
  cv::Mat mask(image.h, image.w, CV_8UC1, cv::Scalar(0));
  int n_marked = 0;
  for (int r = 0; r < image.h; ++r)
    for (int c = 0; c < image.w; ++c) {
      float mx = std::max({image.at(r, c, 0), image.at(r, c, 1), image.at(r, c, 2)});
      float mn = std::min({image.at(r, c, 0), image.at(r, c, 1), image.at(r, c, 2)});
      if (mx - mn > params.chroma_threshold) {
        mask.at<std::uint8_t>(r, c) = 255;
        ++n_marked;
      }
    }

  InpaintResult out;
  GrayImage gray = to_gray(image);
  if (n_marked == 0) {
    out.image = std::move(gray);
    return out;
  }

  int k = 2 * params.dilate_radius + 1;
  cv::dilate(mask, mask, cv::getStructuringElement(cv::MORPH_ELLIPSE, cv::Size(k, k)));

  cv::Mat gray8(image.h, image.w, CV_8UC1);
  for (int r = 0; r < image.h; ++r)
    for (int c = 0; c < image.w; ++c)
      gray8.at<std::uint8_t>(r, c) =
          static_cast<std::uint8_t>(std::clamp(gray.at(r, c) * 255.0f + 0.5f, 0.0f, 255.0f));
  cv::Mat filled;
  cv::inpaint(gray8, mask, filled, params.inpaint_radius, cv::INPAINT_TELEA);

  out.image = std::move(gray);
  for (int r = 0; r < image.h; ++r)
    for (int c = 0; c < image.w; ++c)
      if (mask.at<std::uint8_t>(r, c)) {
        out.image.at(r, c) = filled.at<std::uint8_t>(r, c) / 255.0f;
        ++out.inpainted_pixels;
      }
  return out;
}

GrayImage pad_to_square(const GrayImage& image) {
  if (image.empty()) throw DomainError("pad_to_square: empty image");
  if (image.h == image.w) return image;
  int side = std::max(image.h, image.w);
  GrayImage out(side, side, 0.0f);
  int top = (side - image.h) / 2;   // odd remainder goes to the bottom
  int left = (side - image.w) / 2;  // odd remainder goes to the right
  for (int r = 0; r < image.h; ++r)
    for (int c = 0; c < image.w; ++c) out.at(top + r, left + c) = image.at(r, c);
  return out;
}

Mask pad_to_square(const Mask& mask) {
  if (mask.h == mask.w) return mask;
  int side = std::max(mask.h, mask.w);
  Mask out(side, side, 0);
  int top = (side - mask.h) / 2;
  int left = (side - mask.w) / 2;
  for (int r = 0; r < mask.h; ++r)
    for (int c = 0; c < mask.w; ++c) out.at(top + r, left + c) = mask.at(r, c);
  return out;
}

GrayImage standardize(const GrayImage& image, int side) {
  if (image.empty()) throw DomainError("standardize: empty image");
  GrayImage square = pad_to_square(image);
  if (square.h == side && square.w == side) return square;
  cv::Mat resized;
  cv::resize(to_cv32f(square), resized, cv::Size(side, side), 0, 0, cv::INTER_LINEAR);
  return from_cv32f(resized);
}

Mask standardize_mask(const Mask& mask, int side) {
  Mask square = pad_to_square(mask);
  if (square.h == side && square.w == side) return square;
  cv::Mat m(square.h, square.w, CV_8UC1);
  for (int r = 0; r < square.h; ++r)
    for (int c = 0; c < square.w; ++c) m.at<std::uint8_t>(r, c) = square.at(r, c);
  cv::Mat resized;
  cv::resize(m, resized, cv::Size(side, side), 0, 0, cv::INTER_NEAREST);
  Mask out(side, side);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) out.at(r, c) = resized.at<std::uint8_t>(r, c);
  return out;
}

GrayImage crop(const GrayImage& image, const CropRect& rect) {
  if (rect.r0 < 0 || rect.c0 < 0 || rect.r0 + rect.h > image.h || rect.c0 + rect.w > image.w)
    throw ShapeError("crop: rect outside image");
  GrayImage out(rect.h, rect.w);
  for (int r = 0; r < rect.h; ++r)
    for (int c = 0; c < rect.w; ++c) out.at(r, c) = image.at(rect.r0 + r, rect.c0 + c);
  return out;
}

Mask crop(const Mask& mask, const CropRect& rect) {
  if (rect.r0 < 0 || rect.c0 < 0 || rect.r0 + rect.h > mask.h || rect.c0 + rect.w > mask.w)
    throw ShapeError("crop: rect outside mask");
  Mask out(rect.h, rect.w);
  for (int r = 0; r < rect.h; ++r)
    for (int c = 0; c < rect.w; ++c) out.at(r, c) = mask.at(rect.r0 + r, rect.c0 + c);
  return out;
}

AugmentationPolicy AugmentationPolicy::identity() {
  AugmentationPolicy p;
  p.rotation_deg_min = p.rotation_deg_max = 0.0;
  p.translation_frac_min = p.translation_frac_max = 0.0;
  p.brightness_min = p.brightness_max = 1.0;
  p.contrast_min = p.contrast_max = 1.0;
  p.saturation_min = p.saturation_max = 1.0;
  return p;
}

bool AugmentationPolicy::is_identity() const {
  return rotation_deg_min == 0 && rotation_deg_max == 0 && translation_frac_min == 0 &&
         translation_frac_max == 0 && brightness_min == 1 && brightness_max == 1 &&
         contrast_min == 1 && contrast_max == 1 && saturation_min == 1 &&
         saturation_max == 1;
}

GrayImage augment(const GrayImage& image, const AugmentationPolicy& policy) {
  if (image.empty()) throw DomainError("augment: empty image");
  Rng rng(policy.seed);
  // Fixed draw order keeps a given seed reproducible even when some ranges
  // are collapsed.
  double rot = rng.uniform(policy.rotation_deg_min, policy.rotation_deg_max);
  double tx = rng.uniform(policy.translation_frac_min, policy.translation_frac_max);
  double ty = rng.uniform(policy.translation_frac_min, policy.translation_frac_max);
  double brightness = rng.uniform(policy.brightness_min, policy.brightness_max);
  double contrast = rng.uniform(policy.contrast_min, policy.contrast_max);
  (void)rng.uniform(policy.saturation_min, policy.saturation_max);  // saturation: no-op

  GrayImage work = image;
  if (rot != 0.0 || tx != 0.0 || ty != 0.0) {
    // Rotate about the center, then translate: one warp with M = T * R.
    cv::Mat m = cv::getRotationMatrix2D(
        cv::Point2f(image.w / 2.0f, image.h / 2.0f), rot, 1.0);
    m.at<double>(0, 2) += tx * image.w;
    m.at<double>(1, 2) += ty * image.h;
    cv::Mat warped;
    cv::warpAffine(to_cv32f(work), warped, m, cv::Size(image.w, image.h), cv::INTER_LINEAR,
                   cv::BORDER_CONSTANT, cv::Scalar(0));
    work = from_cv32f(warped);
  }

  if (brightness != 1.0)
    for (auto& v : work.data) v = static_cast<float>(v * brightness);
  if (contrast != 1.0) {
    double mean = 0.0;
    for (auto v : work.data) mean += v;
    mean /= static_cast<double>(work.data.size());
    for (auto& v : work.data) v = static_cast<float>((v - mean) * contrast + mean);
  }
  for (auto& v : work.data) v = std::clamp(v, 0.0f, 1.0f);
  return work;
}

}  // namespace fetalus::preprocess
