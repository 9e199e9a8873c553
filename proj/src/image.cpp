#include "fetalus/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace fetalus {

namespace {

std::uint8_t to_u8(float v) {
  float x = v * 255.0f + 0.5f;
  if (x < 0.0f) x = 0.0f;
  if (x > 255.0f) x = 255.0f;
  return static_cast<std::uint8_t>(x);
}

}  // namespace

double mask_iou(const Mask& a, const Mask& b) {
  if (a.h != b.h || a.w != b.w) throw ShapeError("mask_iou: shape mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    bool va = a.data[i] != 0, vb = b.data[i] != 0;
    inter += (va && vb);
    uni += (va || vb);
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

void write_png(const std::filesystem::path& path, const GrayImage& img) {
  cv::Mat m(img.h, img.w, CV_8UC1);
  for (int r = 0; r < img.h; ++r)
    for (int c = 0; c < img.w; ++c) m.at<std::uint8_t>(r, c) = to_u8(img.at(r, c));
  if (!cv::imwrite(path.string(), m))
    throw DomainError("failed to write PNG: " + path.string());
}

void write_png(const std::filesystem::path& path, const RgbImage& img) {
  cv::Mat m(img.h, img.w, CV_8UC3);
  for (int r = 0; r < img.h; ++r)
    for (int c = 0; c < img.w; ++c) {
      // OpenCV stores BGR.
      m.at<cv::Vec3b>(r, c) = cv::Vec3b(to_u8(img.at(r, c, 2)), to_u8(img.at(r, c, 1)),
                                        to_u8(img.at(r, c, 0)));
    }
  if (!cv::imwrite(path.string(), m))
    throw DomainError("failed to write PNG: " + path.string());
}

void write_png(const std::filesystem::path& path, const Mask& mask) {
  cv::Mat m(mask.h, mask.w, CV_8UC1);
  for (int r = 0; r < mask.h; ++r)
    for (int c = 0; c < mask.w; ++c)
      m.at<std::uint8_t>(r, c) = mask.at(r, c) ? 255 : 0;
  if (!cv::imwrite(path.string(), m))
    throw DomainError("failed to write PNG: " + path.string());
}

RgbImage read_png_rgb(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) throw DomainError("failed to read PNG: " + path.string());
  RgbImage img(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) {
      auto px = m.at<cv::Vec3b>(r, c);
      img.at(r, c, 0) = px[2] / 255.0f;
      img.at(r, c, 1) = px[1] / 255.0f;
      img.at(r, c, 2) = px[0] / 255.0f;
    }
  return img;
}

GrayImage read_png_gray(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw DomainError("failed to read PNG: " + path.string());
  GrayImage img(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) img.at(r, c) = m.at<std::uint8_t>(r, c) / 255.0f;
  return img;
}

bool png_is_color(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw DomainError("failed to read PNG: " + path.string());
  return m.channels() >= 3;
}

Mask read_png_mask(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw DomainError("failed to read PNG: " + path.string());
  Mask mask(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) mask.at(r, c) = m.at<std::uint8_t>(r, c) >= 128 ? 1 : 0;
  return mask;
}

}  // namespace fetalus
