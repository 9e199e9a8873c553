#pragma once
// Minimal float image containers plus PNG IO. Pixel values live in [0,1].

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fetalus/common.hpp"

namespace fetalus {

struct GrayImage {
  int h = 0;
  int w = 0;
  std::vector<float> data;  // row-major, h*w

  GrayImage() = default;
  GrayImage(int height, int width, float fill = 0.0f)
      : h(height), w(width), data(static_cast<std::size_t>(height) * width, fill) {}

  float& at(int r, int c) { return data[static_cast<std::size_t>(r) * w + c]; }
  float at(int r, int c) const { return data[static_cast<std::size_t>(r) * w + c]; }
  bool empty() const { return data.empty(); }
  std::size_t size() const { return data.size(); }
};

struct RgbImage {
  int h = 0;
  int w = 0;
  std::vector<float> data;  // row-major, h*w*3 interleaved

  RgbImage() = default;
  RgbImage(int height, int width, float fill = 0.0f)
      : h(height), w(width), data(static_cast<std::size_t>(height) * width * 3, fill) {}

  float& at(int r, int c, int ch) {
    return data[(static_cast<std::size_t>(r) * w + c) * 3 + ch];
  }
  float at(int r, int c, int ch) const {
    return data[(static_cast<std::size_t>(r) * w + c) * 3 + ch];
  }
  bool empty() const { return data.empty(); }
};

struct Mask {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> data;  // 0/1

  Mask() = default;
  Mask(int height, int width, std::uint8_t fill = 0)
      : h(height), w(width), data(static_cast<std::size_t>(height) * width, fill) {}

  std::uint8_t& at(int r, int c) { return data[static_cast<std::size_t>(r) * w + c]; }
  std::uint8_t at(int r, int c) const { return data[static_cast<std::size_t>(r) * w + c]; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : data) n += (v != 0);
    return n;
  }
};

inline GrayImage to_gray(const RgbImage& img) {
  GrayImage g(img.h, img.w);
  for (int r = 0; r < img.h; ++r)
    for (int c = 0; c < img.w; ++c)
      g.at(r, c) = (img.at(r, c, 0) + img.at(r, c, 1) + img.at(r, c, 2)) / 3.0f;
  return g;
}

inline RgbImage to_rgb(const GrayImage& img) {
  RgbImage rgb(img.h, img.w);
  for (int r = 0; r < img.h; ++r)
    for (int c = 0; c < img.w; ++c)
      for (int ch = 0; ch < 3; ++ch) rgb.at(r, c, ch) = img.at(r, c);
  return rgb;
}

double mask_iou(const Mask& a, const Mask& b);

// 8-bit PNG IO. Grayscale images are written as single-channel PNGs,
// RGB images as 3-channel. Loading auto-detects the channel count.
void write_png(const std::filesystem::path& path, const GrayImage& img);
void write_png(const std::filesystem::path& path, const RgbImage& img);
void write_png(const std::filesystem::path& path, const Mask& mask);
RgbImage read_png_rgb(const std::filesystem::path& path);
GrayImage read_png_gray(const std::filesystem::path& path);
bool png_is_color(const std::filesystem::path& path);
Mask read_png_mask(const std::filesystem::path& path);

}  // namespace fetalus
