// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mm3dgs {

/// Dense row-major image with interleaved channels. Color images are RGB in
/// [0,1]; depth maps are single-channel meters (0 marks invalid).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<size_t>(w) * h * c, fill) {}

  bool empty() const { return data.empty(); }
  size_t pixel_count() const { return static_cast<size_t>(width) * height; }
  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }

  double& at(int x, int y, int c = 0) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  double at(int x, int y, int c = 0) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
};

struct PixelMask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> data;

  PixelMask() = default;
  PixelMask(int w, int h, bool fill = true)
      : width(w), height(h), data(static_cast<size_t>(w) * h, fill ? 1 : 0) {}

  bool operator()(int x, int y) const { return data[static_cast<size_t>(y) * width + x] != 0; }
  size_t count() const;
};

/// Luma (Rec. 601) of an RGB image, single channel.
Image to_gray(const Image& rgb);

/// Separable Gaussian blur with reflect-101 borders; radius = ceil(3 sigma).
Image gaussian_blur(const Image& img, double sigma);

/// 8-bit RGB / gray and 16-bit gray PNG codecs. Values are scaled by `scale`
/// on write and divided by it on read.
void write_png8(const std::string& path, const Image& img);
void write_png16(const std::string& path, const Image& img, double scale);
Image read_png(const std::string& path, double scale16 = 1.0);

}  // namespace mm3dgs
