// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#include "mm3dgs/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

#include "mm3dgs/error.hpp"

namespace mm3dgs {

size_t PixelMask::count() const {
  return static_cast<size_t>(std::count(data.begin(), data.end(), uint8_t{1}));
}

Image to_gray(const Image& rgb) {
  if (rgb.channels == 1) return rgb;
  Image g(rgb.width, rgb.height, 1);
  for (size_t i = 0; i < rgb.pixel_count(); ++i) {
    const double* p = &rgb.data[i * rgb.channels];
    g.data[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
  }
  return g;
}

namespace {

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

}  // namespace

Image gaussian_blur(const Image& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  Image tmp(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[i + radius] * img.at(reflect101(x + i, img.width), y, c);
        tmp.at(x, y, c) = acc;
      }
  Image out(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[i + radius] * tmp.at(x, reflect101(y + i, img.height), c);
        out.at(x, y, c) = acc;
      }
  return out;
}

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

void write_png_raw(const std::string& path, int width, int height, int color_type, int bit_depth,
                   const std::vector<png_byte>& bytes, size_t row_bytes) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw Error(ErrorCode::Io, "cannot open " + path + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::Io, "libpng failure writing " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);
  for (int y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(bytes.data() + y * row_bytes));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png8(const std::string& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3)
    throw Error(ErrorCode::InvalidArgument, "png8 needs 1 or 3 channels");
  std::vector<png_byte> bytes(img.data.size());
  for (size_t i = 0; i < bytes.size(); ++i)
    bytes[i] = static_cast<png_byte>(std::lround(std::clamp(img.data[i], 0.0, 1.0) * 255.0));
  write_png_raw(path, img.width, img.height,
                img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, 8, bytes,
                static_cast<size_t>(img.width) * img.channels);
}

void write_png16(const std::string& path, const Image& img, double scale) {
  if (img.channels != 1) throw Error(ErrorCode::InvalidArgument, "png16 needs 1 channel");
  std::vector<png_byte> bytes(img.data.size() * 2);
  for (size_t i = 0; i < img.data.size(); ++i) {
    const auto v = static_cast<uint16_t>(std::clamp(std::lround(img.data[i] * scale), 0L, 65535L));
    // host order; png_set_swap converts to big-endian on little-endian hosts
    std::memcpy(&bytes[2 * i], &v, 2);
  }
  write_png_raw(path, img.width, img.height, PNG_COLOR_TYPE_GRAY, 16, bytes,
                static_cast<size_t>(img.width) * 2);
}

Image read_png(const std::string& path, double scale16) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw Error(ErrorCode::Io, "cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::Io, "libpng failure reading " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int color_type = png_get_color_type(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (bit_depth == 16) png_set_swap(png);
  png_read_update_info(png, info);
  const int channels = png_get_channels(png, info);
  const size_t row_bytes = png_get_rowbytes(png, info);
  std::vector<png_byte> bytes(row_bytes * height);
  for (int y = 0; y < height; ++y) png_read_row(png, bytes.data() + y * row_bytes, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image out(width, height, channels);
  if (bit_depth == 16) {
    for (size_t i = 0; i < out.data.size(); ++i) {
      uint16_t v;
      std::memcpy(&v, &bytes[2 * i], 2);
      out.data[i] = v / scale16;
    }
  } else {
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = bytes[i] / 255.0;
  }
  return out;
}

}  // namespace mm3dgs
