#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "pdan/common.hpp"
#include "pdan/tensor.hpp"

namespace pdan {

enum class ColorSpace { kRgb, kYcbcr };

/// 3xHxW image, values normalized to [0,1] at the I/O boundary. PNG (8-bit
/// RGB) is the sole interchange format.
struct Image {
  Tensor<float> data;  // (3, H, W)
  ColorSpace colorspace = ColorSpace::kRgb;

  Image() = default;
  explicit Image(int h, int w, float fill = 0.0f)
      : data(Shape{3, h, w}, fill) {}

  int height() const { return data.extent(1); }
  int width() const { return data.extent(2); }
  float& at(int c, int y, int x) {
    return data[(static_cast<long long>(c) * height() + y) * width() + x];
  }
  float at(int c, int y, int x) const {
    return data[(static_cast<long long>(c) * height() + y) * width() + x];
  }
};

inline Image read_png(const std::string& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw IoError("cannot read PNG '" + path + "': " + png.message);
  png.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw IoError("cannot decode PNG '" + path + "': " + msg);
  }
  Image img(static_cast<int>(png.height), static_cast<int>(png.width));
  const int h = img.height(), w = img.width();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(c, y, x) = static_cast<float>(buffer[(static_cast<size_t>(y) * w + x) * 3 + c]) / 255.0f;
  return img;
}

inline void write_png(const Image& img, const std::string& path) {
  require(img.colorspace == ColorSpace::kRgb, "write_png expects an RGB image");
  const int h = img.height(), w = img.width();
  std::vector<unsigned char> buffer(static_cast<size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
        buffer[(static_cast<size_t>(y) * w + x) * 3 + c] =
            static_cast<unsigned char>(std::lround(v * 255.0f));
      }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.format = PNG_FORMAT_RGB;
  png.width = static_cast<png_uint_32>(w);
  png.height = static_cast<png_uint_32>(h);
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr))
    throw IoError("cannot write PNG '" + path + "': " + png.message);
}

/// Snaps values to the 8-bit grid (the representation an on-disk PNG has).
inline Image quantize_u8(const Image& img) {
  Image out = img;
  for (long long i = 0; i < out.data.numel(); ++i) {
    const float v = std::clamp(out.data[i], 0.0f, 1.0f);
    out.data[i] = static_cast<float>(std::lround(v * 255.0f)) / 255.0f;
  }
  return out;
}

inline Image clamp01(const Image& img) {
  Image out = img;
  for (long long i = 0; i < out.data.numel(); ++i) out.data[i] = std::clamp(out.data[i], 0.0f, 1.0f);
  return out;
}

/// Crops to the largest size divisible by `s` (top-left anchored).
inline Image crop_modulo(const Image& img, int s) {
  const int h = img.height() / s * s, w = img.width() / s * s;
  require(h > 0 && w > 0, "image too small for scale " + std::to_string(s));
  if (h == img.height() && w == img.width()) return img;
  Image out(h, w);
  out.colorspace = img.colorspace;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y, x);
  return out;
}

/// ITU-R BT.601 studio-swing transform, the convention of the SR literature:
/// Y in [16,235]/255 for inputs in [0,1]. The full-swing form is available
/// behind the flag.
inline Image rgb_to_ycbcr(const Image& img, bool full_swing = false) {
  require(img.colorspace == ColorSpace::kRgb, "rgb_to_ycbcr expects RGB input");
  Image out(img.height(), img.width());
  out.colorspace = ColorSpace::kYcbcr;
  const int n = img.height() * img.width();
  const float* r = img.data.data();
  const float* g = r + n;
  const float* b = g + n;
  float* y = out.data.data();
  float* cb = y + n;
  float* cr = cb + n;
  for (int i = 0; i < n; ++i) {
    if (full_swing) {
      y[i] = 0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i];
      cb[i] = (-0.168736f * r[i] - 0.331264f * g[i] + 0.5f * b[i]) + 0.5f;
      cr[i] = (0.5f * r[i] - 0.418688f * g[i] - 0.081312f * b[i]) + 0.5f;
    } else {
      y[i] = (65.481f * r[i] + 128.553f * g[i] + 24.966f * b[i] + 16.0f) / 255.0f;
      cb[i] = (-37.797f * r[i] - 74.203f * g[i] + 112.0f * b[i] + 128.0f) / 255.0f;
      cr[i] = (112.0f * r[i] - 93.786f * g[i] - 18.214f * b[i] + 128.0f) / 255.0f;
    }
  }
  return out;
}

/// Y plane as doubles, with `shave` border pixels removed on every side.
inline std::vector<double> luminance_shaved(const Image& img, int shave, int* out_h, int* out_w,
                                            bool full_swing = false) {
  const Image ycc = img.colorspace == ColorSpace::kYcbcr ? img : rgb_to_ycbcr(img, full_swing);
  const int h = ycc.height() - 2 * shave, w = ycc.width() - 2 * shave;
  require(h > 0 && w > 0, "shave leaves no pixels");
  std::vector<double> y(static_cast<size_t>(h) * w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      y[static_cast<size_t>(i) * w + j] = ycc.at(0, i + shave, j + shave);
  *out_h = h;
  *out_w = w;
  return y;
}

}  // namespace pdan
