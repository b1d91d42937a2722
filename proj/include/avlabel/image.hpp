// avlabel/image.hpp

// Copyright 2026  The avlabel Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "avlabel/errors.hpp"

namespace avlabel {

// Interleaved 8-bit raster (1 = gray, 3 = RGB or HSV).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;

  Image() = default;
  Image(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {
    if (w <= 0 || h <= 0 || (c != 1 && c != 3)) throw ArgumentError("bad image geometry");
  }

  std::uint8_t &at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool operator==(const Image &) const = default;
};

// ITU-R BT.601 luma with integer rounding.
inline Image to_gray(const Image &rgb) {
  if (rgb.channels == 1) return rgb;
  Image out(rgb.width, rgb.height, 1);
  for (int y = 0; y < rgb.height; ++y)
    for (int x = 0; x < rgb.width; ++x)
      out.at(x, y) = static_cast<std::uint8_t>(
          (299 * rgb.at(x, y, 0) + 587 * rgb.at(x, y, 1) + 114 * rgb.at(x, y, 2) + 500) / 1000);
  return out;
}

// 8-bit HSV with the common OpenCV convention: H in [0,180), S and V in [0,255].
inline Image rgb_to_hsv(const Image &rgb) {
  if (rgb.channels != 3) throw ArgumentError("rgb_to_hsv expects 3 channels");
  Image out(rgb.width, rgb.height, 3);
  for (std::size_t i = 0; i < rgb.data.size(); i += 3) {
    int r = rgb.data[i], g = rgb.data[i + 1], b = rgb.data[i + 2];
    int v = std::max({r, g, b});
    int mn = std::min({r, g, b});
    int delta = v - mn;
    int s = v == 0 ? 0 : (255 * delta + v / 2) / v;
    double h = 0.0;
    if (delta != 0) {
      if (v == r)
        h = 60.0 * (g - b) / delta;
      else if (v == g)
        h = 120.0 + 60.0 * (b - r) / delta;
      else
        h = 240.0 + 60.0 * (r - g) / delta;
      if (h < 0) h += 360.0;
    }
    int hh = static_cast<int>(h / 2.0 + 0.5);
    if (hh >= 180) hh -= 180;
    out.data[i] = static_cast<std::uint8_t>(hh);
    out.data[i + 1] = static_cast<std::uint8_t>(s);
    out.data[i + 2] = static_cast<std::uint8_t>(v);
  }
  return out;
}

// Pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
};

inline Image crop_image(const Image &src, const PixelRect &r) {
  if (r.x0 < 0 || r.y0 < 0 || r.x1 > src.width || r.y1 > src.height || r.width() <= 0 ||
      r.height() <= 0)
    throw ArgumentError("crop rectangle outside image");
  Image out(r.width(), r.height(), src.channels);
  for (int y = 0; y < r.height(); ++y)
    for (int x = 0; x < r.width(); ++x)
      for (int c = 0; c < src.channels; ++c) out.at(x, y, c) = src.at(r.x0 + x, r.y0 + y, c);
  return out;
}

// Nearest-neighbour resize sampling source pixel floor((2i + 1) * src / (2 * dst)).
inline Image resize_nearest(const Image &src, int width, int height) {
  Image out(width, height, src.channels);
  for (int y = 0; y < height; ++y) {
    int sy = static_cast<int>((2LL * y + 1) * src.height / (2LL * height));
    for (int x = 0; x < width; ++x) {
      int sx = static_cast<int>((2LL * x + 1) * src.width / (2LL * width));
      for (int c = 0; c < src.channels; ++c) out.at(x, y, c) = src.at(sx, sy, c);
    }
  }
  return out;
}

}  // namespace avlabel
