// avlabel/lip_roi.hpp

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

// Lip region boxes from face-mesh landmarks, and fixed-size grayscale crops.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "avlabel/errors.hpp"
#include "avlabel/image.hpp"
#include "avlabel/tracking.hpp"

namespace avlabel {

inline constexpr int kNumLandmarks = 468;
inline constexpr int kLipCropSize = 96;

// Mouth and chin mesh indices; 291 listed once.
inline constexpr std::array<int, 26> kLipKeypoints = {
    61, 185, 40, 39, 37, 0, 267, 269, 270, 409, 291, 146, 91,
    181, 84, 17, 314, 405, 321, 375, 57, 430, 164, 287, 200, 210};

struct Point2 {
  double x = 0.0, y = 0.0;
};

// Coordinates are normalized to the face crop.
struct LandmarkSet {
  std::vector<Point2> points;
};

struct FrameSize {
  int width = 0, height = 0;
};

inline BBox lip_box(const LandmarkSet &lm, const BBox &face, double margin = 0.1,
                    std::optional<FrameSize> frame = std::nullopt, std::int64_t frame_index = -1) {
  if (lm.points.size() != kNumLandmarks)
    throw ArgumentError("expected 468 landmarks, got " + std::to_string(lm.points.size()));
  if (margin < 0.0) throw ArgumentError("margin must be >= 0");
  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  for (int k : kLipKeypoints) {
    double px = face.x + std::clamp(lm.points[k].x, 0.0, 1.0) * face.w;
    double py = face.y + std::clamp(lm.points[k].y, 0.0, 1.0) * face.h;
    x0 = std::min(x0, px);
    y0 = std::min(y0, py);
    x1 = std::max(x1, px);
    y1 = std::max(y1, py);
  }
  if (!(x1 > x0) || !(y1 > y0))
    throw ArgumentError("degenerate lip keypoints at frame " + std::to_string(frame_index));
  double pad = margin * std::max(x1 - x0, y1 - y0);
  x0 -= pad;
  y0 -= pad;
  x1 += pad;
  y1 += pad;
  if (frame) {
    x0 = std::max(x0, 0.0);
    y0 = std::max(y0, 0.0);
    x1 = std::min(x1, static_cast<double>(frame->width));
    y1 = std::min(y1, static_cast<double>(frame->height));
    if (!(x1 > x0) || !(y1 > y0))
      throw ArgumentError("lip box outside frame " + std::to_string(frame_index));
  }
  return BBox{x0, y0, x1 - x0, y1 - y0};
}

// Smallest pixel rectangle covering `b`, inside the image.
inline PixelRect pixel_rect(const BBox &b, int width, int height) {
  PixelRect r;
  r.x0 = std::clamp(static_cast<int>(std::floor(b.x)), 0, width - 1);
  r.y0 = std::clamp(static_cast<int>(std::floor(b.y)), 0, height - 1);
  r.x1 = std::clamp(static_cast<int>(std::ceil(b.x + b.w)), r.x0 + 1, width);
  r.y1 = std::clamp(static_cast<int>(std::ceil(b.y + b.h)), r.y0 + 1, height);
  return r;
}

struct LipCrop {
  int track_id = 0;
  std::int64_t frame_index = 0;
  BBox box;
  Image image;  // kLipCropSize square, 1 channel
  bool missing = false;
};

struct LipCropError {
  std::int64_t frame_index = 0;
  std::string message;
};

struct LipCropResult {
  std::vector<LipCrop> crops;
  std::vector<LipCropError> errors;
};

// Returns the decoded RGB frame, or nullopt on decode failure.
using FrameSource = std::function<std::optional<Image>(std::int64_t)>;

inline LipCropResult extract_lip_crops(const Track &track,
                                       const std::map<std::int64_t, LandmarkSet> &landmarks_by_frame,
                                       const FrameSource &frames, double margin = 0.1) {
  LipCropResult out;
  for (const auto &pt : track.history) {
    LipCrop crop;
    crop.track_id = track.track_id;
    crop.frame_index = pt.frame_index;
    crop.image = Image(kLipCropSize, kLipCropSize, 1);
    auto lm = landmarks_by_frame.find(pt.frame_index);
    if (lm == landmarks_by_frame.end()) {
      crop.missing = true;
      out.crops.push_back(std::move(crop));
      continue;
    }
    try {
      auto img = frames(pt.frame_index);
      if (!img) throw IoError("could not decode frame " + std::to_string(pt.frame_index));
      crop.box = lip_box(lm->second, pt.box, margin, FrameSize{img->width, img->height}, pt.frame_index);
      Image gray = to_gray(crop_image(*img, pixel_rect(crop.box, img->width, img->height)));
      crop.image = resize_nearest(gray, kLipCropSize, kLipCropSize);
    } catch (const std::exception &e) {
      out.errors.push_back({pt.frame_index, e.what()});
      crop.missing = true;
      crop.image = Image(kLipCropSize, kLipCropSize, 1);
    }
    out.crops.push_back(std::move(crop));
  }
  return out;
}

// Packed raster archive: <dir>/track_<id>.bin plus one index row per crop in
// <dir>/index.tsv (track_id, frame_index, missing, offset).
inline void write_lip_archive(const std::filesystem::path &dir, const std::vector<LipCropResult> &tracks) {
  std::filesystem::create_directories(dir);
  std::ofstream index(dir / "index.tsv", std::ios::binary | std::ios::trunc);
  if (!index) throw IoError("cannot write " + (dir / "index.tsv").string());
  index << "track_id\tframe_index\tmissing\toffset\n";
  for (const auto &t : tracks) {
    if (t.crops.empty()) continue;
    int id = t.crops.front().track_id;
    auto bin_path = dir / ("track_" + std::to_string(id) + ".bin");
    std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
    if (!bin) throw IoError("cannot write " + bin_path.string());
    std::uint64_t offset = 0;
    for (const auto &c : t.crops) {
      bin.write(reinterpret_cast<const char *>(c.image.data.data()),
                static_cast<std::streamsize>(c.image.data.size()));
      index << c.track_id << '\t' << c.frame_index << '\t' << (c.missing ? 1 : 0) << '\t' << offset << '\n';
      offset += c.image.data.size();
    }
    if (!bin) throw IoError("short write to " + bin_path.string());
  }
}

struct LipArchiveEntry {
  int track_id = 0;
  std::int64_t frame_index = 0;
  bool missing = false;
  std::uint64_t offset = 0;
};

inline std::vector<LipArchiveEntry> read_lip_index(const std::filesystem::path &dir) {
  std::ifstream in(dir / "index.tsv");
  if (!in) throw IoError("cannot read " + (dir / "index.tsv").string());
  std::vector<LipArchiveEntry> out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    LipArchiveEntry e;
    int miss = 0;
    if (!(ss >> e.track_id >> e.frame_index >> miss >> e.offset)) throw IoError("bad lip index row: " + line);
    e.missing = miss != 0;
    out.push_back(e);
  }
  return out;
}

inline Image read_lip_crop(const std::filesystem::path &dir, const LipArchiveEntry &e) {
  std::ifstream bin(dir / ("track_" + std::to_string(e.track_id) + ".bin"), std::ios::binary);
  if (!bin) throw IoError("missing archive for track " + std::to_string(e.track_id));
  Image img(kLipCropSize, kLipCropSize, 1);
  bin.seekg(static_cast<std::streamoff>(e.offset));
  bin.read(reinterpret_cast<char *>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (!bin) throw IoError("truncated lip archive for track " + std::to_string(e.track_id));
  return img;
}

}  // namespace avlabel
