// avlabel/shot_detect.hpp

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

// Content-difference shot boundary detection and clip partitioning.

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "avlabel/errors.hpp"
#include "avlabel/image.hpp"

namespace avlabel {

struct Frame {
  std::int64_t index = 0;
  Image hsv;  // 3 channels
};

struct ShotBoundary {
  std::int64_t frame_index = 0;  // first frame of the new shot
  double score = 0.0;
  bool operator==(const ShotBoundary &) const = default;
};

struct Clip {
  std::string source_id;
  std::int64_t start_frame = 0;
  std::int64_t end_frame = 0;  // exclusive
  double fps = 0.0;
  double duration() const { return static_cast<double>(end_frame - start_frame) / fps; }
  double start_seconds() const { return static_cast<double>(start_frame) / fps; }
  double end_seconds() const { return static_cast<double>(end_frame) / fps; }
  bool operator==(const Clip &) const = default;
};

// Mean over the three channels of the per-channel mean absolute difference.
inline double content_score(const Image &a, const Image &b) {
  if (a.width != b.width || a.height != b.height || a.channels != 3 || b.channels != 3)
    throw ArgumentError("content_score: frames differ in geometry");
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    sum += static_cast<std::uint64_t>(std::abs(int(a.data[i]) - int(b.data[i])));
  return static_cast<double>(sum) / static_cast<double>(a.data.size());
}

inline double content_score(const Frame &a, const Frame &b) { return content_score(a.hsv, b.hsv); }

// Integer subsampling so the analyzed width is at most max_width.
inline int downscale_factor(int width, int max_width) {
  if (max_width <= 0 || width <= max_width) return 1;
  return (width + max_width - 1) / max_width;
}

inline Image downscale(const Image &img, int factor) {
  if (factor <= 1) return img;
  Image out((img.width + factor - 1) / factor, (img.height + factor - 1) / factor, img.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(x * factor, y * factor, c);
  return out;
}

// Streaming form of detect_cuts; feed frames in order.
class CutDetector {
 public:
  CutDetector(double threshold = 30.0, std::int64_t min_scene_len = 15)
      : threshold_(threshold), min_scene_len_(min_scene_len) {
    if (!(threshold > 0.0)) throw ArgumentError("threshold must be > 0");
    if (min_scene_len < 1) throw ArgumentError("min_scene_len must be >= 1");
  }

  // Returns a boundary when `frame` starts a new shot.
  std::optional<ShotBoundary> push(const Frame &frame) {
    std::optional<ShotBoundary> cut;
    if (prev_) {
      double score = content_score(prev_->hsv, frame.hsv);
      if (score > threshold_ && frame.index - last_cut_ >= min_scene_len_) {
        cut = ShotBoundary{frame.index, score};
        last_cut_ = frame.index;
      }
    } else {
      last_cut_ = frame.index;
    }
    prev_ = frame;
    return cut;
  }

 private:
  double threshold_;
  std::int64_t min_scene_len_;
  std::int64_t last_cut_ = 0;
  std::optional<Frame> prev_;
};

inline std::vector<ShotBoundary> detect_cuts(std::span<const Frame> frames, double threshold = 30.0,
                                             std::int64_t min_scene_len = 15) {
  CutDetector det(threshold, min_scene_len);
  std::vector<ShotBoundary> out;
  if (frames.size() < 2) return out;
  for (const auto &f : frames)
    if (auto b = det.push(f)) out.push_back(*b);
  return out;
}

// Partitions [0, total_frames) at the boundaries.
inline std::vector<Clip> cut_clips(const std::string &source_id,
                                   std::span<const ShotBoundary> boundaries,
                                   std::int64_t total_frames, double fps) {
  if (total_frames <= 0) throw ArgumentError("cut_clips: empty source");
  if (!(fps > 0.0)) throw ArgumentError("cut_clips: fps must be > 0");
  std::vector<Clip> clips;
  std::int64_t start = 0;
  for (const auto &b : boundaries) {
    if (b.frame_index <= start || b.frame_index >= total_frames)
      throw ArgumentError("cut_clips: boundary " + std::to_string(b.frame_index) +
                          " unsorted or out of range");
    clips.push_back({source_id, start, b.frame_index, fps});
    start = b.frame_index;
  }
  clips.push_back({source_id, start, total_frames, fps});
  return clips;
}

}  // namespace avlabel
