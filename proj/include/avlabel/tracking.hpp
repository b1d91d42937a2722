// avlabel/tracking.hpp

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

// Face tracking: IoU plus appearance association over Kalman-predicted boxes.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "avlabel/assignment.hpp"
#include "avlabel/errors.hpp"
#include "avlabel/kalman.hpp"

namespace avlabel {

struct Detection {
  std::int64_t frame_index = 0;
  BBox bbox;
  double confidence = 1.0;
  std::optional<std::vector<double>> embedding;  // unit norm when present
};

enum class TrackStatus { kTentative, kConfirmed, kDeleted };

inline const char *to_string(TrackStatus s) {
  switch (s) {
    case TrackStatus::kTentative: return "tentative";
    case TrackStatus::kConfirmed: return "confirmed";
    case TrackStatus::kDeleted: return "deleted";
  }
  return "?";
}

struct TrackPoint {
  std::int64_t frame_index = 0;
  BBox box;
};

struct Track {
  int track_id = 0;
  KalmanState state;
  TrackStatus status = TrackStatus::kTentative;
  int hits = 1;
  int frames_since_update = 0;
  std::vector<TrackPoint> history;
  std::optional<std::vector<double>> embedding;
};

inline double iou(const BBox &a, const BBox &b) {
  double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  double inter = ix * iy;
  double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

inline double cosine_distance(const std::vector<double> &a, const std::vector<double> &b) {
  if (a.size() != b.size()) throw ArgumentError("embedding sizes differ");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return 1.0 - dot;
}

inline void validate(const Detection &d) {
  if (!(d.bbox.w > 0.0 && d.bbox.h > 0.0)) throw ArgumentError("detection box must have w, h > 0");
  if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) throw ArgumentError("confidence outside [0,1]");
  if (d.embedding) {
    double n = 0.0;
    for (double v : *d.embedding) n += v * v;
    if (std::abs(std::sqrt(n) - 1.0) > 1e-6) throw ArgumentError("embedding is not unit norm");
  }
}

struct AssociationResult {
  std::vector<std::pair<std::size_t, std::size_t>> matches;  // (track, detection)
  std::vector<std::size_t> unmatched_tracks;
  std::vector<std::size_t> unmatched_detections;
};

// Boxes of `tracks` are compared as given; callers pass predicted states.
inline AssociationResult associate(const std::vector<Track> &tracks,
                                   const std::vector<Detection> &detections,
                                   double iou_gate = 0.3, double lambda = 0.5) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ArgumentError("lambda must lie in [0,1]");
  const std::size_t nt = tracks.size(), nd = detections.size();
  std::vector<double> cost(nt * nd, kForbidden);
  for (std::size_t i = 0; i < nt; ++i) {
    BBox tb = to_bbox(tracks[i].state.mean);
    for (std::size_t j = 0; j < nd; ++j) {
      double o = iou(tb, detections[j].bbox);
      if (o < iou_gate) continue;
      const auto &te = tracks[i].embedding;
      const auto &de = detections[j].embedding;
      cost[i * nd + j] = (te && de) ? lambda * (1.0 - o) + (1.0 - lambda) * cosine_distance(*te, *de)
                                    : 1.0 - o;
    }
  }
  auto rows = solve_assignment(cost, nt, nd);
  AssociationResult r;
  std::vector<char> det_used(nd, 0);
  for (std::size_t i = 0; i < nt; ++i) {
    if (rows[i] >= 0) {
      r.matches.emplace_back(i, static_cast<std::size_t>(rows[i]));
      det_used[rows[i]] = 1;
    } else {
      r.unmatched_tracks.push_back(i);
    }
  }
  for (std::size_t j = 0; j < nd; ++j)
    if (!det_used[j]) r.unmatched_detections.push_back(j);
  return r;
}

struct TrackerParams {
  int n_init = 3;
  int max_age = 30;
  double iou_gate = 0.3;
  double lambda = 0.5;
  KalmanParams kalman;
};

class Tracker {
 public:
  explicit Tracker(TrackerParams p = {}) : p_(p), kf_(p.kalman) {
    if (p.n_init < 1 || p.max_age < 0) throw ArgumentError("bad tracker parameters");
  }

  // Active (not deleted) tracks after the last step.
  const std::vector<Track> &tracks() const { return active_; }
  // Every track ever created, including deleted ones, in creation order.
  std::vector<Track> all_tracks() const {
    std::vector<Track> out = finished_;
    out.insert(out.end(), active_.begin(), active_.end());
    std::sort(out.begin(), out.end(),
              [](const Track &a, const Track &b) { return a.track_id < b.track_id; });
    return out;
  }

  void step(std::int64_t frame_index, const std::vector<Detection> &detections) {
    if (last_frame_ && frame_index <= *last_frame_)
      throw ArgumentError("frame index " + std::to_string(frame_index) +
                          " not after " + std::to_string(*last_frame_));
    for (const auto &d : detections) {
      validate(d);
      if (d.frame_index != frame_index) throw ArgumentError("detection frame index mismatch");
    }
    std::int64_t gap = last_frame_ ? frame_index - *last_frame_ : 1;
    last_frame_ = frame_index;

    for (auto &t : active_) {
      for (std::int64_t k = 0; k < gap; ++k) t.state = kf_.predict(t.state);
      t.frames_since_update += static_cast<int>(gap);
    }

    auto assoc = associate(active_, detections, p_.iou_gate, p_.lambda);
    for (auto [ti, di] : assoc.matches) {
      Track &t = active_[ti];
      const Detection &d = detections[di];
      t.state = kf_.update(t.state, d.bbox);
      t.hits += 1;
      t.frames_since_update = 0;
      t.history.push_back({frame_index, d.bbox});
      if (d.embedding) t.embedding = d.embedding;
      if (t.status == TrackStatus::kTentative && t.hits >= p_.n_init) t.status = TrackStatus::kConfirmed;
    }
    for (auto ti : assoc.unmatched_tracks) {
      Track &t = active_[ti];
      if (t.status == TrackStatus::kTentative || t.frames_since_update > p_.max_age)
        t.status = TrackStatus::kDeleted;
    }
    for (auto di : assoc.unmatched_detections) {
      const Detection &d = detections[di];
      Track t;
      t.track_id = next_id_++;
      t.state = kf_.initiate(d.bbox);
      t.history.push_back({frame_index, d.bbox});
      t.embedding = d.embedding;
      if (p_.n_init <= 1) t.status = TrackStatus::kConfirmed;
      active_.push_back(std::move(t));
    }
    std::vector<Track> keep;
    for (auto &t : active_) (t.status == TrackStatus::kDeleted ? finished_ : keep).push_back(std::move(t));
    active_ = std::move(keep);
  }

 private:
  TrackerParams p_;
  KalmanFilter kf_;
  std::vector<Track> active_, finished_;
  std::optional<std::int64_t> last_frame_;
  int next_id_ = 1;
};

}  // namespace avlabel
