// avlabel/quality_gate.hpp

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

// Data-cleaning gate over audio quality, video quality, sync and duration.

#pragma once

#include <cmath>
#include <cstdlib>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "avlabel/errors.hpp"

namespace avlabel {

struct AudioQuality {
  double sig = 0.0, bak = 0.0, ovrl = 0.0;
};

struct VideoQuality {
  double score = 0.0;
};

struct SyncTrack {
  int track_id = 0;
  int offset = 0;  // frames
  double confidence = 0.0;
};

struct SyncResult {
  int offset = 0;
  double confidence = 0.0;
  std::vector<SyncTrack> per_track;
};

struct GateConfig {
  double ovrl_min = 3.0;
  double vqa_min = 60.0;
  int max_abs_offset = 5;
  double conf_min = 1.0;
  double min_source_duration = 180.0;

  void validate() const {
    auto bad = [](const char *what) { throw ArgumentError(std::string("gate config: ") + what); };
    if (!(ovrl_min >= 0.0 && ovrl_min <= 5.0)) bad("ovrl_min outside [0,5]");
    if (!(vqa_min >= 0.0 && vqa_min <= 100.0)) bad("vqa_min outside [0,100]");
    if (max_abs_offset < 0) bad("max_abs_offset < 0");
    if (!(conf_min >= 0.0) || !std::isfinite(conf_min)) bad("conf_min must be finite and >= 0");
    if (!(min_source_duration >= 0.0) || !std::isfinite(min_source_duration))
      bad("min_source_duration must be finite and >= 0");
  }
};

inline constexpr const char *kCheckAudio = "audio_quality";
inline constexpr const char *kCheckVideo = "video_quality";
inline constexpr const char *kCheckSync = "av_sync";
inline constexpr const char *kCheckDuration = "source_duration";

struct CheckResult {
  std::string check;
  double measured = 0.0;
  double threshold = 0.0;
  bool passed = false;
  std::string detail;
};

struct Verdict {
  bool pass = false;
  std::vector<CheckResult> reasons;

  const CheckResult *find(const std::string &name) const {
    for (const auto &r : reasons)
      if (r.check == name) return &r;
    return nullptr;
  }
  // True when every check other than `name` passed.
  bool passed_except(const std::string &name) const {
    for (const auto &r : reasons)
      if (r.check != name && !r.passed) return false;
    return true;
  }
  std::vector<std::string> failed_checks() const {
    std::vector<std::string> out;
    for (const auto &r : reasons)
      if (!r.passed) out.push_back(r.check);
    return out;
  }
};

namespace detail {

inline void CheckRange(double v, double lo, double hi, const char *what) {
  if (!(v >= lo && v <= hi)) {
    std::ostringstream os;
    os << what << " = " << v << " outside [" << lo << "," << hi << "]";
    throw ArgumentError(os.str());
  }
}

}  // namespace detail

// A missing sync result (not yet measured) fails the sync check.
inline Verdict evaluate(const AudioQuality &aq, const VideoQuality &vq,
                        const std::optional<SyncResult> &sync, double source_duration,
                        const GateConfig &cfg = {}) {
  cfg.validate();
  detail::CheckRange(aq.sig, 0, 5, "sig");
  detail::CheckRange(aq.bak, 0, 5, "bak");
  detail::CheckRange(aq.ovrl, 0, 5, "ovrl");
  detail::CheckRange(vq.score, 0, 100, "video score");
  if (!(source_duration >= 0.0) || !std::isfinite(source_duration))
    throw ArgumentError("source duration must be finite and >= 0");

  Verdict v;
  v.reasons.push_back({kCheckAudio, aq.ovrl, cfg.ovrl_min, aq.ovrl >= cfg.ovrl_min, "ovrl"});
  v.reasons.push_back({kCheckVideo, vq.score, cfg.vqa_min, vq.score >= cfg.vqa_min, ""});

  CheckResult s{kCheckSync, 0.0, 1.0, false, ""};
  if (!sync) {
    s.detail = "not evaluated";
  } else if (sync->per_track.empty()) {
    s.detail = "no synchronized face track";
  } else {
    int n = 0;
    const SyncTrack *best = nullptr;
    for (const auto &t : sync->per_track) {
      if (!(t.confidence >= 0.0) || !std::isfinite(t.confidence))
        throw ArgumentError("sync confidence must be finite and >= 0");
      if (std::abs(t.offset) <= cfg.max_abs_offset && t.confidence >= cfg.conf_min) {
        ++n;
        if (!best || t.confidence > best->confidence) best = &t;
      }
    }
    s.measured = n;
    s.passed = n >= 1;
    std::ostringstream os;
    if (best)
      os << "track " << best->track_id << " offset " << best->offset << " confidence " << best->confidence;
    else
      os << "no synchronized face track";
    s.detail = os.str();
  }
  v.reasons.push_back(s);
  v.reasons.push_back(
      {kCheckDuration, source_duration, cfg.min_source_duration, source_duration >= cfg.min_source_duration, ""});

  v.pass = true;
  for (const auto &r : v.reasons) v.pass = v.pass && r.passed;
  return v;
}

}  // namespace avlabel
