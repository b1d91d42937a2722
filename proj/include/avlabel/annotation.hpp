// avlabel/annotation.hpp

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

// Diarization label timelines: RTTM parsing/serialization and the interval
// algebra used by scoring, fusion and clip alignment. All intervals are
// half-open [onset, onset + duration).

#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "avlabel/errors.hpp"

namespace avlabel {

struct Interval {
  double start = 0.0;
  double end = 0.0;
  double length() const { return end - start; }
  bool operator==(const Interval &) const = default;
};

struct SpeechTurn {
  std::string recording_id;
  int channel = 1;
  double onset = 0.0;
  double duration = 0.0;
  std::string speaker;

  double end() const { return onset + duration; }
  bool operator==(const SpeechTurn &) const = default;
};

// A label timeline for one recording. Construction validates every turn,
// merges overlapping or touching turns of the same speaker, and sorts turns
// by (onset, speaker); instances are always in that canonical form.
class Annotation {
 public:
  Annotation() = default;
  explicit Annotation(std::string recording_id,
                      std::vector<SpeechTurn> turns = {})
      : recording_id_(std::move(recording_id)), turns_(std::move(turns)) {
    Normalize();
  }

  const std::string &recording_id() const { return recording_id_; }
  const std::vector<SpeechTurn> &turns() const { return turns_; }
  bool empty() const { return turns_.empty(); }

  // Sorted, distinct speaker labels.
  std::vector<std::string> speakers() const {
    std::set<std::string> s;
    for (const auto &t : turns_) s.insert(t.speaker);
    return {s.begin(), s.end()};
  }

  // Sorted disjoint intervals of one speaker.
  std::vector<Interval> intervals_of(const std::string &speaker) const {
    std::vector<Interval> out;
    for (const auto &t : turns_)
      if (t.speaker == speaker) out.push_back({t.onset, t.end()});
    std::sort(out.begin(), out.end(),
              [](const Interval &a, const Interval &b) { return a.start < b.start; });
    return out;
  }

  // Returns a copy with every turn's recording id replaced.
  Annotation with_recording_id(const std::string &id) const {
    std::vector<SpeechTurn> turns = turns_;
    for (auto &t : turns) t.recording_id = id;
    return Annotation(id, std::move(turns));
  }

  bool operator==(const Annotation &) const = default;

 private:
  void Normalize() {
    for (const auto &t : turns_) {
      if (t.recording_id != recording_id_)
        throw ArgumentError("turn recording id '" + t.recording_id +
                            "' differs from annotation id '" + recording_id_ + "'");
      if (!std::isfinite(t.onset) || t.onset < 0.0)
        throw ArgumentError("turn onset must be finite and >= 0");
      if (!std::isfinite(t.duration) || t.duration <= 0.0)
        throw ArgumentError("turn duration must be finite and > 0");
      if (t.speaker.empty()) throw ArgumentError("turn speaker is empty");
    }
    std::sort(turns_.begin(), turns_.end(), [](const SpeechTurn &a, const SpeechTurn &b) {
      if (a.speaker != b.speaker) return a.speaker < b.speaker;
      return a.onset < b.onset;
    });
    std::vector<SpeechTurn> merged;
    merged.reserve(turns_.size());
    for (auto &t : turns_) {
      if (!merged.empty() && merged.back().speaker == t.speaker &&
          t.onset <= merged.back().end()) {
        SpeechTurn &m = merged.back();
        if (t.end() > m.end()) m.duration = t.end() - m.onset;
        continue;
      }
      merged.push_back(std::move(t));
    }
    std::sort(merged.begin(), merged.end(), [](const SpeechTurn &a, const SpeechTurn &b) {
      if (a.onset != b.onset) return a.onset < b.onset;
      return a.speaker < b.speaker;
    });
    turns_ = std::move(merged);
  }

  std::string recording_id_;
  std::vector<SpeechTurn> turns_;
};

namespace detail {

inline std::vector<std::string_view> SplitWhitespace(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

inline bool ParseDouble(std::string_view s, double *out) {
  const char *first = s.data();
  if (!s.empty() && s.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), *out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(*out);
}

inline std::string FormatFixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace detail

// Parses NIST RTTM SPEAKER lines. Lines starting with ";;" are comments.
// Annotations come back in order of first appearance of their recording id.
inline std::vector<Annotation> parse_rttm(std::string_view text) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<SpeechTurn>> by_rec;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    auto fields = detail::SplitWhitespace(line);
    if (fields.empty()) {
      if (nl == text.size()) break;
      continue;
    }
    if (fields[0].starts_with(";;")) continue;
    if (fields.size() < 9)
      throw ParseError(line_no, "expected at least 9 fields, got " +
                                    std::to_string(fields.size()));
    if (fields[0] != "SPEAKER")
      throw ParseError(line_no, "unsupported record type '" + std::string(fields[0]) + "'");
    SpeechTurn t;
    t.recording_id = std::string(fields[1]);
    {
      auto [ptr, ec] = std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(),
                                       t.channel);
      if (ec != std::errc() || ptr != fields[2].data() + fields[2].size() || t.channel < 0)
        throw ParseError(line_no, "bad channel '" + std::string(fields[2]) + "'");
    }
    if (!detail::ParseDouble(fields[3], &t.onset))
      throw ParseError(line_no, "non-numeric onset '" + std::string(fields[3]) + "'");
    if (!detail::ParseDouble(fields[4], &t.duration))
      throw ParseError(line_no, "non-numeric duration '" + std::string(fields[4]) + "'");
    if (t.onset < 0.0) throw ParseError(line_no, "negative onset");
    if (t.duration <= 0.0) throw ParseError(line_no, "duration must be > 0");
    t.speaker = std::string(fields[7]);
    auto [it, inserted] = by_rec.try_emplace(t.recording_id);
    if (inserted) order.push_back(t.recording_id);
    it->second.push_back(std::move(t));
    if (nl == text.size()) break;
  }
  std::vector<Annotation> out;
  out.reserve(order.size());
  for (const auto &rec : order) out.emplace_back(rec, std::move(by_rec[rec]));
  return out;
}

inline std::string emit_rttm(std::span<const Annotation> annotations) {
  std::string out;
  for (const auto &a : annotations) {
    for (const auto &t : a.turns()) {
      out += "SPEAKER ";
      out += t.recording_id;
      out += ' ';
      out += std::to_string(t.channel);
      out += ' ';
      out += detail::FormatFixed3(t.onset);
      out += ' ';
      out += detail::FormatFixed3(t.duration);
      out += " <NA> <NA> ";
      out += t.speaker;
      out += " <NA> <NA>\n";
    }
  }
  return out;
}

inline std::string emit_rttm(const Annotation &a) { return emit_rttm(std::span(&a, 1)); }

// Clips turns to [start, end) and re-expresses them relative to start.
inline Annotation crop(const Annotation &a, double start, double end) {
  if (!(start >= 0.0) || !(start < end))
    throw ArgumentError("crop window requires 0 <= start < end");
  std::vector<SpeechTurn> out;
  for (const auto &t : a.turns()) {
    double s = std::max(t.onset, start);
    double e = std::min(t.end(), end);
    if (e <= s) continue;
    SpeechTurn c = t;
    c.onset = s - start;
    c.duration = (e - start) - c.onset;
    if (c.duration <= 0.0) continue;
    out.push_back(std::move(c));
  }
  return Annotation(a.recording_id(), std::move(out));
}

// Maximal intervals where at least `min_speakers` distinct speakers talk.
inline std::vector<Interval> overlap_regions(const Annotation &a, int min_speakers = 2) {
  if (min_speakers < 1) throw ArgumentError("min_speakers must be >= 1");
  // Same-speaker turns never overlap, so active turns == active speakers.
  std::vector<std::pair<double, int>> events;
  for (const auto &t : a.turns()) {
    events.emplace_back(t.onset, +1);
    events.emplace_back(t.end(), -1);
  }
  std::sort(events.begin(), events.end());
  std::vector<Interval> out;
  int active = 0;
  std::size_t i = 0;
  while (i < events.size()) {
    double x = events[i].first;
    while (i < events.size() && events[i].first == x) active += events[i++].second;
    if (i == events.size()) break;
    double next = events[i].first;
    if (active >= min_speakers && next > x) {
      if (!out.empty() && out.back().end == x)
        out.back().end = next;
      else
        out.push_back({x, next});
    }
  }
  return out;
}

inline double total_speech(const Annotation &a) {
  double total = 0.0;
  for (const auto &t : a.turns()) total += t.duration;
  return total;
}

inline Annotation relabel(const Annotation &a,
                          const std::map<std::string, std::string> &mapping) {
  std::vector<SpeechTurn> out = a.turns();
  for (auto &t : out) {
    auto it = mapping.find(t.speaker);
    if (it == mapping.end())
      throw ArgumentError("relabel: no mapping for speaker '" + t.speaker + "'");
    t.speaker = it->second;
  }
  return Annotation(a.recording_id(), std::move(out));
}

// Atomic segmentation of the time axis over several annotations: every turn
// boundary of every input (plus optional extra cut points) splits the axis.
// active[k][r] lists the indices into speakers[k] active in region r.
struct Segmentation {
  std::vector<Interval> regions;
  std::vector<std::vector<std::string>> speakers;
  std::vector<std::vector<std::vector<int>>> active;
};

inline Segmentation segment(std::span<const Annotation *const> inputs,
                            std::span<const double> extra_cuts = {}) {
  Segmentation seg;
  std::vector<double> cuts(extra_cuts.begin(), extra_cuts.end());
  for (const Annotation *a : inputs)
    for (const auto &t : a->turns()) {
      cuts.push_back(t.onset);
      cuts.push_back(t.end());
    }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) seg.regions.push_back({cuts[i], cuts[i + 1]});
  seg.speakers.resize(inputs.size());
  seg.active.assign(inputs.size(), std::vector<std::vector<int>>(seg.regions.size()));
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    seg.speakers[k] = inputs[k]->speakers();
    const auto &names = seg.speakers[k];
    for (const auto &t : inputs[k]->turns()) {
      int spk = static_cast<int>(std::lower_bound(names.begin(), names.end(), t.speaker) -
                                 names.begin());
      auto lo = std::lower_bound(cuts.begin(), cuts.end(), t.onset) - cuts.begin();
      auto hi = std::lower_bound(cuts.begin(), cuts.end(), t.end()) - cuts.begin();
      for (auto r = lo; r < hi; ++r) seg.active[k][r].push_back(spk);
    }
    for (auto &v : seg.active[k]) std::sort(v.begin(), v.end());
  }
  return seg;
}

}  // namespace avlabel
