// avlabel/fusion.hpp

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

// Rank-weighted voting fusion of several diarization hypotheses: labels are
// first aligned into a shared space, then each atomic time region gets a
// weighted estimate of the speaker count and the most-voted speakers.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "avlabel/annotation.hpp"
#include "avlabel/assignment.hpp"
#include "avlabel/errors.hpp"

namespace avlabel {

struct Hypothesis {
  std::string source;
  Annotation annotation;
  int rank = 1;
  double weight = 1.0;
};

enum class TieRounding { kHalfUp };
// kLongestThenLexicographic ranks equal-vote speakers by their weighted total
// speaking time before falling back to the label, which keeps the output
// independent of how input labels are named.
enum class TieSpeakerOrder { kLexicographic, kLongestThenLexicographic };

struct FusionConfig {
  double rank_exponent = 0.5;
  TieRounding tie_rounding = TieRounding::kHalfUp;
  TieSpeakerOrder tie_speaker_order = TieSpeakerOrder::kLongestThenLexicographic;
};

// weight_k = rank_k^-exponent, normalized to sum to one.
inline std::vector<Hypothesis> compute_weights(std::vector<Hypothesis> hyps,
                                               const FusionConfig &config = {}) {
  if (hyps.empty()) throw ArgumentError("compute_weights: no hypotheses");
  if (!(config.rank_exponent >= 0.0)) throw ArgumentError("rank_exponent must be >= 0");
  double sum = 0.0;
  for (auto &h : hyps) {
    if (h.rank < 1) throw ArgumentError("hypothesis rank must be >= 1");
    h.weight = std::pow(static_cast<double>(h.rank), -config.rank_exponent);
    sum += h.weight;
  }
  for (auto &h : hyps) h.weight /= sum;
  return hyps;
}

namespace detail {

inline double IntervalOverlap(const std::vector<Interval> &a, const std::vector<Interval> &b) {
  double total = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    double s = std::max(a[i].start, b[j].start);
    double e = std::min(a[i].end, b[j].end);
    if (e > s) total += e - s;
    if (a[i].end < b[j].end)
      ++i;
    else
      ++j;
  }
  return total;
}

}  // namespace detail

// Aligns every hypothesis onto a shared label space. The first hypothesis
// keeps its labels; each later one is matched (maximum total overlap) against
// everything mapped so far, where a global label's overlap is summed over the
// hypotheses already carrying it. Unmatched speakers get fresh labels.
inline std::vector<Hypothesis> map_labels(std::vector<Hypothesis> hyps) {
  if (hyps.empty()) throw ArgumentError("map_labels: no hypotheses");
  const std::string &rec = hyps.front().annotation.recording_id();
  for (const auto &h : hyps)
    if (h.annotation.recording_id() != rec && !h.annotation.empty() &&
        !hyps.front().annotation.empty())
      throw ArgumentError("map_labels: mixed recording ids '" + rec + "' and '" +
                          h.annotation.recording_id() + "'");

  std::vector<std::string> global;  // label names in creation order
  // Per global label, one disjoint interval list per mapped hypothesis.
  std::map<std::string, std::vector<std::vector<Interval>>> global_time;
  auto absorb = [&](const Annotation &a) {
    for (const auto &spk : a.speakers()) {
      auto &dst = global_time[spk];
      if (dst.empty()) global.push_back(spk);
      dst.push_back(a.intervals_of(spk));
    }
  };
  absorb(hyps.front().annotation);

  for (std::size_t k = 1; k < hyps.size(); ++k) {
    const Annotation &a = hyps[k].annotation;
    const auto local = a.speakers();
    std::vector<double> cost(local.size() * global.size());
    for (std::size_t i = 0; i < local.size(); ++i) {
      auto iv = a.intervals_of(local[i]);
      for (std::size_t j = 0; j < global.size(); ++j) {
        double o = 0.0;
        for (const auto &other : global_time[global[j]]) o += detail::IntervalOverlap(iv, other);
        cost[i * global.size() + j] = -o;
      }
    }
    auto assign = solve_assignment(cost, local.size(), global.size());
    for (std::size_t i = 0; i < local.size(); ++i)
      if (assign[i] >= 0 && !(cost[i * global.size() + assign[i]] < 0.0)) assign[i] = -1;
    std::set<std::string> taken(global.begin(), global.end());
    std::map<std::string, std::string> mapping;
    for (std::size_t i = 0; i < local.size(); ++i) {
      if (assign[i] >= 0) {
        mapping[local[i]] = global[assign[i]];
        continue;
      }
      std::string fresh = local[i];
      for (int n = 0; taken.count(fresh); ++n)
        fresh = local[i] + "_" + std::to_string(k + 1) + (n ? "_" + std::to_string(n) : "");
      taken.insert(fresh);
      mapping[local[i]] = fresh;
    }
    hyps[k].annotation = relabel(a, mapping).with_recording_id(rec);
    absorb(hyps[k].annotation);
  }
  return hyps;
}

namespace detail {

inline long RoundHalfUp(double x) { return static_cast<long>(std::floor(x + 0.5 + 1e-9)); }

}  // namespace detail

// Per atomic region: n = round_half_up(sum_k w_k * count_k), then the n
// speakers with the largest summed weight are output, ties resolved by
// config.tie_speaker_order. Weights are renormalized to sum to one.
inline Annotation vote(std::span<const Hypothesis> mapped, const FusionConfig &config = {}) {
  if (mapped.empty()) return Annotation();
  std::string rec;
  for (const auto &h : mapped)
    if (!h.annotation.empty()) rec = h.annotation.recording_id();
  if (rec.empty()) rec = mapped.front().annotation.recording_id();

  double wsum = 0.0;
  for (const auto &h : mapped) {
    if (!(h.weight > 0.0)) throw ArgumentError("hypothesis weight must be > 0");
    wsum += h.weight;
  }
  std::vector<const Annotation *> inputs;
  for (const auto &h : mapped) inputs.push_back(&h.annotation);
  Segmentation seg = segment(inputs);

  std::map<std::string, double> weighted_time;
  for (const auto &h : mapped)
    for (const auto &t : h.annotation.turns()) weighted_time[t.speaker] += h.weight / wsum * t.duration;
  const bool by_time = config.tie_speaker_order == TieSpeakerOrder::kLongestThenLexicographic;
  // Votes and times are float sums; differences below these are ties.
  constexpr double kVoteEps = 1e-12, kTimeEps = 1e-9;
  auto before = [&](const std::pair<std::string, double> &a,
                    const std::pair<std::string, double> &b) {
    if (std::abs(a.second - b.second) > kVoteEps) return a.second > b.second;
    if (by_time) {
      double ta = weighted_time[a.first], tb = weighted_time[b.first];
      if (std::abs(ta - tb) > kTimeEps) return ta > tb;
    }
    return a.first < b.first;
  };

  std::vector<SpeechTurn> out;
  // Open runs: speaker -> run start; regions are contiguous where they share
  // a cut point, so runs extend exactly across region boundaries.
  std::map<std::string, double> open;
  double prev_end = 0.0;
  auto close_runs = [&](const std::set<std::string> &keep) {
    for (auto it = open.begin(); it != open.end();) {
      if (keep.count(it->first)) {
        ++it;
        continue;
      }
      SpeechTurn t;
      t.recording_id = rec;
      t.onset = it->second;
      t.duration = prev_end - it->second;
      t.speaker = it->first;
      out.push_back(std::move(t));
      it = open.erase(it);
    }
  };
  for (std::size_t r = 0; r < seg.regions.size(); ++r) {
    double expected = 0.0;
    std::map<std::string, double> votes;
    for (std::size_t k = 0; k < mapped.size(); ++k) {
      const double w = mapped[k].weight / wsum;
      const auto &act = seg.active[k][r];
      expected += w * static_cast<double>(act.size());
      for (int s : act) votes[seg.speakers[k][s]] += w;
    }
    std::set<std::string> chosen;
    long n = detail::RoundHalfUp(expected);
    if (n > 0) {
      std::vector<std::pair<std::string, double>> ranked(votes.begin(), votes.end());
      std::stable_sort(ranked.begin(), ranked.end(), before);
      n = std::min<long>(n, static_cast<long>(ranked.size()));
      for (long i = 0; i < n; ++i) chosen.insert(ranked[i].first);
    }
    const bool contiguous = r > 0 && seg.regions[r].start == prev_end;
    close_runs(contiguous ? chosen : std::set<std::string>{});
    for (const auto &spk : chosen) open.try_emplace(spk, seg.regions[r].start);
    prev_end = seg.regions[r].end;
  }
  close_runs({});
  return Annotation(rec, std::move(out));
}

inline Annotation fuse(std::vector<Hypothesis> hyps, const FusionConfig &config = {}) {
  auto weighted = compute_weights(std::move(hyps), config);
  auto mapped = map_labels(std::move(weighted));
  return vote(mapped, config);
}

}  // namespace avlabel
