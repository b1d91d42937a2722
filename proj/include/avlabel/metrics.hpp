// avlabel/metrics.hpp

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

// Diarization error rate computed exactly on intervals.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "avlabel/annotation.hpp"
#include "avlabel/assignment.hpp"
#include "avlabel/errors.hpp"

namespace avlabel {

inline const std::string kUnmapped = "<unmapped>";

struct DerReport {
  double missed = 0.0;
  double false_alarm = 0.0;
  double confusion = 0.0;
  double reference_total = 0.0;
  double der = 0.0;
  // Set when the scored reference is empty but the hypothesis is not.
  bool degenerate = false;

  double error() const { return missed + false_alarm + confusion; }
};

struct DerOptions {
  double collar = 0.25;
  bool score_overlap = true;
};

namespace detail {

// Pairwise overlap (ref speakers x hyp speakers) restricted to scored regions.
inline std::vector<double> OverlapMatrix(const Segmentation &seg, const std::vector<char> &scored) {
  const std::size_t nr = seg.speakers[0].size(), nh = seg.speakers[1].size();
  std::vector<double> m(nr * nh, 0.0);
  for (std::size_t r = 0; r < seg.regions.size(); ++r) {
    if (!scored[r]) continue;
    const double d = seg.regions[r].length();
    for (int a : seg.active[0][r])
      for (int b : seg.active[1][r]) m[a * nh + b] += d;
  }
  return m;
}

// hyp index -> ref index (or -1), maximizing total overlap; zero-overlap
// pairs are left unmatched.
inline std::vector<int> MaxOverlapMapping(const std::vector<double> &overlap, std::size_t nr,
                                          std::size_t nh) {
  std::vector<double> cost(nh * nr);
  for (std::size_t h = 0; h < nh; ++h)
    for (std::size_t r = 0; r < nr; ++r) {
      double o = overlap[r * nh + h];
      cost[h * nr + r] = -o;
    }
  auto assign = solve_assignment(cost, nh, nr);
  for (std::size_t h = 0; h < nh; ++h)
    if (assign[h] >= 0 && !(overlap[assign[h] * nh + h] > 0.0)) assign[h] = -1;
  return assign;
}

}  // namespace detail

// Injective hyp->ref mapping maximizing total temporal overlap over the
// whole timeline. Hypothesis speakers without a partner map to kUnmapped.
inline std::map<std::string, std::string> optimal_mapping(const Annotation &ref,
                                                          const Annotation &hyp) {
  const Annotation *inputs[] = {&ref, &hyp};
  Segmentation seg = segment(inputs);
  std::vector<char> scored(seg.regions.size(), 1);
  auto overlap = detail::OverlapMatrix(seg, scored);
  auto assign = detail::MaxOverlapMapping(overlap, seg.speakers[0].size(), seg.speakers[1].size());
  std::map<std::string, std::string> out;
  for (std::size_t h = 0; h < assign.size(); ++h)
    out[seg.speakers[1][h]] = assign[h] >= 0 ? seg.speakers[0][assign[h]] : kUnmapped;
  return out;
}

// Regions within +-collar of any reference turn boundary are not scored, nor
// (without score_overlap) regions where the reference has >= 2 speakers.
// The speaker mapping is optimal over the scored regions, so the result is
// the minimum error over all injective mappings.
inline DerReport der(const Annotation &ref, const Annotation &hyp, const DerOptions &opts = {}) {
  if (!(opts.collar >= 0.0) || !std::isfinite(opts.collar))
    throw ArgumentError("collar must be finite and >= 0");

  std::vector<Interval> no_score;
  if (opts.collar > 0.0) {
    for (const auto &t : ref.turns()) {
      no_score.push_back({t.onset - opts.collar, t.onset + opts.collar});
      no_score.push_back({t.end() - opts.collar, t.end() + opts.collar});
    }
  }
  std::vector<double> cuts;
  for (const auto &iv : no_score) {
    cuts.push_back(std::max(0.0, iv.start));
    cuts.push_back(std::max(0.0, iv.end));
  }
  const Annotation *inputs[] = {&ref, &hyp};
  Segmentation seg = segment(inputs, cuts);

  // Union of collar zones, for membership tests.
  std::sort(no_score.begin(), no_score.end(),
            [](const Interval &a, const Interval &b) { return a.start < b.start; });
  std::vector<Interval> zones;
  for (const auto &iv : no_score) {
    if (!zones.empty() && iv.start <= zones.back().end)
      zones.back().end = std::max(zones.back().end, iv.end);
    else
      zones.push_back(iv);
  }
  auto in_zone = [&](double mid) {
    auto it = std::upper_bound(zones.begin(), zones.end(), mid,
                               [](double x, const Interval &z) { return x < z.start; });
    if (it == zones.begin()) return false;
    --it;
    return mid < it->end;
  };

  std::vector<char> scored(seg.regions.size(), 1);
  for (std::size_t r = 0; r < seg.regions.size(); ++r) {
    const auto &reg = seg.regions[r];
    const double mid = 0.5 * (reg.start + reg.end);
    if (in_zone(mid)) scored[r] = 0;
    if (!opts.score_overlap && seg.active[0][r].size() >= 2) scored[r] = 0;
  }

  const std::size_t nr = seg.speakers[0].size(), nh = seg.speakers[1].size();
  auto overlap = detail::OverlapMatrix(seg, scored);
  auto assign = detail::MaxOverlapMapping(overlap, nr, nh);

  DerReport rep;
  double hyp_total = 0.0;
  for (std::size_t r = 0; r < seg.regions.size(); ++r) {
    if (!scored[r]) continue;
    const double d = seg.regions[r].length();
    const auto &ref_active = seg.active[0][r];
    const auto &hyp_active = seg.active[1][r];
    std::size_t n_correct = 0;
    for (int h : hyp_active)
      if (assign[h] >= 0 && std::binary_search(ref_active.begin(), ref_active.end(), assign[h]))
        ++n_correct;
    const std::size_t n_ref = ref_active.size(), n_hyp = hyp_active.size();
    rep.reference_total += d * static_cast<double>(n_ref);
    hyp_total += d * static_cast<double>(n_hyp);
    if (n_ref > n_hyp) rep.missed += d * static_cast<double>(n_ref - n_hyp);
    if (n_hyp > n_ref) rep.false_alarm += d * static_cast<double>(n_hyp - n_ref);
    const std::size_t n_min = std::min(n_ref, n_hyp);
    if (n_min > n_correct) rep.confusion += d * static_cast<double>(n_min - n_correct);
  }
  if (rep.reference_total > 0.0) {
    rep.der = rep.error() / rep.reference_total;
  } else if (hyp_total > 0.0) {
    rep.der = std::numeric_limits<double>::infinity();
    rep.degenerate = true;
  } else {
    rep.der = 0.0;
  }
  return rep;
}

}  // namespace avlabel
