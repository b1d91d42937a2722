// avlabel/corruption.hpp

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

// Controlled label corruption used by mock diarization workers and fixtures.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "avlabel/annotation.hpp"

namespace avlabel {

struct CorruptionRecipe {
  double shift_ms = 0.0;        // magnitude; sign drawn per turn
  double shift_fraction = 1.0;  // share of turns shifted, rounded up
  int flip = 0;                 // turns reassigned to another speaker
  int drop = 0;                 // turns removed
  std::uint64_t seed = 0;

  bool identity() const { return shift_ms == 0.0 && flip == 0 && drop == 0; }
};

namespace detail {

// Portable index shuffle (std::shuffle's distribution is library-defined).
inline std::vector<std::size_t> SeededOrder(std::size_t n, std::mt19937_64 &rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
  return idx;
}

}  // namespace detail

// Applies drop, then flip, then shift. Deterministic in (a, recipe).
inline Annotation corrupt(const Annotation &a, const CorruptionRecipe &recipe) {
  std::mt19937_64 rng(recipe.seed);
  std::vector<SpeechTurn> turns = a.turns();
  const auto speakers = a.speakers();

  if (recipe.drop > 0) {
    auto order = detail::SeededOrder(turns.size(), rng);
    std::vector<char> gone(turns.size(), 0);
    for (int i = 0; i < recipe.drop && i < static_cast<int>(order.size()); ++i) gone[order[i]] = 1;
    std::vector<SpeechTurn> kept;
    for (std::size_t i = 0; i < turns.size(); ++i)
      if (!gone[i]) kept.push_back(turns[i]);
    turns = std::move(kept);
  }
  if (recipe.flip > 0) {
    auto order = detail::SeededOrder(turns.size(), rng);
    for (int i = 0; i < recipe.flip && i < static_cast<int>(order.size()); ++i) {
      auto &t = turns[order[i]];
      if (speakers.size() < 2) {
        t.speaker += "_x";
        continue;
      }
      auto pos = std::find(speakers.begin(), speakers.end(), t.speaker) - speakers.begin();
      t.speaker = speakers[(pos + 1 + rng() % (speakers.size() - 1)) % speakers.size()];
    }
  }
  if (recipe.shift_ms != 0.0 && !turns.empty()) {
    auto order = detail::SeededOrder(turns.size(), rng);
    auto n = static_cast<std::size_t>(
        std::ceil(std::clamp(recipe.shift_fraction, 0.0, 1.0) * static_cast<double>(turns.size()) - 1e-9));
    for (std::size_t i = 0; i < n; ++i) {
      auto &t = turns[order[i]];
      double delta = (rng() & 1 ? 1.0 : -1.0) * recipe.shift_ms / 1000.0;
      double onset = std::round((t.onset + delta) * 1000.0) / 1000.0;
      t.onset = std::max(0.0, onset);
    }
  }
  return Annotation(a.recording_id(), std::move(turns));
}

}  // namespace avlabel
