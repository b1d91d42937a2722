// avlabel/assignment.hpp

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
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace avlabel {

inline constexpr double kForbidden = std::numeric_limits<double>::infinity();

// Minimum-cost assignment on a rows x cols cost matrix (row-major). Entries
// equal to kForbidden never appear in the result. Returns, per row, the
// assigned column or -1. Among assignments, the number of permitted pairs is
// maximized first, then the total cost is minimized (Kuhn-Munkres with
// potentials, O(n^2 m)).
inline std::vector<int> solve_assignment(const std::vector<double> &cost, std::size_t rows,
                                         std::size_t cols) {
  std::vector<int> result(rows, -1);
  if (rows == 0 || cols == 0) return result;

  const bool transposed = rows > cols;
  const std::size_t n = transposed ? cols : rows;
  const std::size_t m = transposed ? rows : cols;
  auto at = [&](std::size_t i, std::size_t j) {
    return transposed ? cost[j * cols + i] : cost[i * cols + j];
  };

  double max_abs = 0.0;
  for (double c : cost)
    if (std::isfinite(c)) max_abs = std::max(max_abs, std::abs(c));
  // Large enough that one forbidden pair outweighs any sum of permitted ones.
  const double big = (max_abs + 1.0) * static_cast<double>(n + 1) * 4.0;
  auto c = [&](std::size_t i, std::size_t j) {
    double v = at(i, j);
    return std::isfinite(v) ? v : big;
  };

  // 1-based potentials formulation.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      std::size_t i0 = p[j0], j1 = 0;
      double delta = inf;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }

  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    std::size_t i = p[j] - 1, jj = j - 1;
    if (!std::isfinite(at(i, jj))) continue;
    if (transposed)
      result[jj] = static_cast<int>(i);
    else
      result[i] = static_cast<int>(jj);
  }
  return result;
}

}  // namespace avlabel
