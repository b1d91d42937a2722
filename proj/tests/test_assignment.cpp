#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "avlabel/assignment.hpp"

using avlabel::kForbidden;
using avlabel::solve_assignment;

namespace {

// Exhaustive: maximize the number of permitted pairs, then minimize cost.
std::pair<int, double> BruteForce(const std::vector<double> &c, int rows, int cols) {
  int n = std::max(rows, cols);
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::pair<int, double> best{-1, 0.0};
  do {
    int cnt = 0;
    double sum = 0;
    for (int i = 0; i < rows; ++i) {
      int j = perm[i];
      if (j >= cols) continue;
      double v = c[i * cols + j];
      if (v == kForbidden) continue;
      ++cnt;
      sum += v;
    }
    if (cnt > best.first || (cnt == best.first && sum < best.second - 1e-12)) best = {cnt, sum};
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST(Assignment, Simple) {
  std::vector<double> c = {4, 1, 3, 2, 0, 5, 3, 2, 2};
  auto a = solve_assignment(c, 3, 3);
  EXPECT_EQ(a, (std::vector<int>{1, 0, 2}));
}

TEST(Assignment, EmptyAndForbidden) {
  EXPECT_TRUE(solve_assignment({}, 0, 3).empty());
  EXPECT_EQ(solve_assignment({}, 2, 0), (std::vector<int>{-1, -1}));
  std::vector<double> c = {kForbidden, kForbidden};
  EXPECT_EQ(solve_assignment(c, 1, 2), (std::vector<int>{-1}));
}

TEST(Assignment, MatchesBruteForceOnRandomRectangles) {
  std::mt19937 rng(42);
  for (int trial = 0; trial < 400; ++trial) {
    int rows = 1 + rng() % 5, cols = 1 + rng() % 5;
    std::vector<double> c(rows * cols);
    for (auto &v : c) v = (rng() % 7 == 0) ? kForbidden : double(rng() % 100) / 10.0 - 3.0;
    auto a = solve_assignment(c, rows, cols);
    std::vector<char> used(cols, 0);
    int cnt = 0;
    double sum = 0;
    for (int i = 0; i < rows; ++i) {
      if (a[i] < 0) continue;
      ASSERT_FALSE(used[a[i]]);
      used[a[i]] = 1;
      ASSERT_NE(c[i * cols + a[i]], kForbidden);
      ++cnt;
      sum += c[i * cols + a[i]];
    }
    auto best = BruteForce(c, rows, cols);
    ASSERT_EQ(cnt, best.first);
    ASSERT_NEAR(sum, best.second, 1e-9);
  }
}
