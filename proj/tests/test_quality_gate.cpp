#include <gtest/gtest.h>

#include <random>

#include "avlabel/quality_gate.hpp"

using namespace avlabel;

namespace {

SyncResult Sync(int offset, double conf) { return SyncResult{offset, conf, {{1, offset, conf}}}; }

}  // namespace

TEST(Gate, AllInclusiveBoundaries) {
  auto v = evaluate({3.5, 3.5, 3.0}, {60.0}, Sync(5, 1.0), 180.0);
  EXPECT_TRUE(v.pass);
  ASSERT_EQ(v.reasons.size(), 4u);
  for (const auto &r : v.reasons) EXPECT_TRUE(r.passed) << r.check;
  EXPECT_TRUE(evaluate({3.5, 3.5, 3.0}, {60.0}, Sync(-5, 1.0), 180.0).pass);
}

TEST(Gate, SingleViolations) {
  auto v = evaluate({3.5, 3.5, 2.99}, {60.0}, Sync(5, 1.0), 180.0);
  EXPECT_FALSE(v.pass);
  EXPECT_EQ(v.failed_checks(), std::vector<std::string>{"audio_quality"});
  EXPECT_EQ(evaluate({4, 4, 4}, {59.99}, Sync(0, 3), 200).failed_checks(),
            std::vector<std::string>{"video_quality"});
  EXPECT_EQ(evaluate({4, 4, 4}, {80}, Sync(6, 9), 200).failed_checks(), std::vector<std::string>{"av_sync"});
  EXPECT_EQ(evaluate({4, 4, 4}, {80}, Sync(0, 0.99), 200).failed_checks(),
            std::vector<std::string>{"av_sync"});
  EXPECT_EQ(evaluate({4, 4, 4}, {80}, Sync(0, 2), 179).failed_checks(),
            std::vector<std::string>{"source_duration"});
}

TEST(Gate, SyncNeedsAnyTrack) {
  SyncResult s{0, 0, {{1, 9, 5.0}, {2, 1, 0.5}, {3, -2, 1.5}}};
  auto v = evaluate({4, 4, 4}, {80}, s, 200);
  EXPECT_TRUE(v.pass);
  EXPECT_EQ(v.find("av_sync")->measured, 1.0);
  EXPECT_NE(v.find("av_sync")->detail.find("track 3"), std::string::npos);

  v = evaluate({4, 4, 4}, {80}, SyncResult{}, 200);
  EXPECT_FALSE(v.pass);
  EXPECT_EQ(v.find("av_sync")->detail, "no synchronized face track");

  v = evaluate({4, 4, 4}, {80}, std::nullopt, 200);
  EXPECT_FALSE(v.pass);
  EXPECT_TRUE(v.passed_except("av_sync"));
}

TEST(Gate, RangeErrors) {
  EXPECT_THROW(evaluate({4, 4, 5.1}, {80}, Sync(0, 2), 200), ArgumentError);
  EXPECT_THROW(evaluate({4, 4, 4}, {101}, Sync(0, 2), 200), ArgumentError);
  EXPECT_THROW(evaluate({4, 4, 4}, {80}, Sync(0, -1), 200), ArgumentError);
  EXPECT_THROW(evaluate({4, 4, 4}, {80}, Sync(0, 1), -1), ArgumentError);
  GateConfig bad;
  bad.ovrl_min = 6;
  EXPECT_THROW(evaluate({4, 4, 4}, {80}, Sync(0, 2), 200, bad), ArgumentError);
}

TEST(Gate, PassIsConjunction) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> q(0, 5), vq(0, 100), conf(0, 3), dur(0, 400);
  std::uniform_int_distribution<int> off(-10, 10);
  for (int i = 0; i < 1000; ++i) {
    auto v = evaluate({q(rng), q(rng), q(rng)}, {vq(rng)}, Sync(off(rng), conf(rng)), dur(rng));
    bool all = true;
    for (const auto &r : v.reasons) all = all && r.passed;
    EXPECT_EQ(v.pass, all);
    EXPECT_EQ(v.reasons.size(), 4u);
  }
}

TEST(Gate, Monotonicity) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> q(0, 5), vq(0, 100), conf(0, 3), dur(0, 400), u(0, 1);
  std::uniform_int_distribution<int> off(-10, 10), k(0, 4);
  for (int i = 0; i < 500; ++i) {
    GateConfig c;
    c.ovrl_min = q(rng);
    c.vqa_min = vq(rng);
    c.max_abs_offset = std::abs(off(rng));
    c.conf_min = conf(rng);
    c.min_source_duration = dur(rng);
    AudioQuality aq{q(rng), q(rng), q(rng)};
    VideoQuality v{vq(rng)};
    auto s = Sync(off(rng), conf(rng));
    double d = dur(rng);
    bool base = evaluate(aq, v, s, d, c).pass;
    GateConfig t = c;
    switch (k(rng)) {
      case 0: t.ovrl_min = c.ovrl_min + u(rng) * (5 - c.ovrl_min); break;
      case 1: t.vqa_min = c.vqa_min + u(rng) * (100 - c.vqa_min); break;
      case 2: t.max_abs_offset = std::max(0, c.max_abs_offset - 1 - static_cast<int>(u(rng) * 3)); break;
      case 3: t.conf_min = c.conf_min + u(rng); break;
      default: t.min_source_duration = c.min_source_duration + 100 * u(rng); break;
    }
    bool tighter = evaluate(aq, v, s, d, t).pass;
    EXPECT_FALSE(!base && tighter) << "config " << i;
  }
}
