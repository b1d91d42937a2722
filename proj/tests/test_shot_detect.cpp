#include <gtest/gtest.h>

#include <random>

#include "avlabel/shot_detect.hpp"

using namespace avlabel;

namespace {

Frame Solid(std::int64_t index, int h, int s, int v, int w = 16, int ht = 9) {
  Frame f;
  f.index = index;
  f.hsv = Image(w, ht, 3);
  for (std::size_t i = 0; i < f.hsv.data.size(); i += 3) {
    f.hsv.data[i] = static_cast<std::uint8_t>(h);
    f.hsv.data[i + 1] = static_cast<std::uint8_t>(s);
    f.hsv.data[i + 2] = static_cast<std::uint8_t>(v);
  }
  return f;
}

// Per-channel means taken separately, then averaged.
double ReferenceScore(const Image &a, const Image &b) {
  double ch[3] = {0, 0, 0};
  int n = a.width * a.height;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x)
      for (int c = 0; c < 3; ++c) ch[c] += std::abs(double(a.at(x, y, c)) - double(b.at(x, y, c)));
  return (ch[0] / n + ch[1] / n + ch[2] / n) / 3.0;
}

}  // namespace

TEST(ContentScore, BlackWhite) {
  EXPECT_EQ(content_score(Solid(0, 0, 0, 0), Solid(1, 0, 0, 255)), 85.0);
  EXPECT_EQ(content_score(Solid(0, 0, 0, 17), Solid(1, 0, 0, 17)), 0.0);
}

TEST(ContentScore, MatchesReferenceAndSymmetric) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> px(0, 255);
  for (int i = 0; i < 100; ++i) {
    Image a(13, 7, 3), b(13, 7, 3);
    for (auto &v : a.data) v = px(rng);
    for (auto &v : b.data) v = px(rng);
    EXPECT_NEAR(content_score(a, b), ReferenceScore(a, b), 1e-9);
    EXPECT_EQ(content_score(a, b), content_score(b, a));
    EXPECT_LE(content_score(a, b), 255.0);
  }
}

TEST(ContentScore, GeometryMismatch) {
  EXPECT_THROW(content_score(Solid(0, 0, 0, 0, 4, 4), Solid(1, 0, 0, 0, 4, 5)), ArgumentError);
}

TEST(DetectCuts, PlantedTransitions) {
  std::vector<Frame> frames;
  for (int i = 0; i < 300; ++i) {
    if (i < 100)
      frames.push_back(Solid(i, 0, 0, 128));  // gray
    else if (i < 200)
      frames.push_back(Solid(i, 60, 255, 128));  // (60 + 255 + 0) / 3 = 105
    else
      frames.push_back(Solid(i, 150, 200, 200));  // (90 + 55 + 72) / 3
  }
  auto cuts = detect_cuts(frames);
  ASSERT_EQ(cuts.size(), 2u);
  EXPECT_EQ(cuts[0].frame_index, 100);
  EXPECT_EQ(cuts[1].frame_index, 200);
  EXPECT_DOUBLE_EQ(cuts[0].score, 105.0);
  EXPECT_NEAR(cuts[1].score, 217.0 / 3.0, 1e-12);
}

TEST(DetectCuts, ConstantSequence) {
  std::vector<Frame> frames;
  for (int i = 0; i < 300; ++i) frames.push_back(Solid(i, 40, 40, 40));
  EXPECT_TRUE(detect_cuts(frames).empty());
  EXPECT_TRUE(detect_cuts(std::span<const Frame>(frames.data(), 1)).empty());
}

TEST(DetectCuts, ThresholdIsStrict) {
  std::vector<Frame> frames;
  for (int i = 0; i < 40; ++i) frames.push_back(i < 20 ? Solid(i, 0, 0, 0) : Solid(i, 0, 0, 90));
  EXPECT_TRUE(detect_cuts(frames).empty());  // exactly 30
  frames[20] = Solid(20, 0, 0, 93);
  EXPECT_EQ(detect_cuts(frames).size(), 1u);
}

TEST(DetectCuts, MinSceneLenSuppression) {
  std::vector<Frame> frames;
  for (int i = 0; i < 200; ++i) {
    int v = i < 100 ? 0 : (i < 105 ? 255 : 0);
    frames.push_back(Solid(i, 0, 0, v));
  }
  auto cuts = detect_cuts(frames, 30.0, 15);
  ASSERT_EQ(cuts.size(), 1u);
  EXPECT_EQ(cuts[0].frame_index, 100);
  // With no suppression the flash produces two cuts.
  EXPECT_EQ(detect_cuts(frames, 30.0, 1).size(), 2u);
  // A cut within min_scene_len of the start is suppressed.
  std::vector<Frame> early;
  for (int i = 0; i < 50; ++i) early.push_back(Solid(i, 0, 0, i < 10 ? 0 : 255));
  EXPECT_TRUE(detect_cuts(early).empty());
}

TEST(DetectCuts, SpacingAndDeterminism) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> px(0, 255);
  std::vector<Frame> frames;
  for (int i = 0; i < 400; ++i) frames.push_back(Solid(i, px(rng), px(rng), px(rng), 4, 4));
  auto cuts = detect_cuts(frames, 30.0, 15);
  for (std::size_t k = 0; k < cuts.size(); ++k) {
    EXPECT_GT(cuts[k].score, 30.0);
    EXPECT_GE(cuts[k].frame_index - (k ? cuts[k - 1].frame_index : 0), 15);
  }
  EXPECT_EQ(cuts, detect_cuts(frames, 30.0, 15));
}

TEST(DetectCuts, BadArguments) {
  std::vector<Frame> frames{Solid(0, 0, 0, 0), Solid(1, 0, 0, 0)};
  EXPECT_THROW(detect_cuts(frames, 0.0), ArgumentError);
  EXPECT_THROW(detect_cuts(frames, 30.0, 0), ArgumentError);
}

TEST(CutClips, Partition) {
  auto one = cut_clips("s", {}, 250, 25.0);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].start_frame, 0);
  EXPECT_EQ(one[0].end_frame, 250);
  EXPECT_DOUBLE_EQ(one[0].duration(), 10.0);

  std::vector<ShotBoundary> b{{100, 50.0}};
  auto two = cut_clips("s", b, 250, 25.0);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[0].end_frame, 100);
  EXPECT_EQ(two[1].start_frame, 100);
  EXPECT_EQ(two[1].end_frame, 250);

  b.push_back({180, 40.0});
  auto three = cut_clips("s", b, 250, 25.0);
  ASSERT_EQ(three.size(), 3u);
  std::int64_t at = 0;
  for (const auto &c : three) {
    EXPECT_EQ(c.start_frame, at);
    EXPECT_GT(c.end_frame, c.start_frame);
    at = c.end_frame;
  }
  EXPECT_EQ(at, 250);
}

TEST(CutClips, Errors) {
  std::vector<ShotBoundary> unsorted{{180, 40}, {100, 40}};
  EXPECT_THROW(cut_clips("s", unsorted, 250, 25.0), ArgumentError);
  std::vector<ShotBoundary> out{{250, 40}};
  EXPECT_THROW(cut_clips("s", out, 250, 25.0), ArgumentError);
  std::vector<ShotBoundary> zero{{0, 40}};
  EXPECT_THROW(cut_clips("s", zero, 250, 25.0), ArgumentError);
}

TEST(Image, HsvConversion) {
  Image rgb(4, 1, 3);
  auto set = [&](int x, int r, int g, int b) {
    rgb.at(x, 0, 0) = r;
    rgb.at(x, 0, 1) = g;
    rgb.at(x, 0, 2) = b;
  };
  set(0, 255, 0, 0);
  set(1, 0, 255, 0);
  set(2, 0, 0, 255);
  set(3, 128, 128, 128);
  auto hsv = rgb_to_hsv(rgb);
  EXPECT_EQ(hsv.at(0, 0, 0), 0);
  EXPECT_EQ(hsv.at(1, 0, 0), 60);
  EXPECT_EQ(hsv.at(2, 0, 0), 120);
  EXPECT_EQ(hsv.at(0, 0, 1), 255);
  EXPECT_EQ(hsv.at(3, 0, 1), 0);
  EXPECT_EQ(hsv.at(3, 0, 2), 128);
}

TEST(Image, DownscaleStaysCloseOnSmoothContent) {
  Image a(512, 288, 3), b(512, 288, 3);
  for (int y = 0; y < 288; ++y)
    for (int x = 0; x < 512; ++x)
      for (int c = 0; c < 3; ++c) {
        a.at(x, y, c) = static_cast<std::uint8_t>((x / 4 + c * 40) % 256);
        b.at(x, y, c) = static_cast<std::uint8_t>((y / 3 + c * 20) % 256);
      }
  int f = downscale_factor(512, 256);
  EXPECT_EQ(f, 2);
  double full = content_score(a, b);
  double small = content_score(downscale(a, f), downscale(b, f));
  EXPECT_NEAR(full, small, 2.0);
}
