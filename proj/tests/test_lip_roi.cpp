#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "avlabel/lip_roi.hpp"

using namespace avlabel;

namespace {

// Non-lip points scattered over the face; lip points on the given square.
LandmarkSet Square(double x0, double y0, double x1, double y1) {
  LandmarkSet lm;
  lm.points.assign(kNumLandmarks, Point2{0.5, 0.5});
  for (int i = 0; i < kNumLandmarks; ++i) lm.points[i] = {(i % 17) / 16.0, (i % 13) / 12.0};
  int k = 0;
  for (int idx : kLipKeypoints) {
    switch (k++ % 4) {
      case 0: lm.points[idx] = {x0, y0}; break;
      case 1: lm.points[idx] = {x1, y0}; break;
      case 2: lm.points[idx] = {x0, y1}; break;
      default: lm.points[idx] = {x1, y1}; break;
    }
  }
  return lm;
}

void ExpectBox(const BBox &b, double x, double y, double w, double h) {
  EXPECT_NEAR(b.x, x, 1e-9);
  EXPECT_NEAR(b.y, y, 1e-9);
  EXPECT_NEAR(b.w, w, 1e-9);
  EXPECT_NEAR(b.h, h, 1e-9);
}

// Independent nearest-neighbour reference: centre of destination pixel
// mapped into the source, truncated.
Image ReferenceResize(const Image &src, int w, int h) {
  Image out(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int sx = std::min(src.width - 1, static_cast<int>((x + 0.5) * src.width / w));
      int sy = std::min(src.height - 1, static_cast<int>((y + 0.5) * src.height / h));
      out.at(x, y) = src.at(sx, sy);
    }
  return out;
}

}  // namespace

TEST(LipKeypoints, Deduplicated) {
  std::vector<int> v(kLipKeypoints.begin(), kLipKeypoints.end());
  std::sort(v.begin(), v.end());
  EXPECT_EQ(std::adjacent_find(v.begin(), v.end()), v.end());
  EXPECT_EQ(std::count(kLipKeypoints.begin(), kLipKeypoints.end(), 291), 1);
  for (int k : kLipKeypoints) EXPECT_LT(k, kNumLandmarks);
}

TEST(LipBox, Examples) {
  auto lm = Square(0.4, 0.6, 0.6, 0.8);
  ExpectBox(lip_box(lm, {0, 0, 100, 100}, 0.1), 38, 58, 24, 24);
  ExpectBox(lip_box(lm, {0, 0, 100, 100}, 0.0), 40, 60, 20, 20);
}

TEST(LipBox, ClampsLandmarksAndFrame) {
  auto lm = Square(-0.5, 0.6, 0.6, 1.7);
  ExpectBox(lip_box(lm, {0, 0, 100, 100}, 0.0), 0, 60, 60, 40);
  auto clamped = lip_box(lm, {0, 0, 100, 100}, 0.1, FrameSize{64, 90});
  ExpectBox(clamped, 0, 54, 64, 36);
}

TEST(LipBox, TranslationEquivariant) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.05, 0.45), d(-500, 500);
  for (int i = 0; i < 100; ++i) {
    double a = u(rng), b = u(rng);
    auto lm = Square(a, b, a + u(rng), b + u(rng));
    BBox face{d(rng), d(rng), 80, 120};
    double dx = std::round(d(rng)), dy = std::round(d(rng));
    auto b0 = lip_box(lm, face, 0.1);
    auto b1 = lip_box(lm, BBox{face.x + dx, face.y + dy, face.w, face.h}, 0.1);
    EXPECT_NEAR(b1.x - b0.x, dx, 1e-9);
    EXPECT_NEAR(b1.y - b0.y, dy, 1e-9);
    EXPECT_NEAR(b1.w, b0.w, 1e-9);
    EXPECT_NEAR(b1.h, b0.h, 1e-9);
  }
}

TEST(LipBox, Errors) {
  auto flat = Square(0.4, 0.5, 0.6, 0.5);
  try {
    lip_box(flat, {0, 0, 100, 100}, 0.1, std::nullopt, 42);
    FAIL();
  } catch (const ArgumentError &e) {
    EXPECT_NE(std::string(e.what()).find("42"), std::string::npos);
  }
  LandmarkSet few;
  few.points.resize(10);
  EXPECT_THROW(lip_box(few, {0, 0, 100, 100}), ArgumentError);
}

TEST(ExtractLipCrops, KnownRectangle) {
  Image frame(320, 240, 3, 10);
  // Bright block exactly where the lip box lands.
  for (int y = 158; y < 182; ++y)
    for (int x = 138; x < 162; ++x)
      for (int c = 0; c < 3; ++c) frame.at(x, y, c) = static_cast<std::uint8_t>(200 + (x + y) % 50);
  Track t;
  t.track_id = 7;
  t.history = {{3, BBox{100, 100, 100, 100}}};
  std::map<std::int64_t, LandmarkSet> lm{{3, Square(0.4, 0.6, 0.6, 0.8)}};
  auto res = extract_lip_crops(t, lm, [&](std::int64_t) { return std::optional<Image>(frame); });
  ASSERT_EQ(res.crops.size(), 1u);
  EXPECT_TRUE(res.errors.empty());
  const auto &c = res.crops[0];
  EXPECT_FALSE(c.missing);
  ExpectBox(c.box, 138, 158, 24, 24);
  Image patch = to_gray(crop_image(frame, PixelRect{138, 158, 162, 182}));
  EXPECT_EQ(c.image, ReferenceResize(patch, 96, 96));
  EXPECT_EQ(c.image.width, 96);
  EXPECT_EQ(c.image.channels, 1);
}

TEST(ExtractLipCrops, ResizeMatchesReferenceOnOddSizes) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> px(0, 255), sz(1, 300);
  for (int i = 0; i < 50; ++i) {
    Image src(sz(rng), sz(rng), 1);
    for (auto &v : src.data) v = px(rng);
    EXPECT_EQ(resize_nearest(src, 96, 96), ReferenceResize(src, 96, 96));
  }
}

TEST(ExtractLipCrops, MissingAndFailures) {
  Track t;
  t.track_id = 1;
  for (int f = 0; f < 4; ++f) t.history.push_back({f, BBox{10, 10, 50, 50}});
  Image frame(80, 80, 3, 90);
  auto src = [&](std::int64_t f) { return f == 2 ? std::nullopt : std::optional<Image>(frame); };
  auto none = extract_lip_crops(t, {}, src);
  ASSERT_EQ(none.crops.size(), 4u);
  for (auto &c : none.crops) {
    EXPECT_TRUE(c.missing);
    EXPECT_EQ(c.image, Image(96, 96, 1));
  }
  std::map<std::int64_t, LandmarkSet> lm;
  for (int f = 0; f < 4; ++f) lm[f] = Square(0.3, 0.5, 0.7, 0.8);
  auto res = extract_lip_crops(t, lm, src);
  ASSERT_EQ(res.errors.size(), 1u);
  EXPECT_EQ(res.errors[0].frame_index, 2);
  EXPECT_TRUE(res.crops[2].missing);
  // Constant face: identical crops.
  EXPECT_EQ(res.crops[0].image, res.crops[1].image);
  EXPECT_EQ(res.crops[0].image, res.crops[3].image);
}

TEST(LipArchive, RoundTrip) {
  auto dir = std::filesystem::temp_directory_path() / "avlabel_lip_test";
  std::filesystem::remove_all(dir);
  std::mt19937_64 rng(5);
  std::vector<LipCropResult> tracks(2);
  for (int t = 0; t < 2; ++t)
    for (int f = 0; f < 3; ++f) {
      LipCrop c;
      c.track_id = t + 1;
      c.frame_index = f;
      c.image = Image(96, 96, 1);
      for (auto &v : c.image.data) v = rng() & 0xff;
      c.missing = f == 1;
      tracks[t].crops.push_back(c);
    }
  write_lip_archive(dir, tracks);
  auto idx = read_lip_index(dir);
  ASSERT_EQ(idx.size(), 6u);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto &c = tracks[i / 3].crops[i % 3];
    EXPECT_EQ(idx[i].track_id, c.track_id);
    EXPECT_EQ(idx[i].frame_index, c.frame_index);
    EXPECT_EQ(idx[i].missing, c.missing);
    EXPECT_EQ(read_lip_crop(dir, idx[i]), c.image);
  }
  std::filesystem::remove_all(dir);
}
