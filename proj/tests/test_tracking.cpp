#include <gtest/gtest.h>

#include <random>

#include "avlabel/tracking.hpp"
#include "oracles/kalman_oracle.hpp"

using namespace avlabel;

namespace {

oracle::KState ToOracle(const KalmanState &s) {
  oracle::KState o;
  for (int i = 0; i < 8; ++i) {
    o.mean[i] = s.mean(i);
    for (int j = 0; j < 8; ++j) o.cov[i][j] = s.covariance(i, j);
  }
  return o;
}

double MaxDiff(const KalmanState &s, const oracle::KState &o) {
  double d = 0;
  for (int i = 0; i < 8; ++i) {
    d = std::max(d, std::abs(s.mean(i) - o.mean[i]));
    for (int j = 0; j < 8; ++j) d = std::max(d, std::abs(s.covariance(i, j) - o.cov[i][j]));
  }
  return d;
}

Detection Det(std::int64_t f, double x, double y, double w = 40, double h = 40,
              std::optional<std::vector<double>> emb = std::nullopt) {
  return Detection{f, BBox{x, y, w, h}, 0.9, std::move(emb)};
}

}  // namespace

TEST(Iou, Examples) {
  BBox a{0, 0, 2, 2}, b{1, 1, 2, 2}, c{5, 5, 1, 1};
  EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
  EXPECT_DOUBLE_EQ(iou(a, c), 0.0);
  EXPECT_DOUBLE_EQ(iou(a, b), 1.0 / 7.0);
  EXPECT_DOUBLE_EQ(iou(a, b), iou(b, a));
}

TEST(Kalman, PredictExamples) {
  KalmanFilter kf;
  auto s = kf.initiate({0, 0, 20, 40});
  auto p = kf.predict(s);
  EXPECT_EQ(p.mean, s.mean);
  EXPECT_GT(p.covariance.trace(), s.covariance.trace());
  s.mean(0) = 10;
  s.mean(4) = 2;
  EXPECT_DOUBLE_EQ(kf.predict(s).mean(0), 12.0);
}

TEST(Kalman, ZeroInnovationUpdate) {
  KalmanFilter kf;
  auto s = kf.predict(kf.initiate({10, 20, 30, 60}));
  auto u = kf.update(s, to_bbox(s.mean));
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(u.mean(i), s.mean(i), 1e-9);
  EXPECT_LT(u.covariance.trace(), s.covariance.trace());
}

TEST(Kalman, MatchesMatrixOracle) {
  KalmanFilter kf;
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> pos(0, 640), size(20, 200), jitter(-8, 8);
  KalmanState s;
  double worst = 0;
  for (int cycle = 0; cycle < 10000; ++cycle) {
    if (cycle % 100 == 0) {
      s = kf.initiate({pos(rng), pos(rng), size(rng), size(rng)});
      s.mean(4) = jitter(rng);
      s.mean(5) = jitter(rng);
    }
    auto p = kf.predict(s);
    auto op = oracle::Predict(ToOracle(s));
    worst = std::max(worst, MaxDiff(p, op));

    BBox pred = to_bbox(p.mean);
    BBox z{pred.x + jitter(rng), pred.y + jitter(rng), std::max(1.0, pred.w + jitter(rng)),
           std::max(1.0, pred.h + jitter(rng))};
    auto u = kf.update(p, z);
    Vec4 zz = to_xyah(z);
    auto ou = oracle::Update(ToOracle(p), {zz(0), zz(1), zz(2), zz(3)});
    worst = std::max(worst, MaxDiff(u, ou));

    EXPECT_LT(u.covariance.trace(), p.covariance.trace());
    Eigen::SelfAdjointEigenSolver<Mat8> es(u.covariance, Eigen::EigenvaluesOnly);
    ASSERT_GE(es.eigenvalues().minCoeff(), -1e-9) << "cycle " << cycle;
    ASSERT_EQ((u.covariance - u.covariance.transpose()).cwiseAbs().maxCoeff(), 0.0);
    s = u;
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Associate, Examples) {
  KalmanFilter kf;
  Track t;
  t.state = kf.initiate({0, 0, 40, 40});
  auto r = associate({t}, {Det(0, 0, 0)});
  ASSERT_EQ(r.matches.size(), 1u);
  r = associate({t}, {Det(0, 500, 500)});
  EXPECT_TRUE(r.matches.empty());
  EXPECT_EQ(r.unmatched_detections.size(), 1u);
  EXPECT_EQ(r.unmatched_tracks.size(), 1u);
  EXPECT_THROW(associate({t}, {}, 0.3, 1.5), ArgumentError);
}

TEST(Associate, AppearanceKeepsCrossedIdentities) {
  KalmanFilter kf;
  Track a, b;
  a.state = kf.initiate({100, 0, 40, 40});
  a.embedding = std::vector<double>{1, 0};
  b.state = kf.initiate({104, 0, 40, 40});
  b.embedding = std::vector<double>{0, 1};
  // Detections whose boxes favour the swapped pairing.
  auto r = associate({a, b}, {Det(0, 103, 0, 40, 40, std::vector<double>{1, 0}),
                              Det(0, 101, 0, 40, 40, std::vector<double>{0, 1})});
  ASSERT_EQ(r.matches.size(), 2u);
  for (auto [ti, di] : r.matches) EXPECT_EQ(ti, di);
  // Without embeddings the boxes win.
  a.embedding.reset();
  b.embedding.reset();
  r = associate({a, b}, {Det(0, 103, 0), Det(0, 101, 0)});
  for (auto [ti, di] : r.matches) EXPECT_NE(ti, di);
}

TEST(Tracker, StationaryTarget) {
  Tracker tr;
  for (int f = 0; f < 10; ++f) tr.step(f, {Det(f, 50, 50)});
  auto all = tr.all_tracks();
  ASSERT_EQ(all.size(), 1u);
  EXPECT_EQ(all[0].status, TrackStatus::kConfirmed);
  EXPECT_EQ(all[0].history.size(), 10u);
}

TEST(Tracker, ConfirmationNeedsThreeHits) {
  Tracker tr;
  tr.step(0, {Det(0, 50, 50)});
  tr.step(1, {Det(1, 50, 50)});
  EXPECT_EQ(tr.tracks()[0].status, TrackStatus::kTentative);
  tr.step(2, {Det(2, 50, 50)});
  EXPECT_EQ(tr.tracks()[0].status, TrackStatus::kConfirmed);
}

TEST(Tracker, TentativeMissDeletes) {
  Tracker tr;
  tr.step(0, {Det(0, 50, 50)});
  tr.step(1, {});
  EXPECT_TRUE(tr.tracks().empty());
  EXPECT_EQ(tr.all_tracks()[0].status, TrackStatus::kDeleted);
}

TEST(Tracker, MaxAge) {
  Tracker tr;
  for (int f = 0; f < 5; ++f) tr.step(f, {Det(f, 50, 50)});
  for (int f = 5; f < 35; ++f) tr.step(f, {});
  ASSERT_EQ(tr.tracks().size(), 1u);  // 30 frames without update
  tr.step(35, {});
  EXPECT_TRUE(tr.tracks().empty());
  // Returning target gets a fresh id.
  tr.step(36, {Det(36, 50, 50)});
  EXPECT_EQ(tr.tracks()[0].track_id, 2);
}

TEST(Tracker, NonMonotonicFrames) {
  Tracker tr;
  tr.step(5, {});
  EXPECT_THROW(tr.step(5, {}), ArgumentError);
  EXPECT_THROW(tr.step(3, {}), ArgumentError);
  EXPECT_THROW(tr.step(6, {Det(7, 0, 0)}), ArgumentError);
}

TEST(Tracker, ParallelTargets) {
  Tracker tr;
  for (int f = 0; f < 50; ++f) tr.step(f, {Det(f, 10 + 2 * f, 20), Det(f, 10 + 2 * f, 200)});
  auto all = tr.all_tracks();
  ASSERT_EQ(all.size(), 2u);
  for (const auto &t : all) {
    EXPECT_EQ(t.history.size(), 50u);
    for (const auto &p : t.history) EXPECT_EQ(p.box.y, t.history[0].box.y);
  }
}

TEST(Tracker, CrossingTargetsKeepIds) {
  Tracker tr;
  std::vector<double> ea{1, 0}, eb{0, 1};
  for (int f = 0; f < 50; ++f) {
    double xa = 4.0 * f, xb = 196.0 - 4.0 * f;
    // Present B first half the time so detection order carries no identity.
    std::vector<Detection> d{Det(f, xa, 100, 40, 40, ea), Det(f, xb, 102, 40, 40, eb)};
    if (f % 2) std::swap(d[0], d[1]);
    tr.step(f, d);
  }
  auto all = tr.all_tracks();
  ASSERT_EQ(all.size(), 2u);
  for (const auto &t : all) {
    ASSERT_EQ(t.history.size(), 50u);
    bool is_a = t.history[0].box.x == 0.0;
    for (const auto &p : t.history) {
      double expect = is_a ? 4.0 * p.frame_index : 196.0 - 4.0 * p.frame_index;
      EXPECT_EQ(p.box.x, expect) << "track " << t.track_id << " frame " << p.frame_index;
    }
  }
}

TEST(Tracker, Deterministic) {
  auto run = [] {
    Tracker tr;
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> j(-3, 3);
    for (int f = 0; f < 60; ++f)
      tr.step(f, {Det(f, 100 + j(rng), 100 + j(rng)), Det(f, 300 + j(rng), 100 + j(rng))});
    std::vector<std::pair<int, std::size_t>> sig;
    for (auto &t : tr.all_tracks()) sig.emplace_back(t.track_id, t.history.size());
    return sig;
  };
  EXPECT_EQ(run(), run());
}
