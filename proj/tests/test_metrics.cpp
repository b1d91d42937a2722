#include <gtest/gtest.h>

#include <random>

#include "avlabel/metrics.hpp"
#include "oracles/random_annotation.hpp"
#include "oracles/timeline_oracle.hpp"

using namespace avlabel;

namespace {

SpeechTurn Turn(double onset, double dur, const std::string &spk) {
  SpeechTurn t;
  t.recording_id = "r";
  t.onset = onset;
  t.duration = dur;
  t.speaker = spk;
  return t;
}

}  // namespace

TEST(OptimalMapping, IdenticalIsIdentity) {
  Annotation a("r", {Turn(0, 2, "A"), Turn(2, 3, "B"), Turn(4, 1, "C")});
  auto m = optimal_mapping(a, a);
  EXPECT_EQ(m, (std::map<std::string, std::string>{{"A", "A"}, {"B", "B"}, {"C", "C"}}));
}

TEST(OptimalMapping, UnmatchedSpeaker) {
  Annotation ref("r", {Turn(0, 10, "A")});
  Annotation hyp("r", {Turn(0, 9, "X"), Turn(9, 1, "Y")});
  auto m = optimal_mapping(ref, hyp);
  EXPECT_EQ(m.at("X"), "A");
  EXPECT_EQ(m.at("Y"), kUnmapped);
}

TEST(OptimalMapping, SwappedLabels) {
  Annotation ref("r", {Turn(0, 5, "A"), Turn(5, 5, "B")});
  Annotation hyp("r", {Turn(0, 5, "B"), Turn(5, 5, "A")});
  auto m = optimal_mapping(ref, hyp);
  EXPECT_EQ(m.at("A"), "B");
  EXPECT_EQ(m.at("B"), "A");
}

TEST(Der, IdenticalIsExactlyZero) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    auto a = oracle::RandomAnnotation(rng, "r", 4, 20, 60000);
    for (double c : {0.0, 0.25, 1.0}) {
      auto rep = der(a, a, {c, true});
      EXPECT_EQ(rep.der, 0.0);
      EXPECT_EQ(rep.error(), 0.0);
    }
  }
}

TEST(Der, EmptyHypothesisIsAllMissed) {
  Annotation ref("r", {Turn(0, 2, "A"), Turn(1, 3, "B")});
  auto rep = der(ref, Annotation("r"), {0.0, true});
  EXPECT_EQ(rep.missed, rep.reference_total);
  EXPECT_EQ(rep.der, 1.0);
}

TEST(Der, DegenerateReference) {
  auto both = der(Annotation("r"), Annotation("r"));
  EXPECT_EQ(both.der, 0.0);
  EXPECT_FALSE(both.degenerate);
  auto fa = der(Annotation("r"), Annotation("r", {Turn(0, 1, "A")}));
  EXPECT_TRUE(std::isinf(fa.der));
  EXPECT_TRUE(fa.degenerate);
  EXPECT_THROW(der(Annotation("r"), Annotation("r"), {-1.0, true}), ArgumentError);
}

TEST(Der, HandComputedComponents) {
  // ref A [0,4), B [2,6); hyp X [0,3), Y [3,6), Z [5,8)
  Annotation ref("r", {Turn(0, 4, "A"), Turn(2, 4, "B")});
  Annotation hyp("r", {Turn(0, 3, "X"), Turn(3, 3, "Y"), Turn(5, 3, "Z")});
  auto rep = der(ref, hyp, {0.0, true});
  // Regions: [0,2) A|X, [2,3) AB|X, [3,4) AB|Y, [4,5) B|Y, [5,6) B|YZ, [6,8) -|Z
  // X->A (3), Y->B (3). missed: [2,3)+[3,4) = 2. FA: [5,6) 1 + [6,8) 2 = 3.
  // confusion: none beyond counts.
  EXPECT_DOUBLE_EQ(rep.reference_total, 8.0);
  EXPECT_DOUBLE_EQ(rep.missed, 2.0);
  EXPECT_DOUBLE_EQ(rep.false_alarm, 3.0);
  EXPECT_DOUBLE_EQ(rep.confusion, 0.0);
  EXPECT_DOUBLE_EQ(rep.der, 5.0 / 8.0);
}

TEST(Der, MatchesDiscretizedOracle) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 200; ++i) {
    auto ref = oracle::RandomAnnotation(rng, "r", 4, 20, 60000, "ref");
    auto hyp = oracle::RandomAnnotation(rng, "r", 4, 20, 60000, "hyp");
    for (auto [collar, ov] : {std::pair{0.0, true}, std::pair{0.25, true}, std::pair{0.25, false}}) {
      auto rep = der(ref, hyp, {collar, ov});
      auto want = oracle::DiscretizedDer(ref, hyp, collar, ov);
      if (want.reference_total == 0) continue;
      ASSERT_NEAR(rep.der, want.der, 1e-6) << "case " << i << " collar " << collar;
      ASSERT_NEAR(rep.missed, want.missed, 1e-6);
      ASSERT_NEAR(rep.false_alarm, want.false_alarm, 1e-6);
      ASSERT_NEAR(rep.confusion, want.confusion, 1e-6);
      ASSERT_NEAR(rep.reference_total, want.reference_total, 1e-6);
    }
  }
}

TEST(Der, PermutationInvariance) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 100; ++i) {
    auto ref = oracle::RandomAnnotation(rng, "r", 4, 20, 30000, "ref");
    auto hyp = oracle::RandomAnnotation(rng, "r", 4, 20, 30000, "hyp");
    auto spk = hyp.speakers();
    auto perm = spk;
    std::shuffle(perm.begin(), perm.end(), rng);
    std::map<std::string, std::string> m;
    for (std::size_t k = 0; k < spk.size(); ++k) m[spk[k]] = perm[k];
    auto a = der(ref, hyp), b = der(ref, relabel(hyp, m));
    if (a.degenerate) {
      EXPECT_TRUE(b.degenerate);
      continue;
    }
    EXPECT_NEAR(a.der, b.der, 1e-12);
    EXPECT_NEAR(a.confusion, b.confusion, 1e-9);
  }
}

TEST(Der, CollarMonotonicity) {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 100; ++i) {
    auto ref = oracle::RandomAnnotation(rng, "r", 3, 15, 30000, "ref");
    auto hyp = oracle::RandomAnnotation(rng, "r", 3, 15, 30000, "hyp");
    double prev = std::numeric_limits<double>::infinity();
    for (double c : {0.0, 0.1, 0.25, 0.5, 1.0, 2.0}) {
      double e = der(ref, hyp, {c, true}).error();
      EXPECT_LE(e, prev + 1e-9);
      prev = e;
    }
  }
}
