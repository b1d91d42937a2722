#include <gtest/gtest.h>

#include <random>

#include "avlabel/corruption.hpp"
#include "avlabel/fusion.hpp"
#include "avlabel/metrics.hpp"
#include "oracles/random_annotation.hpp"
#include "oracles/timeline_oracle.hpp"

using namespace avlabel;

namespace {

SpeechTurn Turn(double onset, double dur, const std::string &spk, const std::string &rec = "r") {
  SpeechTurn t;
  t.recording_id = rec;
  t.onset = onset;
  t.duration = dur;
  t.speaker = spk;
  return t;
}

Hypothesis Hyp(Annotation a, int rank = 1, double weight = 1.0) {
  return Hypothesis{"h", std::move(a), rank, weight};
}

Annotation Permute(const Annotation &a, std::mt19937_64 &rng, const std::string &prefix) {
  auto spk = a.speakers();
  auto perm = spk;
  std::shuffle(perm.begin(), perm.end(), rng);
  std::map<std::string, std::string> m;
  for (std::size_t k = 0; k < spk.size(); ++k) m[spk[k]] = prefix + perm[k];
  return relabel(a, m);
}

}  // namespace

TEST(ComputeWeights, Examples) {
  Annotation a("r", {Turn(0, 1, "A")});
  auto w = compute_weights({Hyp(a, 1), Hyp(a, 1)});
  EXPECT_DOUBLE_EQ(w[0].weight, 0.5);
  EXPECT_DOUBLE_EQ(w[1].weight, 0.5);
  w = compute_weights({Hyp(a, 1), Hyp(a, 2)}, {0.5});
  // (1, 1/sqrt 2) / (1 + 1/sqrt 2)
  EXPECT_NEAR(w[0].weight, 0.5858, 5e-5);
  EXPECT_NEAR(w[1].weight, 0.4142, 5e-5);
  w = compute_weights({Hyp(a, 1), Hyp(a, 5), Hyp(a, 9)}, {0.0});
  for (auto &h : w) EXPECT_DOUBLE_EQ(h.weight, 1.0 / 3.0);
  EXPECT_THROW(compute_weights({}), ArgumentError);
}

TEST(MapLabels, SingleUnchanged) {
  Annotation a("r", {Turn(0, 1, "A"), Turn(1, 2, "B")});
  auto out = map_labels({Hyp(a)});
  EXPECT_EQ(out[0].annotation, a);
}

TEST(MapLabels, PermutedCopiesAlign) {
  Annotation a("r", {Turn(0, 2, "A"), Turn(2, 2, "B"), Turn(3, 4, "C")});
  Annotation b = relabel(a, {{"A", "q"}, {"B", "w"}, {"C", "e"}});
  auto out = map_labels({Hyp(a), Hyp(b)});
  EXPECT_EQ(out[1].annotation, a);
}

TEST(MapLabels, FreshLabelForUnmatched) {
  Annotation h1("r", {Turn(0, 5, "A")});
  Annotation h2("r", {Turn(0, 4, "X"), Turn(6, 2, "Y")});
  auto out = map_labels({Hyp(h1), Hyp(h2)});
  auto spk = out[1].annotation.speakers();
  ASSERT_EQ(spk.size(), 2u);
  EXPECT_EQ(out[1].annotation.turns()[0].speaker, "A");
  EXPECT_NE(out[1].annotation.turns()[1].speaker, "A");
}

TEST(MapLabels, FreshLabelAvoidsCollision) {
  Annotation h1("r", {Turn(0, 5, "A"), Turn(5, 5, "B")});
  Annotation h2("r", {Turn(0, 5, "B"), Turn(20, 2, "A")});
  auto out = map_labels({Hyp(h1), Hyp(h2)});
  // h2's B overlaps h1's A; h2's A overlaps nothing and must not reuse a label.
  auto spk = out[1].annotation.speakers();
  EXPECT_EQ(out[1].annotation.turns()[0].speaker, "A");
  EXPECT_NE(out[1].annotation.turns()[1].speaker, "A");
  EXPECT_NE(out[1].annotation.turns()[1].speaker, "B");
}

TEST(MapLabels, MixedRecordingsRejected) {
  Annotation a("r1", {Turn(0, 1, "A", "r1")}), b("r2", {Turn(0, 1, "A", "r2")});
  EXPECT_THROW(map_labels({Hyp(a), Hyp(b)}), ArgumentError);
}

TEST(Vote, UnanimousEqualsInput) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 50; ++i) {
    auto a = oracle::RandomAnnotation(rng, "r", 4, 20, 60000);
    auto out = vote(std::vector<Hypothesis>{Hyp(a), Hyp(a), Hyp(a)});
    EXPECT_EQ(emit_rttm(out), emit_rttm(a));
    EXPECT_EQ(der(a, out, {0.0, true}).der, 0.0);
  }
}

TEST(Vote, TwoOfThreeMajority) {
  Annotation on("r", {Turn(0, 1, "A")});
  Annotation off("r");
  auto out = vote(std::vector<Hypothesis>{Hyp(on), Hyp(on), Hyp(off)});
  ASSERT_EQ(out.turns().size(), 1u);
  EXPECT_EQ(out.turns()[0].speaker, "A");
  EXPECT_DOUBLE_EQ(out.turns()[0].end(), 1.0);
  auto none = vote(std::vector<Hypothesis>{Hyp(on), Hyp(off), Hyp(off)});
  EXPECT_TRUE(none.empty());
}

TEST(Vote, TieBreaksLexicographically) {
  Annotation a("r", {Turn(0, 1, "B")}), b("r", {Turn(0, 1, "A")});
  auto out = vote(std::vector<Hypothesis>{Hyp(a), Hyp(b)});
  ASSERT_EQ(out.turns().size(), 1u);
  EXPECT_EQ(out.turns()[0].speaker, "A");
}

TEST(Vote, EmptyInput) { EXPECT_TRUE(vote(std::vector<Hypothesis>{}).empty()); }

// 10 ms discretized oracle against the interval vote, with arbitrary weights.
TEST(Vote, MatchesDiscretizedOracle) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> wd(0.1, 3.0);
  for (int i = 0; i < 150; ++i) {
    std::vector<Annotation> anns;
    std::vector<Hypothesis> hyps;
    std::vector<double> w;
    int k = 2 + i % 3;
    for (int j = 0; j < k; ++j) {
      // 10 ms grid: scale a ms-grid annotation by 10.
      auto a = oracle::RandomAnnotation(rng, "r", 3, 12, 4000);
      std::vector<SpeechTurn> turns;
      for (auto t : a.turns()) {
        t.onset = std::round(t.onset * 1000) * 10 / 1000.0;
        t.duration = std::round(t.duration * 1000) * 10 / 1000.0;
        turns.push_back(t);
      }
      anns.emplace_back("r", turns);
      w.push_back(i % 2 ? wd(rng) : 1.0);
      hyps.push_back(Hyp(anns.back(), 1, w.back()));
    }
    auto got = vote(hyps);
    auto want = oracle::DiscretizedVote(anns, w, 0.01);
    auto g = oracle::Discretize(got, 0.01, want.n_ticks);
    ASSERT_TRUE(oracle::SameGrid(g, want)) << "case " << i;
  }
}

TEST(Vote, CountBoundedByMaxHypothesisCount) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 100; ++i) {
    std::vector<Hypothesis> hyps;
    for (int j = 0; j < 3; ++j) hyps.push_back(Hyp(oracle::RandomAnnotation(rng, "r", 4, 15, 20000)));
    auto out = vote(hyps);
    std::vector<const Annotation *> inputs;
    for (auto &h : hyps) inputs.push_back(&h.annotation);
    inputs.push_back(&out);
    auto seg = segment(inputs);
    for (std::size_t r = 0; r < seg.regions.size(); ++r) {
      if (seg.regions[r].length() < 1e-9) continue;  // float slivers at turn ends
      std::size_t mx = 0;
      for (int k = 0; k < 3; ++k) mx = std::max(mx, seg.active[k][r].size());
      ASSERT_LE(seg.active[3][r].size(), mx);
    }
  }
}

TEST(Vote, DominantWeightReproducesHypothesis) {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 50; ++i) {
    auto a = oracle::RandomAnnotation(rng, "r", 4, 20, 60000, "a");
    auto b = oracle::RandomAnnotation(rng, "r", 4, 20, 60000, "b");
    auto c = oracle::RandomAnnotation(rng, "r", 4, 20, 60000, "c");
    auto mapped = map_labels({Hyp(a), Hyp(b), Hyp(c)});
    mapped[0].weight = 1e6;
    mapped[1].weight = 1;
    mapped[2].weight = 1;
    auto out = vote(mapped);
    EXPECT_LT(der(a, out, {0.0, true}).der, 1e-9);
  }
}

TEST(Fuse, SingleInputIsIdentity) {
  std::mt19937_64 rng(4);
  auto a = oracle::RandomAnnotation(rng, "r", 4, 20, 60000);
  EXPECT_EQ(emit_rttm(fuse({Hyp(a)})), emit_rttm(a));
}

TEST(Fuse, MajorityRecoversTruth) {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 40; ++i) {
    auto truth = oracle::RandomConversation(rng, "r", 2 + i % 3, 60000, "t");
    CorruptionRecipe heavy{400, 0.5, 3, 0, static_cast<std::uint64_t>(i)};
    auto bad = relabel(corrupt(truth, heavy), [&] {
      std::map<std::string, std::string> m;
      for (auto &s : corrupt(truth, heavy).speakers()) m[s] = "z" + s;
      return m;
    }());
    auto out = fuse({Hyp(truth), Hyp(bad), Hyp(truth)});
    EXPECT_EQ(der(truth, out, {0.0, true}).der, 0.0) << "case " << i;
  }
}

TEST(Fuse, LabelPermutationEquivariance) {
  std::mt19937_64 rng(17);
  auto a = oracle::RandomAnnotation(rng, "r", 4, 20, 60000, "a");
  auto b = oracle::RandomAnnotation(rng, "r", 4, 20, 60000, "b");
  auto base = fuse({Hyp(a, 1), Hyp(b, 2)});
  for (int i = 0; i < 20; ++i) {
    auto out = fuse({Hyp(Permute(a, rng, "p")), Hyp(Permute(b, rng, "q"), 2)});
    EXPECT_EQ(der(base, out, {0.0, true}).der, 0.0);
  }
}

TEST(Fuse, Deterministic) {
  std::mt19937_64 rng(5);
  auto a = oracle::RandomAnnotation(rng, "r", 4, 20, 60000, "a");
  auto b = oracle::RandomAnnotation(rng, "r", 4, 20, 60000, "b");
  EXPECT_EQ(emit_rttm(fuse({Hyp(a), Hyp(b, 2)})), emit_rttm(fuse({Hyp(a), Hyp(b, 2)})));
}
