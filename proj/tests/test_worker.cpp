#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <thread>

#include "avlabel/conformance.hpp"
#include "avlabel/corruption.hpp"
#include "avlabel/hashing.hpp"
#include "avlabel/metrics.hpp"
#include "avlabel/mock_worker.hpp"
#include "avlabel/worker_client.hpp"

using namespace avlabel;
namespace fs = std::filesystem;

namespace {

const char *kTruth =
    "SPEAKER w 1 0.000 4.000 <NA> <NA> A <NA> <NA>\n"
    "SPEAKER w 1 5.000 3.000 <NA> <NA> B <NA> <NA>\n"
    "SPEAKER w 1 9.000 4.000 <NA> <NA> A <NA> <NA>\n"
    "SPEAKER w 1 14.000 2.500 <NA> <NA> B <NA> <NA>\n";

class WorkerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("avlabel_worker_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_ / "media");
    fs::create_directories(root_ / "fixtures");
    for (int i = 0; i < 10; ++i) {
      auto rel = "media/m" + std::to_string(i) + ".wav";
      write_file_atomic(root_ / rel, "audio bytes " + std::to_string(i));
      json fx;
      fx["audio_quality"] = {{"sig", 3.0}, {"bak", 3.5}, {"ovrl", i * 0.5}};
      fx["diarize_av"] = {{"rttm", kTruth}};
      fx["diarize_audio"] = {{"rttm", kTruth}, {"corruption", recipe_to_json({200, 1.0, 0, 0, 7})}};
      write_file_atomic(root_ / "fixtures" / (sha256_file(root_ / rel) + ".json"), fx.dump());
    }
    write_file_atomic(root_ / "media/orphan.wav", "no sidecar");
  }
  void TearDown() override { fs::remove_all(root_); }

  WorkerSpec Spec(std::vector<std::string> extra = {}) {
    WorkerSpec s;
    s.name = "mock";
    s.argv = {AVLABEL_MOCK_WORKER};
    for (auto &e : extra) s.argv.push_back(e);
    s.tasks = {"audio_quality", "diarize_audio"};
    s.handshake_timeout_s = 10;
    s.request_timeout_s = 10;
    return s;
  }

  fs::path root_;
};

}  // namespace

TEST_F(WorkerTest, HandshakeDeclaresAllTasks) {
  WorkerClient w(Spec(), root_);
  w.start();
  EXPECT_EQ(w.declared_tasks(), all_task_names());
}

TEST_F(WorkerTest, SpawnFailure) {
  auto s = Spec();
  s.argv = {"/nonexistent/avlabel-worker"};
  WorkerClient w(s, root_);
  EXPECT_THROW(w.start(), WorkerUnavailable);
}

TEST_F(WorkerTest, VersionMismatch) {
  WorkerClient w(Spec({"--version", "99"}), root_);
  try {
    w.start();
    FAIL();
  } catch (const WorkerUnavailable &e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST_F(WorkerTest, MissingDeclaredTask) {
  auto s = Spec();
  s.tasks.push_back("teleport");
  WorkerClient w(s, root_);
  EXPECT_THROW(w.start(), WorkerUnavailable);
}

TEST_F(WorkerTest, AudioQualityFromSidecar) {
  WorkerClient w(Spec(), root_);
  w.start();
  auto r = w.request("audio_quality", {"media/m4.wav"});
  ASSERT_TRUE(r.ok);
  EXPECT_EQ(parse_audio_quality(r.payload).ovrl, 2.0);
  auto miss = w.request("audio_quality", {"media/orphan.wav"});
  EXPECT_FALSE(miss.ok);
  EXPECT_NE(miss.error->find("no fixture"), std::string::npos);
  EXPECT_THROW(w.request("audio_quality", {"../x.wav"}), ArgumentError);
}

TEST_F(WorkerTest, DiarizationCorruption) {
  WorkerClient w(Spec(), root_);
  w.start();
  auto truth = parse_rttm(kTruth)[0];
  auto av = parse_rttm(parse_rttm_payload(w.request("diarize_av", {"media/m0.wav"}).payload))[0];
  EXPECT_EQ(der(truth, av, {0.0, true}).der, 0.0);
  auto audio_text = parse_rttm_payload(w.request("diarize_audio", {"media/m0.wav"}).payload);
  auto audio = parse_rttm(audio_text)[0];
  EXPECT_GT(der(truth, audio, {0.0, true}).der, 0.0);
  EXPECT_EQ(audio, corrupt(truth, {200, 1.0, 0, 0, 7}));
  // Bit-deterministic.
  EXPECT_EQ(parse_rttm_payload(w.request("diarize_audio", {"media/m0.wav"}).payload), audio_text);
}

TEST_F(WorkerTest, ShiftOverride) {
  WorkerClient w(Spec({"--shift-ms", "0"}), root_);
  w.start();
  auto truth = parse_rttm(kTruth)[0];
  auto audio = parse_rttm(parse_rttm_payload(w.request("diarize_audio", {"media/m0.wav"}).payload))[0];
  EXPECT_EQ(der(truth, audio, {0.0, true}).der, 0.0);
}

TEST_F(WorkerTest, RespawnAfterDeath) {
  auto marker = root_ / "died.marker";
  WorkerClient w(Spec({"--die-once", marker.string()}), root_);
  w.start();
  auto r = w.request("audio_quality", {"media/m2.wav"});
  EXPECT_TRUE(r.ok);
  EXPECT_TRUE(fs::exists(marker));
  EXPECT_EQ(w.spawn_count(), 2);
}

TEST_F(WorkerTest, GarbageRecyclesWorker) {
  WorkerClient w(Spec({"--garbage-once", (root_ / "garbage.marker").string()}), root_);
  w.start();
  auto r = w.request("audio_quality", {"media/m2.wav"});
  EXPECT_TRUE(r.ok);
  EXPECT_EQ(w.spawn_count(), 2);
}

TEST_F(WorkerTest, MismatchedIdTimesOut) {
  WorkerClient w(Spec({"--bad-request-id"}), root_);
  w.start();
  auto t0 = std::chrono::steady_clock::now();
  EXPECT_THROW(w.request("audio_quality", {"media/m2.wav"}, json::object(), 0.5), RequestFailed);
  double took = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  // Two timeouts plus one respawn and handshake.
  EXPECT_LT(took, 2 * 0.5 + 5.0);
  EXPECT_GE(took, 2 * 0.5);
}

TEST_F(WorkerTest, ConcurrentRequestsCorrelate) {
  WorkerClient w(Spec({"--delay-ms-max", "40"}), root_);
  w.start();
  std::vector<std::thread> threads;
  std::vector<double> got(100, -1);
  for (int i = 0; i < 100; ++i)
    threads.emplace_back([&, i] {
      auto r = w.request("audio_quality", {"media/m" + std::to_string(i % 10) + ".wav"});
      if (r.ok) got[i] = parse_audio_quality(r.payload).ovrl;
    });
  for (auto &t : threads) t.join();
  for (int i = 0; i < 100; ++i) EXPECT_EQ(got[i], (i % 10) * 0.5) << i;
  EXPECT_EQ(w.spawn_count(), 1);
}

TEST_F(WorkerTest, ConformancePassesForMock) {
  ConformanceRunner run({AVLABEL_MOCK_WORKER}, root_, 10);
  auto rep = run.run();
  for (const auto &c : rep.checks) EXPECT_TRUE(c.passed) << c.name << ": " << c.detail;
  EXPECT_TRUE(rep.passed());
  EXPECT_EQ(rep.declared_tasks.size(), 8u);
}

TEST_F(WorkerTest, ConformanceFailsForNonWorker) {
  ConformanceRunner run({"cat"}, root_, 1);
  auto rep = run.run();
  EXPECT_FALSE(rep.passed());
  ConformanceRunner wrong({AVLABEL_MOCK_WORKER, "--version", "2"}, root_, 2);
  EXPECT_FALSE(wrong.run().passed());
}
