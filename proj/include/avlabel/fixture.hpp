// avlabel/fixture.hpp

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

// Synthetic corpus with planted shots, faces and speaker turns, plus mock
// worker sidecars keyed by the hashes of the clips the pipeline will cut.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "avlabel/annotation.hpp"
#include "avlabel/config.hpp"
#include "avlabel/corruption.hpp"
#include "avlabel/hashing.hpp"
#include "avlabel/lip_roi.hpp"
#include "avlabel/media.hpp"
#include "avlabel/mock_worker.hpp"
#include "avlabel/pipeline.hpp"
#include "avlabel/protocol.hpp"

namespace avlabel {

struct FixtureOptions {
  std::filesystem::path out;
  std::filesystem::path worker;  // mock worker executable
  std::uint64_t seed = 7;
  int sources = 3;
  double fps = 2.0;
  int width = 64;
  int height = 36;
  int sample_rate = 8000;
  double shift_ms = 200.0;        // planted recipe shift for both backends
  bool gate_fail_clip = false;    // first labeled clip of source 0 gets ovrl 2.0
  bool short_source = false;      // one extra 120 s source
};

struct FixtureClip {
  std::string clip_id;
  std::string item_id;
  double duration = 0.0;
  bool labeled = false;  // long enough and passes the gate
  std::string truth;     // workspace-independent path of the planted RTTM
};

struct FixtureInfo {
  std::vector<std::filesystem::path> sources;
  std::vector<FixtureClip> clips;
  std::filesystem::path config;
};

namespace detail {

inline double Uniform(std::mt19937_64 &rng, double lo, double hi) {
  return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double Quantize(double t) { return std::round(t * 100.0) / 100.0; }

// Turn-taking conversation: each turn overlaps at most its neighbours, and
// turns, gaps and overlaps last at least a second.
inline Annotation Conversation(const std::string &id, double duration, std::mt19937_64 &rng) {
  int n_spk = 2 + static_cast<int>(rng() % 2);
  std::vector<SpeechTurn> turns;
  double t = Quantize(Uniform(rng, 0.5, 1.5));
  int prev = -1;
  for (;;) {
    double len = Quantize(Uniform(rng, 4.0, 7.0));
    if (t + len > duration - 0.5) break;
    int spk = prev < 0 ? 0 : (prev + 1 + static_cast<int>(rng() % (n_spk - 1))) % n_spk;
    turns.push_back({id, 1, t, len, "spk" + std::to_string(spk)});
    prev = spk;
    double end = t + len;
    t = Quantize(rng() % 10 < 3 ? end - Uniform(rng, 1.0, 1.5) : end + Uniform(rng, 1.0, 2.0));
  }
  return Annotation(id, turns);
}

struct ShotColor {
  std::uint8_t r, g, b;
};

inline ShotColor Palette(std::size_t shot) {
  static const ShotColor kColors[] = {{220, 30, 30}, {20, 90, 30},   {60, 80, 230},
                                      {110, 100, 10}, {210, 40, 200}, {10, 80, 90}};
  return kColors[shot % 6];
}

inline Image ShotFrame(const FixtureOptions &o, std::size_t shot, std::int64_t local) {
  Image img(o.width, o.height, 3);
  ShotColor c = Palette(shot);
  for (int y = 0; y < o.height; ++y)
    for (int x = 0; x < o.width; ++x) {
      img.at(x, y, 0) = c.r;
      img.at(x, y, 1) = c.g;
      img.at(x, y, 2) = c.b;
    }
  // A small bright square drifting across the frame.
  int sx = static_cast<int>((local * 2) % (o.width - 6)), sy = o.height / 2;
  for (int y = sy; y < sy + 6; ++y)
    for (int x = sx; x < sx + 6; ++x)
      for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = 250;
  return img;
}

inline json LandmarkPoints(double open) {
  json pts = json::array();
  std::vector<std::pair<double, double>> p(kNumLandmarks);
  for (int k = 0; k < kNumLandmarks; ++k) {
    double a = 2.0 * M_PI * k / kNumLandmarks;
    p[k] = {0.5 + 0.35 * std::cos(7 * a), 0.45 + 0.35 * std::sin(5 * a)};
  }
  for (std::size_t i = 0; i < kLipKeypoints.size(); ++i) {
    double a = 2.0 * M_PI * static_cast<double>(i) / kLipKeypoints.size();
    p[kLipKeypoints[i]] = {0.5 + 0.2 * std::cos(a), 0.75 + (0.05 + open) * std::sin(a)};
  }
  for (const auto &[x, y] : p) pts.push_back({std::round(x * 100) / 100, std::round(y * 100) / 100});
  return pts;
}

}  // namespace detail

// Writes media/, fixtures/, truth/, config.json and the two relabel configs
// (mock shift 400 ms and 100 ms, sharing workspace_relabel/).
inline FixtureInfo build_fixture(const FixtureOptions &o) {
  namespace fs = std::filesystem;
  fs::create_directories(o.out / "media");
  fs::create_directories(o.out / "fixtures");
  fs::create_directories(o.out / "truth");
  fs::path scratch = o.out / ".scratch";
  fs::remove_all(scratch);
  fs::create_directories(scratch);

  std::mt19937_64 rng(o.seed);
  BuiltinMediaTool tool;
  ShotConfig shot_cfg;
  const double min_clip = 10.0;
  FixtureInfo info;

  std::vector<double> durations = {200.0, 190.0, 186.0, 195.0, 188.0};
  int count = o.sources + (o.short_source ? 1 : 0);
  for (int s = 0; s < count; ++s) {
    bool is_short = o.short_source && s == o.sources;
    double dur = is_short ? 120.0 : durations[static_cast<std::size_t>(s) % durations.size()];
    auto total = static_cast<std::int64_t>(std::llround(dur * o.fps));

    // Shot lengths in frames: 20-60 s, one 8 s shot in second place.
    std::vector<std::int64_t> lens;
    std::int64_t left = total;
    for (;;) {
      std::int64_t len = lens.size() == 1 ? static_cast<std::int64_t>(8 * o.fps)
                                          : static_cast<std::int64_t>(std::llround(detail::Uniform(rng, 20, 60) * o.fps));
      if (left - len < static_cast<std::int64_t>(20 * o.fps)) {
        lens.push_back(left);
        break;
      }
      lens.push_back(len);
      left -= len;
    }
    std::vector<Image> frames;
    std::vector<std::int64_t> planted;
    for (std::size_t k = 0; k < lens.size(); ++k) {
      if (k) planted.push_back(static_cast<std::int64_t>(frames.size()));
      for (std::int64_t i = 0; i < lens[k]; ++i) frames.push_back(detail::ShotFrame(o, k, i));
    }
    std::vector<std::int16_t> samples(static_cast<std::size_t>(std::llround(dur * o.sample_rate)));
    for (auto &v : samples) v = static_cast<std::int16_t>(static_cast<int>(rng() % 2001) - 1000);
    AvrHeader h{o.width, o.height, o.fps, total, o.sample_rate, static_cast<std::int64_t>(samples.size())};
    fs::path src = o.out / "media" / ("src_" + std::to_string(s) + ".avr");
    write_avr(src, h, frames, samples);
    info.sources.push_back(fs::absolute(src));
    if (is_short) continue;

    ShotResult shots = detect_shots(tool, src, shot_cfg);
    std::vector<std::int64_t> found;
    for (const auto &b : shots.boundaries) found.push_back(b.frame_index);
    if (found != planted) throw InternalError("fixture: planted shots not recovered for " + src.string());

    const std::string item_id = sha256_file(src);
    auto clips = cut_clips(item_id, shots.boundaries, total, o.fps);
    bool gate_fail_pending = o.gate_fail_clip && s == 0;
    for (std::size_t i = 0; i < clips.size(); ++i) {
      const Clip &clip = clips[i];
      FixtureClip fc;
      fc.clip_id = clip_id_for(item_id, i);
      fc.item_id = item_id;
      fc.duration = clip.duration();
      if (clip.duration() < min_clip) {
        info.clips.push_back(fc);
        continue;
      }
      fs::path video = scratch / (fc.clip_id + ".avr"), audio = scratch / (fc.clip_id + ".wav");
      tool.cut(src, clip, video);
      tool.extract_audio(video, audio);
      const std::int64_t n = clip.end_frame - clip.start_frame;

      // Two faces, left and right, with a few missed detections.
      std::map<std::int64_t, std::vector<Detection>> faces;
      for (std::int64_t f = 0; f < n; ++f) {
        auto &dets = faces[f];
        double drift = 0.5 * std::sin(0.2 * static_cast<double>(f));
        if (f % 17 != 5) dets.push_back({f, BBox{6 + drift, 6, 16, 20}, 0.98, std::vector<double>{1.0, 0.0}});
        if (f % 23 != 11) dets.push_back({f, BBox{40 - drift, 8, 16, 20}, 0.95, std::vector<double>{0.0, 1.0}});
      }
      auto tracks = track_faces(faces, n, TrackerParams{});
      json lm = json::array();
      json sync_tracks = json::array();
      for (const auto &t : tracks) {
        for (const auto &p : t.history)
          lm.push_back({{"frame_index", p.frame_index},
                        {"track_id", t.track_id},
                        {"points", detail::LandmarkPoints(0.02 * static_cast<double>(p.frame_index % 4))}});
        sync_tracks.push_back({{"track_id", t.track_id},
                               {"offset", static_cast<int>(rng() % 5) - 2},
                               {"confidence", std::round(detail::Uniform(rng, 3.0, 8.0) * 100) / 100}});
      }
      json video_fx{{"face_detect", face_detect_to_json(faces)},
                    {"landmarks", {{"landmarks", lm}}},
                    {"av_sync", {{"offset", sync_tracks.empty() ? 0 : sync_tracks[0]["offset"].get<int>()},
                                 {"confidence", sync_tracks.empty() ? 0.0 : sync_tracks[0]["confidence"].get<double>()},
                                 {"per_track", sync_tracks}}},
                    {"video_quality", {{"score", std::round(detail::Uniform(rng, 65, 90) * 100) / 100}}}};

      Annotation truth = detail::Conversation(fc.clip_id, fc.duration, rng);
      std::string truth_text = emit_rttm(truth);
      CorruptionRecipe audio_r{o.shift_ms, 0.4, 1, 0, rng()};
      CorruptionRecipe av_r{o.shift_ms, 0.3, 0, 0, rng()};
      double ovrl = std::round(detail::Uniform(rng, 3.2, 4.0) * 100) / 100;
      if (gate_fail_pending) {
        ovrl = 2.0;
        gate_fail_pending = false;
      } else {
        fc.labeled = true;
      }
      json audio_fx{{"audio_quality", {{"sig", 3.8}, {"bak", 4.0}, {"ovrl", ovrl}}},
                    {"diarize_audio", {{"rttm", truth_text}, {"corruption", recipe_to_json(audio_r)}}},
                    {"diarize_av", {{"rttm", truth_text}, {"corruption", recipe_to_json(av_r)}}}};
      write_file_atomic(o.out / "fixtures" / (sha256_file(video) + ".json"), video_fx.dump() + "\n");
      write_file_atomic(o.out / "fixtures" / (sha256_file(audio) + ".json"), audio_fx.dump() + "\n");
      fc.truth = (fs::absolute(o.out) / "truth" / (fc.clip_id + ".rttm")).string();
      write_file_atomic(fc.truth, truth_text);
      fs::remove(video);
      fs::remove(audio);
      info.clips.push_back(fc);
    }
  }
  fs::remove_all(scratch);

  auto config = [&](const std::string &workspace, std::optional<int> shift) {
    std::vector<std::string> argv = {fs::absolute(o.worker).string(), "--fixtures",
                                     fs::absolute(o.out / "fixtures").string()};
    if (shift) {
      argv.push_back("--shift-ms");
      argv.push_back(std::to_string(*shift));
    }
    json tasks = json::object();
    for (const char *t : {"face_detect", "landmarks", "audio_quality", "video_quality", "av_sync", "diarize_audio",
                          "diarize_av"})
      tasks[t] = "mock";
    return json{{"schema_version", kConfigSchemaVersion},
                {"workspace", workspace},
                {"media_tool", "builtin"},
                {"workers", {{"mock", {{"argv", argv}}}}},
                {"tasks", tasks},
                {"search_terms", {{"scenarios", {"interview", "debate"}}, {"languages", {"en", "zh"}}}},
                {"churn", {{"collar", 0.0}, {"threshold", 0.1}}}};
  };
  info.config = fs::absolute(o.out / "config.json");
  write_file_atomic(info.config, config("workspace", std::nullopt).dump(1) + "\n");
  write_file_atomic(o.out / "config_shift400.json", config("workspace_relabel", 400).dump(1) + "\n");
  write_file_atomic(o.out / "config_shift100.json", config("workspace_relabel", 100).dump(1) + "\n");

  json summary{{"sources", json::array()}, {"clips", json::array()}};
  for (const auto &s : info.sources) summary["sources"].push_back(s.string());
  for (const auto &c : info.clips)
    summary["clips"].push_back({{"clip_id", c.clip_id}, {"item_id", c.item_id}, {"duration", c.duration},
                                {"labeled", c.labeled}, {"truth", c.truth}});
  write_file_atomic(o.out / "fixture.json", summary.dump(1) + "\n");
  return info;
}

}  // namespace avlabel
