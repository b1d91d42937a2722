// avlabel/pipeline.hpp

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

// Stage graph driver: acquire -> shots -> cut per item, then per clip
// extract -> quality -> track -> sync -> lips -> diarize -> fuse -> emit.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <future>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "avlabel/annotation.hpp"
#include "avlabel/config.hpp"
#include "avlabel/errors.hpp"
#include "avlabel/fusion.hpp"
#include "avlabel/hashing.hpp"
#include "avlabel/lip_roi.hpp"
#include "avlabel/log.hpp"
#include "avlabel/manifest.hpp"
#include "avlabel/media.hpp"
#include "avlabel/metrics.hpp"
#include "avlabel/protocol.hpp"
#include "avlabel/quality_gate.hpp"
#include "avlabel/shot_detect.hpp"
#include "avlabel/subprocess.hpp"
#include "avlabel/tracking.hpp"
#include "avlabel/worker_client.hpp"

namespace avlabel {

namespace fs = std::filesystem;

inline constexpr int kFaultExitCode = 86;

// Reasons recorded on skipped stages.
inline constexpr const char *kSkipDuplicate = "duplicate";
inline constexpr const char *kSkipTooShort = "too_short";
inline constexpr const char *kSkipClipTooShort = "clip_too_short";
inline constexpr const char *kSkipGateFail = "gate_fail";

struct ShotResult {
  int downscale_factor = 1;
  std::vector<ShotBoundary> boundaries;
};

inline ShotResult detect_shots(MediaTool &tool, const fs::path &video, const ShotConfig &cfg) {
  ShotResult r;
  CutDetector det(cfg.threshold, cfg.min_scene_len);
  bool first = true;
  tool.for_each_frame(video, [&](std::int64_t i, const Image &rgb) {
    if (first) {
      r.downscale_factor = downscale_factor(rgb.width, cfg.max_width);
      first = false;
    }
    if (auto b = det.push(Frame{i, rgb_to_hsv(downscale(rgb, r.downscale_factor))})) r.boundaries.push_back(*b);
  });
  return r;
}

inline std::string clip_id_for(const std::string &item_id, std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "_c%03zu", index);
  return item_id.substr(0, 12) + buf;
}

// Confirmed tracks (hits >= n_init) over clip-local frames [0, frame_count).
inline std::vector<Track> track_faces(const std::map<std::int64_t, std::vector<Detection>> &faces,
                                      std::int64_t frame_count, const TrackerParams &params) {
  for (const auto &[f, d] : faces)
    if (f < 0 || f >= frame_count) throw ProtocolError("face detection for frame " + std::to_string(f) + " outside clip");
  Tracker tracker(params);
  static const std::vector<Detection> kNone;
  for (std::int64_t f = 0; f < frame_count; ++f) {
    auto it = faces.find(f);
    tracker.step(f, it == faces.end() ? kNone : it->second);
  }
  std::vector<Track> out;
  for (auto &t : tracker.all_tracks())
    if (t.hits >= params.n_init) out.push_back(std::move(t));
  return out;
}

inline json tracks_to_json(const std::vector<Track> &tracks) {
  json arr = json::array();
  for (const auto &t : tracks) {
    json frames = json::array();
    for (const auto &p : t.history)
      frames.push_back({{"frame_index", p.frame_index}, {"bbox", {p.box.x, p.box.y, p.box.w, p.box.h}}});
    arr.push_back({{"track_id", t.track_id}, {"hits", t.hits}, {"frames", frames}});
  }
  return json{{"tracks", arr}};
}

inline std::vector<Track> tracks_from_json(const json &j) {
  std::vector<Track> out;
  for (const auto &e : j.at("tracks")) {
    Track t;
    t.track_id = e.at("track_id");
    t.hits = e.at("hits");
    t.status = TrackStatus::kConfirmed;
    for (const auto &f : e.at("frames")) {
      const auto &b = f.at("bbox");
      t.history.push_back({f.at("frame_index"), BBox{b[0], b[1], b[2], b[3]}});
    }
    out.push_back(std::move(t));
  }
  return out;
}

// One recording per diarization payload; its id is replaced by the clip id.
inline Annotation single_recording(const std::string &rttm, const std::string &clip_id) {
  auto recs = parse_rttm(rttm);
  if (recs.empty()) return Annotation(clip_id);
  if (recs.size() > 1) throw ProtocolError("diarization output holds " + std::to_string(recs.size()) + " recordings");
  return recs.front().with_recording_id(clip_id);
}

// "failed", "skipped(<reason>)", "done" or "pending" for a whole entry.
inline std::string entry_state(const std::map<std::string, StageState> &stages,
                               const std::vector<std::string> &order) {
  for (const auto &s : order) {
    auto it = stages.find(s);
    if (it != stages.end() && it->second.status == StageStatus::kFailed) return "failed";
  }
  for (const auto &s : order) {
    auto it = stages.find(s);
    if (it != stages.end() && it->second.status == StageStatus::kSkipped) return it->second.label();
  }
  for (const auto &s : order) {
    auto it = stages.find(s);
    if (it == stages.end() || it->second.status != StageStatus::kDone) return "pending";
  }
  return "done";
}

struct RunSummary {
  bool noop = false;
  std::vector<std::string> executed;  // "<entry id>:<stage>", in completion order
  std::map<std::string, int> items;   // entry state -> count
  std::map<std::string, int> clips;
  int failed = 0;

  json to_json() const {
    return json{{"noop", noop}, {"executed", executed}, {"executed_count", executed.size()},
                {"items", items}, {"clips", clips}, {"failed", failed}};
  }
  std::string to_text() const {
    std::ostringstream os;
    if (noop) return "nothing selected\n";
    os << "stages executed: " << executed.size() << "\n";
    for (const auto &[k, n] : items) os << "items " << k << ": " << n << "\n";
    for (const auto &[k, n] : clips) os << "clips " << k << ": " << n << "\n";
    return os.str();
  }
};

struct IngestResult {
  std::string source;
  std::string item_id;
  std::string state;
};

struct ChurnItem {
  std::string clip_id;
  double der = 0.0;
};

struct ChurnReport {
  int iteration = 0;
  std::vector<ChurnItem> items;
  std::vector<std::pair<std::string, std::string>> skipped;  // clip id, reason
  double mean = 0.0;
  double median = 0.0;
  double threshold = 0.0;
  std::vector<std::string> above_threshold;

  void aggregate() {
    std::sort(items.begin(), items.end(), [](const auto &a, const auto &b) { return a.clip_id < b.clip_id; });
    std::sort(skipped.begin(), skipped.end());
    above_threshold.clear();
    mean = median = 0.0;
    if (items.empty()) return;
    std::vector<double> v;
    for (const auto &i : items) {
      v.push_back(i.der);
      if (i.der > threshold) above_threshold.push_back(i.clip_id);
    }
    double sum = 0.0;
    for (double d : v) sum += d;
    mean = sum / static_cast<double>(v.size());
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  }

  json to_json() const {
    json per = json::array(), sk = json::array();
    for (const auto &i : items) per.push_back({{"clip_id", i.clip_id}, {"der", i.der}});
    for (const auto &[c, r] : skipped) sk.push_back({{"clip_id", c}, {"reason", r}});
    return json{{"iteration", iteration}, {"items", per},      {"skipped", sk},
                {"mean", mean},           {"median", median},  {"threshold", threshold},
                {"above_threshold", above_threshold}};
  }
};

struct StatusSummary {
  bool has_run = false;
  int items = 0;
  int clips = 0;
  int duplicates = 0;
  std::map<std::string, std::map<std::string, int>> stage_counts;  // stage -> status -> count
  std::map<std::string, int> failures;                              // "stage: reason" -> count
  int gate_evaluated = 0;
  int gate_passed = 0;
  double labeled_seconds = 0.0;

  double gate_pass_rate() const { return gate_evaluated ? double(gate_passed) / gate_evaluated : 0.0; }
  double labeled_hours() const { return labeled_seconds / 3600.0; }

  json to_json() const {
    return json{{"has_run", has_run},
                {"items", items},
                {"clips", clips},
                {"duplicates", duplicates},
                {"stage_counts", stage_counts},
                {"failures", failures},
                {"gate_evaluated", gate_evaluated},
                {"gate_passed", gate_passed},
                {"gate_pass_rate", gate_pass_rate()},
                {"labeled_seconds", labeled_seconds},
                {"labeled_hours", labeled_hours()}};
  }

  std::string to_text() const {
    std::ostringstream os;
    if (!has_run) os << "no run\n";
    os << "items: " << items << "  clips: " << clips << "  duplicates: " << duplicates << "\n";
    for (const auto &[stage, counts] : stage_counts) {
      os << "  " << std::left << std::setw(8) << stage;
      for (const auto &[st, n] : counts) os << " " << st << "=" << n;
      os << "\n";
    }
    os << "failures:" << (failures.empty() ? " none" : "") << "\n";
    for (const auto &[k, n] : failures) os << "  " << n << "  " << k << "\n";
    os << std::fixed << std::setprecision(3) << "gate pass rate: " << gate_pass_rate() << " (" << gate_passed << "/"
       << gate_evaluated << ")\n"
       << "labeled hours: " << std::setprecision(4) << labeled_hours() << "\n";
    return os.str();
  }
};

inline StatusSummary status_of(const Manifest &m) {
  StatusSummary s;
  s.items = static_cast<int>(m.items.size());
  s.clips = static_cast<int>(m.clips.size());
  s.duplicates = static_cast<int>(m.duplicates.size());
  auto count = [&](const std::map<std::string, StageState> &stages) {
    for (const auto &[name, st] : stages) {
      s.stage_counts[name][to_string(st.status)] += 1;
      if (st.status == StageStatus::kFailed) s.failures[name + ": " + st.reason] += 1;
    }
  };
  for (const auto &[id, e] : m.items) count(e.stages);
  for (const auto &[id, c] : m.clips) {
    count(c.stages);
    if (c.verdict) {
      ++s.gate_evaluated;
      if (c.verdict->pass) ++s.gate_passed;
    }
    auto emit = c.stages.find("emit");
    if (emit != c.stages.end() && emit->second.status == StageStatus::kDone) s.labeled_seconds += c.duration();
  }
  return s;
}

inline StatusSummary status(const fs::path &workspace) {
  StatusSummary s;
  if (!ManifestStore::exists(workspace)) return s;
  ManifestStore store(workspace);
  s = status_of(store.snapshot());
  s.has_run = true;
  return s;
}

// Per-clip gate table plus aggregate pass rates.
inline json gate_report_json(const Manifest &m) {
  json rows = json::array();
  std::map<std::string, std::pair<int, int>> per_check;  // passed, evaluated
  int evaluated = 0, passed = 0;
  for (const auto &[id, c] : m.clips) {
    if (!c.verdict) continue;
    ++evaluated;
    if (c.verdict->pass) ++passed;
    json checks = json::object();
    for (const auto &r : c.verdict->reasons) {
      checks[r.check] = {{"measured", r.measured}, {"threshold", r.threshold}, {"passed", r.passed}, {"detail", r.detail}};
      if (r.detail == "not evaluated") continue;
      auto &pc = per_check[r.check];
      pc.second += 1;
      if (r.passed) pc.first += 1;
    }
    rows.push_back({{"clip_id", id}, {"item_id", c.item_id}, {"duration", c.duration()}, {"pass", c.verdict->pass},
                    {"failed", c.verdict->failed_checks()}, {"checks", checks}});
  }
  json rates = json::object();
  for (const auto &[k, v] : per_check) rates[k] = v.second ? double(v.first) / v.second : 0.0;
  return json{{"clips", rows},
              {"evaluated", evaluated},
              {"passed", passed},
              {"pass_rate", evaluated ? double(passed) / evaluated : 0.0},
              {"check_pass_rates", rates}};
}

inline std::string gate_report_text(const Manifest &m) {
  json j = gate_report_json(m);
  std::ostringstream os;
  os << std::left << std::setw(20) << "clip" << std::setw(9) << "ovrl" << std::setw(9) << "vqa" << std::setw(8)
     << "synced" << std::setw(10) << "src_dur" << std::setw(6) << "pass"
     << "failed\n";
  auto measured = [](const json &checks, const char *k) -> std::string {
    if (!checks.contains(k)) return "-";
    if (checks[k]["detail"] == "not evaluated") return "n/a";
    std::ostringstream v;
    v << std::fixed << std::setprecision(2) << checks[k]["measured"].get<double>();
    return v.str();
  };
  for (const auto &r : j["clips"]) {
    std::string failed;
    for (const auto &f : r["failed"]) failed += (failed.empty() ? "" : ",") + f.get<std::string>();
    os << std::left << std::setw(20) << r["clip_id"].get<std::string>() << std::setw(9)
       << measured(r["checks"], kCheckAudio) << std::setw(9) << measured(r["checks"], kCheckVideo) << std::setw(8)
       << measured(r["checks"], kCheckSync) << std::setw(10) << measured(r["checks"], kCheckDuration) << std::setw(6)
       << (r["pass"].get<bool>() ? "yes" : "no") << (failed.empty() ? "-" : failed) << "\n";
  }
  os << std::fixed << std::setprecision(3) << "pass rate: " << j["pass_rate"].get<double>() << " ("
     << j["passed"].get<int>() << "/" << j["evaluated"].get<int>() << ")\n";
  for (const auto &[k, v] : j["check_pass_rates"].items()) os << "  " << k << ": " << v.get<double>() << "\n";
  return os.str();
}

namespace detail {

inline void ParallelFor(std::size_t n, int threads, const std::function<void(std::size_t)> &fn) {
  std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n);
  if (k <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < k; ++t)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) fn(i);
    });
  for (auto &t : pool) t.join();
}

// AVLABEL_FAULT_AFTER=<stage>[:<n>] exits the process right after the n-th
// completion of <stage> has been logged.
class FaultHook {
 public:
  FaultHook() {
    const char *v = std::getenv("AVLABEL_FAULT_AFTER");
    if (!v || !*v) return;
    std::string s = v;
    auto colon = s.find(':');
    stage_ = s.substr(0, colon);
    if (colon != std::string::npos) n_ = std::max(1, std::atoi(s.c_str() + colon + 1));
  }
  void after(const std::string &stage) {
    if (stage_.empty() || stage != stage_) return;
    if (seen_.fetch_add(1) + 1 == n_) {
      log::warn("fault hook: exiting after ", stage);
      std::_Exit(kFaultExitCode);
    }
  }

 private:
  std::string stage_;
  int n_ = 1;
  std::atomic<int> seen_{0};
};

inline bool IsUrl(const std::string &s) { return s.find("://") != std::string::npos; }

inline std::string FormatSeconds(double s) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << s;
  return os.str();
}

}  // namespace detail

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg)
      : cfg_(std::move(cfg)), tool_(make_media_tool(cfg_.media_tool)), store_((fs::create_directories(cfg_.workspace), cfg_.workspace)) {}

  ~Pipeline() {
    std::lock_guard lk(workers_mu_);
    workers_.clear();
  }

  Pipeline(const Pipeline &) = delete;
  Pipeline &operator=(const Pipeline &) = delete;

  const PipelineConfig &config() const { return cfg_; }
  const fs::path &workspace() const { return cfg_.workspace; }
  ManifestStore &store() { return store_; }

  // Registers every source, then acquires the new ones.
  std::vector<IngestResult> ingest(const std::vector<std::string> &sources, const std::string &tag = "") {
    auto terms = cfg_.search_terms();
    if (!tag.empty() && !terms.empty() && std::find(terms.begin(), terms.end(), tag) == terms.end())
      throw ArgumentError("tag '" + tag + "' is not one of the configured search terms");
    std::vector<IngestResult> out;
    std::vector<std::string> fresh;
    for (const auto &src : sources) {
      IngestResult r;
      bool url = detail::IsUrl(src);
      r.source = url ? src : fs::absolute(src).lexically_normal().string();
      if (!url && !fs::is_regular_file(r.source)) {
        r.state = "error(source not found)";
        out.push_back(r);
        continue;
      }
      r.item_id = url ? sha256_hex("url:" + src) : sha256_file(r.source);
      auto m = store_.snapshot();
      const ItemEntry *same = nullptr;
      for (const auto &[id, e] : m.items)
        if (id == r.item_id || (!url && e.content_hash == r.item_id)) same = &e;
      if (same) {
        store_.add_duplicate({r.source, same->item_id, utc_now()});
        r.state = std::string("skipped(") + kSkipDuplicate + ")";
        out.push_back(r);
        continue;
      }
      ItemEntry e;
      e.item_id = r.item_id;
      e.source = r.source;
      e.tag = tag;
      for (const auto &s : kItemStages) e.stages[s] = StageState{StageStatus::kPending, "", utc_now()};
      store_.put_item(e);
      fresh.push_back(e.item_id);
      out.push_back(r);
    }
    RunSummary sum;
    detail::ParallelFor(fresh.size(), cfg_.concurrency,
                        [&](std::size_t i) { run_item_stages(fresh[i], sum, /*acquire_only=*/true); });
    for (auto &r : out)
      if (r.state.empty()) r.state = store_.item(r.item_id)->stages["acquire"].label();
    store_.compact();
    return out;
  }

  // A present but empty filter selects nothing. Filter entries match item id prefixes.
  RunSummary run(const std::optional<std::vector<std::string>> &filter = std::nullopt) {
    RunSummary sum;
    std::vector<std::string> ids;
    {
      auto m = store_.snapshot();
      for (const auto &[id, e] : m.items) {
        if (!filter) {
          ids.push_back(id);
          continue;
        }
        for (const auto &f : *filter)
          if (!f.empty() && id.compare(0, f.size(), f) == 0) {
            ids.push_back(id);
            break;
          }
      }
    }
    if (filter && ids.empty()) {
      sum.noop = true;
      return sum;
    }
    for (const auto &id : ids) verify_item(id);

    detail::ParallelFor(ids.size(), cfg_.concurrency, [&](std::size_t i) { run_item_stages(ids[i], sum, false); });

    std::vector<std::string> clips;
    for (const auto &id : ids) {
      auto e = store_.item(id);
      if (e->stages["cut"].status != StageStatus::kDone) continue;
      for (const auto &c : e->clips)
        if (store_.clip(c)) clips.push_back(c);
    }
    detail::ParallelFor(clips.size(), cfg_.concurrency, [&](std::size_t i) { run_clip_stages(clips[i], sum); });

    store_.compact();
    auto m = store_.snapshot();
    for (const auto &id : ids) {
      const auto &e = m.items.at(id);
      auto st = entry_state(e.stages, kItemStages);
      sum.items[st] += 1;
      if (st == "failed") ++sum.failed;
      for (const auto &cid : e.clips) {
        auto it = m.clips.find(cid);
        if (it == m.clips.end()) continue;
        auto cs = entry_state(it->second.stages, kClipStages);
        sum.clips[cs] += 1;
        if (cs == "failed") ++sum.failed;
      }
    }
    return sum;
  }

  RunSummary resume() {
    if (!ManifestStore::exists(cfg_.workspace)) throw ArgumentError("no run in " + cfg_.workspace.string());
    return run(std::nullopt);
  }

  // Re-runs diarize and fuse for every labeled clip with this pipeline's
  // workers and appends a label version.
  ChurnReport relabel(std::optional<int> iteration = std::nullopt) {
    ChurnReport rep;
    rep.threshold = cfg_.churn.threshold;
    auto m = store_.snapshot();
    std::vector<std::string> ids;
    for (const auto &[id, c] : m.clips) {
      if (c.label_versions.empty())
        rep.skipped.push_back({id, "no prior label version"});
      else
        ids.push_back(id);
    }
    std::mutex mu;
    int max_iter = iteration.value_or(0);
    detail::ParallelFor(ids.size(), cfg_.concurrency, [&](std::size_t i) {
      ClipEntry c = *store_.clip(ids[i]);
      const LabelVersion prev = c.label_versions.back();
      int k = iteration.value_or(prev.iteration + 1);
      try {
        if (k <= prev.iteration)
          throw ArgumentError("iteration " + std::to_string(k) + " is not after version " +
                              std::to_string(prev.iteration));
        if (sha256_file(ws(prev.rttm)) != prev.sha256) throw IoError("previous label version was modified");
        Annotation before = single_recording(read_file(ws(prev.rttm)), c.clip_id);
        std::string sub = clip_dir(c.clip_id) + "/iter" + std::to_string(k);
        fs::create_directories(ws(sub));
        Annotation after = diarize_and_fuse(c, sub);
        std::string rel = "labels/" + c.clip_id + ".iter" + std::to_string(k) + ".rttm";
        fs::create_directories(ws("labels"));
        write_file_atomic(ws(rel), emit_rttm(after));
        DerOptions opt;
        opt.collar = cfg_.churn.collar;
        double d = der(before, after, opt).der;
        c = store_.update_clip(c.clip_id, [&](ClipEntry &e) {
          e.label_versions.push_back({k, rel, sha256_file(ws(rel)), d});
        });
        std::lock_guard lk(mu);
        rep.items.push_back({c.clip_id, d});
        max_iter = std::max(max_iter, k);
      } catch (const std::exception &e) {
        std::lock_guard lk(mu);
        rep.skipped.push_back({c.clip_id, e.what()});
      }
    });
    rep.iteration = max_iter;
    rep.aggregate();
    if (!rep.items.empty()) {
      fs::create_directories(ws("reports"));
      write_file_atomic(ws("reports/churn_" + std::to_string(rep.iteration) + ".json"), rep.to_json().dump(1) + "\n");
    }
    store_.compact();
    return rep;
  }

 private:
  fs::path ws(const std::string &rel) const { return cfg_.workspace / rel; }
  static std::string clip_dir(const std::string &cid) { return "clips/" + cid; }
  std::string video_rel(const std::string &cid) const { return clip_dir(cid) + "/video" + tool_->clip_extension(); }
  static std::string audio_rel(const std::string &cid) { return clip_dir(cid) + "/audio.wav"; }

  Artifact record(const std::string &rel, const std::string &stage) const {
    return Artifact{rel, sha256_file(ws(rel)), stage};
  }

  void write_json(const std::string &rel, const json &j) const {
    fs::create_directories(ws(rel).parent_path());
    write_file_atomic(ws(rel), j.dump(1) + "\n");
  }

  json read_json(const std::string &rel) const {
    auto j = json::parse(read_file(ws(rel)), nullptr, false);
    if (j.is_discarded()) throw IoError(rel + ": not valid JSON");
    return j;
  }

  bool artifacts_ok(const std::map<std::string, Artifact> &arts, const std::string &stage) const {
    for (const auto &[name, a] : arts) {
      if (a.stage != stage) continue;
      std::error_code ec;
      if (!fs::is_regular_file(ws(a.path), ec)) return false;
      if (sha256_file(ws(a.path)) != a.sha256) {
        log::warn("artifact ", a.path, " changed; recomputing from ", stage);
        return false;
      }
    }
    return true;
  }

  static void demote(std::map<std::string, StageState> &stages, std::map<std::string, Artifact> &arts,
                     const std::vector<std::string> &order, std::size_t from) {
    for (std::size_t k = from; k < order.size(); ++k) {
      stages[order[k]] = StageState{StageStatus::kPending, "", utc_now()};
      for (auto it = arts.begin(); it != arts.end();)
        it = it->second.stage == order[k] ? arts.erase(it) : std::next(it);
    }
  }

  // Demotes the first done stage whose artifacts no longer match, and
  // everything downstream of it. "running" leftovers become pending.
  void verify_item(const std::string &id) {
    ItemEntry e = *store_.item(id);
    bool changed = false;
    for (auto &[name, st] : e.stages)
      if (st.status == StageStatus::kRunning) {
        st = StageState{StageStatus::kPending, "", utc_now()};
        changed = true;
      }
    std::optional<std::size_t> bad;
    for (std::size_t k = 0; k < kItemStages.size() && !bad; ++k) {
      const auto &s = kItemStages[k];
      if (e.stages[s].status != StageStatus::kDone) continue;
      bool ok = artifacts_ok(e.artifacts, s);
      if (s == "cut")
        for (const auto &cid : e.clips) {
          auto c = store_.clip(cid);
          if (!c || !artifacts_ok(c->artifacts, s)) ok = false;
        }
      if (!ok) bad = k;
    }
    if (bad) {
      demote(e.stages, e.artifacts, kItemStages, *bad);
      for (const auto &cid : e.clips)
        if (store_.clip(cid))
          store_.update_clip(cid, [&](ClipEntry &c) {
            demote(c.stages, c.artifacts, kClipStages, 0);
            c.artifacts.erase("video");
            c.verdict.reset();
            c.label_versions.clear();
          });
      changed = true;
    }
    if (changed) store_.put_item(e);
    if (bad) return;
    for (const auto &cid : e.clips) {
      auto c = store_.clip(cid);
      if (c) verify_clip(*c);
    }
  }

  void verify_clip(ClipEntry c) {
    bool changed = false;
    for (auto &[name, st] : c.stages)
      if (st.status == StageStatus::kRunning) {
        st = StageState{StageStatus::kPending, "", utc_now()};
        changed = true;
      }
    for (std::size_t k = 0; k < kClipStages.size(); ++k) {
      const auto &s = kClipStages[k];
      if (c.stages[s].status != StageStatus::kDone || artifacts_ok(c.artifacts, s)) continue;
      demote(c.stages, c.artifacts, kClipStages, k);
      changed = true;
      break;
    }
    if (changed) store_.put_clip(c);
  }

  void note_executed(RunSummary &sum, const std::string &id, const std::string &stage) {
    std::lock_guard lk(sum_mu_);
    sum.executed.push_back(id + ":" + stage);
  }

  void run_item_stages(const std::string &id, RunSummary &sum, bool acquire_only) {
    ItemEntry e = *store_.item(id);
    for (const auto &s : kItemStages) {
      if (acquire_only && s != "acquire") break;
      if (e.stages[s].terminal()) continue;
      e.stages[s] = StageState{StageStatus::kRunning, "", utc_now()};
      for (auto it = e.artifacts.begin(); it != e.artifacts.end();)
        it = it->second.stage == s ? e.artifacts.erase(it) : std::next(it);
      store_.put_item(e);
      auto t0 = std::chrono::steady_clock::now();
      try {
        if (s == "acquire")
          acquire(e);
        else if (s == "shots")
          shots(e);
        else
          cut(e);
        log::debug("item ", id.substr(0, 12), " ", s, " took ",
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), " s");
        if (e.stages[s].status == StageStatus::kRunning) e.stages[s] = StageState{StageStatus::kDone, "", utc_now()};
      } catch (const std::exception &ex) {
        log::error("item ", id.substr(0, 12), " stage ", s, " failed: ", ex.what());
        e.stages[s] = StageState{StageStatus::kFailed, ex.what(), utc_now()};
        store_.put_item(e);
        note_executed(sum, id, s);
        return;
      }
      store_.put_item(e);
      note_executed(sum, id, s);
      fault_.after(s);
    }
  }

  void run_clip_stages(const std::string &cid, RunSummary &sum) {
    ClipEntry c = *store_.clip(cid);
    for (const auto &s : kClipStages) {
      if (c.stages[s].terminal()) continue;
      c.stages[s] = StageState{StageStatus::kRunning, "", utc_now()};
      for (auto it = c.artifacts.begin(); it != c.artifacts.end();)
        it = it->second.stage == s ? c.artifacts.erase(it) : std::next(it);
      store_.put_clip(c);
      auto t0 = std::chrono::steady_clock::now();
      try {
        run_clip_stage(c, s);
        log::debug("clip ", cid, " ", s, " took ",
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), " s");
        if (c.stages[s].status == StageStatus::kRunning) c.stages[s] = StageState{StageStatus::kDone, "", utc_now()};
      } catch (const std::exception &ex) {
        log::error("clip ", cid, " stage ", s, " failed: ", ex.what());
        c.stages[s] = StageState{StageStatus::kFailed, ex.what(), utc_now()};
        store_.put_clip(c);
        note_executed(sum, cid, s);
        return;
      }
      store_.put_clip(c);
      note_executed(sum, cid, s);
      fault_.after(s);
    }
  }

  static void skip_after(std::map<std::string, StageState> &stages, const std::vector<std::string> &order,
                         const std::string &stage, const std::string &reason) {
    auto it = std::find(order.begin(), order.end(), stage);
    for (++it; it != order.end(); ++it) stages[*it] = StageState{StageStatus::kSkipped, reason, utc_now()};
  }

  // ---- item stages

  void acquire(ItemEntry &e) {
    bool url = detail::IsUrl(e.source);
    std::string ext = url ? fs::path(e.source.substr(e.source.find("://") + 3)).extension().string()
                          : fs::path(e.source).extension().string();
    if (ext.empty() || ext.size() > 6) ext = ".mp4";
    std::string rel = "sources/" + e.item_id + ext;
    fs::create_directories(ws("sources"));
    if (url)
      download(e.source, ws(rel));
    else
      fs::copy_file(e.source, ws(rel), fs::copy_options::overwrite_existing);
    std::string hash = sha256_file(ws(rel));
    {
      std::lock_guard lk(dedup_mu_);
      auto m = store_.snapshot();
      for (const auto &[id, other] : m.items) {
        if (id == e.item_id || other.content_hash != hash) continue;
        fs::remove(ws(rel));
        e.stages["acquire"] = StageState{StageStatus::kSkipped, kSkipDuplicate, utc_now()};
        skip_after(e.stages, kItemStages, "acquire", kSkipDuplicate);
        store_.add_duplicate({e.source, id, utc_now()});
        return;
      }
      e.content_hash = hash;
      e.artifacts["source"] = Artifact{rel, hash, "acquire"};
      store_.put_item(e);
    }
    MediaInfo info = tool_->probe(ws(rel));
    e.info["duration"] = info.duration;
    e.info["fps"] = info.fps;
    e.info["frame_count"] = info.frame_count;
    e.info["width"] = info.width;
    e.info["height"] = info.height;
    e.info["target_height"] = kTargetVideoHeight;
    if (info.duration < cfg_.gate.min_source_duration) skip_after(e.stages, kItemStages, "acquire", kSkipTooShort);
  }

  void download(const std::string &url, const fs::path &out) {
    if (cfg_.downloader.empty()) throw ConfigError("no downloader configured for " + url);
    fs::path tmp = out.string() + ".part";
    std::vector<std::string> argv;
    for (auto a : cfg_.downloader) {
      for (auto [tok, val] : {std::pair<std::string, std::string>{"{url}", url}, {"{out}", tmp.string()}})
        for (auto pos = a.find(tok); pos != std::string::npos; pos = a.find(tok)) a.replace(pos, tok.size(), val);
      argv.push_back(a);
    }
    fs::create_directories(ws("logs"));
    Subprocess p(ProcessSpec{argv, {}, {}, ws("logs/downloader.stderr")});
    p.close_stdin();
    LineReader r(p.stdout_fd());
    std::string line;
    while (r.read_line(line, std::chrono::hours(24)) == LineReader::Status::kLine) {
    }
    int rc = p.wait();
    if (rc != 0) throw IoError("downloader " + describe_wait_status(rc));
    if (!fs::is_regular_file(tmp)) throw IoError("downloader produced no file");
    fs::rename(tmp, out);
  }

  void shots(ItemEntry &e) {
    ShotResult r = detect_shots(*tool_, ws(e.artifacts.at("source").path), cfg_.shot);
    json b = json::array();
    for (const auto &x : r.boundaries) b.push_back({{"frame_index", x.frame_index}, {"score", x.score}});
    std::string rel = "items/" + e.item_id + "/shots.json";
    write_json(rel, json{{"threshold", cfg_.shot.threshold},
                         {"min_scene_len", cfg_.shot.min_scene_len},
                         {"downscale_factor", r.downscale_factor},
                         {"boundaries", b}});
    e.artifacts["shots"] = record(rel, "shots");
    e.info["downscale_factor"] = r.downscale_factor;
    e.info["shot_count"] = r.boundaries.size() + 1;
  }

  void cut(ItemEntry &e) {
    json shots = read_json(e.artifacts.at("shots").path);
    std::vector<ShotBoundary> bounds;
    for (const auto &b : shots.at("boundaries")) bounds.push_back({b.at("frame_index"), b.at("score")});
    auto clips = cut_clips(e.item_id, bounds, e.info.at("frame_count"), e.info.at("fps"));
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < clips.size(); ++i) {
      const Clip &clip = clips[i];
      ClipEntry c;
      c.clip_id = clip_id_for(e.item_id, i);
      c.item_id = e.item_id;
      c.start_frame = clip.start_frame;
      c.end_frame = clip.end_frame;
      c.fps = clip.fps;
      for (const auto &s : kClipStages) c.stages[s] = StageState{StageStatus::kPending, "", utc_now()};
      if (clip.duration() < cfg_.min_clip_seconds) {
        for (const auto &s : kClipStages) c.stages[s] = StageState{StageStatus::kSkipped, kSkipClipTooShort, utc_now()};
      } else {
        std::string rel = video_rel(c.clip_id);
        fs::create_directories(ws(rel).parent_path());
        tool_->cut(ws(e.artifacts.at("source").path), clip, ws(rel));
        c.artifacts["video"] = record(rel, "cut");
      }
      store_.put_clip(c);
      ids.push_back(c.clip_id);
    }
    for (const auto &old : e.clips)
      if (std::find(ids.begin(), ids.end(), old) == ids.end()) store_.remove_clip(old);
    e.clips = ids;
  }

  // ---- clip stages

  json call(Task task, std::vector<std::string> media, json params = json::object()) {
    WorkerClient &w = worker(task);
    ScoreResponse r = w.request(to_string(task), std::move(media), std::move(params));
    if (!r.ok) throw RequestFailed(to_string(task) + ": " + r.error.value_or("error"));
    return r.payload;
  }

  WorkerClient &worker(Task task) {
    const WorkerSpec &spec = cfg_.worker_for(task);
    std::lock_guard lk(workers_mu_);
    if (auto bad = unavailable_.find(spec.name); bad != unavailable_.end()) throw WorkerUnavailable(bad->second);
    auto it = workers_.find(spec.name);
    if (it != workers_.end()) return *it->second;
    WorkerSpec s = spec;
    fs::create_directories(ws("logs"));
    s.stderr_path = ws("logs/" + s.name + ".stderr");
    auto client = std::make_unique<WorkerClient>(s, cfg_.workspace);
    try {
      client->start();
    } catch (const std::exception &e) {
      unavailable_[spec.name] = e.what();
      throw WorkerUnavailable(e.what());
    }
    return *workers_.emplace(spec.name, std::move(client)).first->second;
  }

  double source_duration(const ClipEntry &c) const {
    auto e = store_.item(c.item_id);
    if (!e) throw InternalError("clip " + c.clip_id + " has no item");
    return e->info.at("duration");
  }

  void run_clip_stage(ClipEntry &c, const std::string &s) {
    const std::string dir = clip_dir(c.clip_id);
    const std::string video = video_rel(c.clip_id), audio = audio_rel(c.clip_id);
    if (s == "extract") {
      tool_->extract_audio(ws(video), ws(audio));
      c.artifacts["audio"] = record(audio, s);
    } else if (s == "quality") {
      AudioQuality aq = parse_audio_quality(call(Task::kAudioQuality, {audio}));
      VideoQuality vq = parse_video_quality(call(Task::kVideoQuality, {video}));
      json q{{"audio", {{"sig", aq.sig}, {"bak", aq.bak}, {"ovrl", aq.ovrl}}}, {"video", {{"score", vq.score}}}};
      write_json(dir + "/quality.json", q);
      c.artifacts["quality"] = record(dir + "/quality.json", s);
      c.info["quality"] = q;
      Verdict v = evaluate(aq, vq, std::nullopt, source_duration(c), cfg_.gate);
      c.verdict.reset();
      if (!v.passed_except(kCheckSync)) {
        c.verdict = v;
        skip_after(c.stages, kClipStages, s, kSkipGateFail);
      }
    } else if (s == "track") {
      auto faces = parse_face_detect(call(Task::kFaceDetect, {video}));
      write_json(dir + "/faces.json", face_detect_to_json(faces));
      auto tracks = track_faces(faces, c.end_frame - c.start_frame, cfg_.tracking);
      write_json(dir + "/tracks.json", tracks_to_json(tracks));
      c.artifacts["faces"] = record(dir + "/faces.json", s);
      c.artifacts["tracks"] = record(dir + "/tracks.json", s);
      c.info["track_count"] = tracks.size();
    } else if (s == "sync") {
      json tj = read_json(dir + "/tracks.json");
      SyncResult sync;
      if (!tj.at("tracks").empty()) sync = parse_sync(call(Task::kAvSync, {video, audio, dir + "/tracks.json"}));
      write_json(dir + "/sync.json", sync_to_json(sync));
      c.artifacts["sync"] = record(dir + "/sync.json", s);
      json q = read_json(dir + "/quality.json");
      AudioQuality aq{q["audio"]["sig"], q["audio"]["bak"], q["audio"]["ovrl"]};
      VideoQuality vq{q["video"]["score"]};
      Verdict v = evaluate(aq, vq, sync, source_duration(c), cfg_.gate);
      c.verdict = v;
      if (!v.pass) skip_after(c.stages, kClipStages, s, kSkipGateFail);
    } else if (s == "lips") {
      json tj = read_json(dir + "/tracks.json");
      auto tracks = tracks_from_json(tj);
      std::map<int, std::map<std::int64_t, LandmarkSet>> by_track;
      if (!tracks.empty())
        for (auto &t : parse_landmarks(call(Task::kLandmarks, {video, dir + "/tracks.json"})))
          by_track[t.track_id][t.frame_index] = std::move(t.landmarks);
      std::optional<std::pair<std::int64_t, Image>> cache;
      FrameSource frames = [&](std::int64_t i) -> std::optional<Image> {
        if (cache && cache->first == i) return cache->second;
        auto img = tool_->read_frame(ws(video), i);
        if (img) cache.emplace(i, *img);
        return img;
      };
      std::vector<LipCropResult> results;
      std::size_t total = 0, missing = 0;
      for (const auto &t : tracks) {
        results.push_back(extract_lip_crops(t, by_track[t.track_id], frames, cfg_.lip_margin));
        for (const auto &cr : results.back().crops) {
          ++total;
          if (cr.missing) ++missing;
        }
        for (const auto &err : results.back().errors)
          log::warn("clip ", c.clip_id, " track ", t.track_id, " frame ", err.frame_index, ": ", err.message);
      }
      fs::remove_all(ws(dir + "/lips"));
      write_lip_archive(ws(dir + "/lips"), results);
      c.artifacts["lips/index.tsv"] = record(dir + "/lips/index.tsv", s);
      for (const auto &t : tracks) {
        std::string bin = dir + "/lips/track_" + std::to_string(t.track_id) + ".bin";
        if (fs::exists(ws(bin))) c.artifacts["lips/track_" + std::to_string(t.track_id) + ".bin"] = record(bin, s);
      }
      c.info["lip_crops"] = {{"total", total}, {"missing", missing}};
    } else if (s == "diarize") {
      diarize(c, dir);
      c.artifacts["diar_audio"] = record(dir + "/diar_audio.rttm", s);
      c.artifacts["diar_av"] = record(dir + "/diar_av.rttm", s);
    } else if (s == "fuse") {
      Annotation fused = fuse_dir(c, dir);
      write_file_atomic(ws(dir + "/fused.rttm"), emit_rttm(fused));
      c.artifacts["fused"] = record(dir + "/fused.rttm", s);
    } else if (s == "emit") {
      emit(c, dir);
    } else {
      throw InternalError("unknown stage " + s);
    }
  }

  // Both backends run concurrently.
  void diarize(const ClipEntry &c, const std::string &out_dir) {
    const std::string video = video_rel(c.clip_id), audio = audio_rel(c.clip_id);
    auto av = std::async(std::launch::async, [&] {
      return call(Task::kDiarizeAv, {audio, video, clip_dir(c.clip_id) + "/lips/index.tsv"});
    });
    json audio_payload;
    std::exception_ptr audio_err;
    try {
      audio_payload = call(Task::kDiarizeAudio, {audio});
    } catch (...) {
      audio_err = std::current_exception();
    }
    json av_payload = av.get();
    if (audio_err) std::rethrow_exception(audio_err);
    write_file_atomic(ws(out_dir + "/diar_audio.rttm"),
                      emit_rttm(single_recording(parse_rttm_payload(audio_payload), c.clip_id)));
    write_file_atomic(ws(out_dir + "/diar_av.rttm"),
                      emit_rttm(single_recording(parse_rttm_payload(av_payload), c.clip_id)));
  }

  Annotation fuse_dir(const ClipEntry &c, const std::string &in_dir) const {
    std::vector<Hypothesis> hyps;
    hyps.push_back({"diarize_av", single_recording(read_file(ws(in_dir + "/diar_av.rttm")), c.clip_id),
                    cfg_.ranks.at("diarize_av")});
    hyps.push_back({"diarize_audio", single_recording(read_file(ws(in_dir + "/diar_audio.rttm")), c.clip_id),
                    cfg_.ranks.at("diarize_audio")});
    return fuse(hyps, cfg_.fusion).with_recording_id(c.clip_id);
  }

  Annotation diarize_and_fuse(const ClipEntry &c, const std::string &out_dir) {
    diarize(c, out_dir);
    return fuse_dir(c, out_dir);
  }

  void emit(ClipEntry &c, const std::string &dir) {
    auto item = store_.item(c.item_id);
    std::string rttm = "labels/" + c.clip_id + ".rttm";
    std::string meta = "labels/" + c.clip_id + ".meta.json";
    fs::create_directories(ws("labels"));
    write_file_atomic(ws(rttm), read_file(ws(dir + "/fused.rttm")));
    json scores = c.info.value("quality", json::object());
    scores["sync"] = read_json(dir + "/sync.json");
    json m{{"clip_id", c.clip_id},
           {"item_id", c.item_id},
           {"source", item ? item->source : ""},
           {"tag", item ? item->tag : ""},
           {"start", detail::FormatSeconds(static_cast<double>(c.start_frame) / c.fps)},
           {"end", detail::FormatSeconds(static_cast<double>(c.end_frame) / c.fps)},
           {"duration", c.duration()},
           {"scores", scores},
           {"track_count", c.info.value("track_count", 0)},
           {"verdict", c.verdict ? to_json(*c.verdict) : json(nullptr)},
           {"ranks", cfg_.ranks},
           {"rttm", rttm}};
    write_json(meta, m);
    c.artifacts["label"] = record(rttm, "emit");
    c.artifacts["meta"] = record(meta, "emit");
    c.label_versions = {LabelVersion{0, rttm, c.artifacts["label"].sha256, std::nullopt}};
  }

  PipelineConfig cfg_;
  std::unique_ptr<MediaTool> tool_;
  ManifestStore store_;
  detail::FaultHook fault_;
  std::mutex sum_mu_;
  std::mutex dedup_mu_;
  std::mutex workers_mu_;
  std::map<std::string, std::unique_ptr<WorkerClient>> workers_;
  std::map<std::string, std::string> unavailable_;
};

}  // namespace avlabel
