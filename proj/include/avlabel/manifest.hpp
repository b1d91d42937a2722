// avlabel/manifest.hpp

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

// Crash-safe pipeline manifest: an append-only event log (manifest.log.jsonl)
// replayed over a compacted snapshot (manifest.json).

#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "avlabel/errors.hpp"
#include "avlabel/hashing.hpp"
#include "avlabel/quality_gate.hpp"

namespace avlabel {

using json = nlohmann::json;

enum class StageStatus { kPending, kRunning, kDone, kFailed, kSkipped };

inline const char *to_string(StageStatus s) {
  switch (s) {
    case StageStatus::kPending: return "pending";
    case StageStatus::kRunning: return "running";
    case StageStatus::kDone: return "done";
    case StageStatus::kFailed: return "failed";
    case StageStatus::kSkipped: return "skipped";
  }
  return "?";
}

inline StageStatus stage_status_from_string(const std::string &s) {
  for (auto v : {StageStatus::kPending, StageStatus::kRunning, StageStatus::kDone, StageStatus::kFailed,
                 StageStatus::kSkipped})
    if (s == to_string(v)) return v;
  throw IoError("unknown stage status '" + s + "'");
}

inline const std::vector<std::string> kItemStages = {"acquire", "shots", "cut"};
inline const std::vector<std::string> kClipStages = {"extract", "quality", "track", "sync",
                                                     "lips",    "diarize", "fuse",  "emit"};

inline std::string utc_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct StageState {
  StageStatus status = StageStatus::kPending;
  std::string reason;
  std::string at;

  bool terminal() const { return status == StageStatus::kDone || status == StageStatus::kSkipped; }
  // "done", "skipped(too_short)", "failed(track: no worker)".
  std::string label() const {
    std::string s = to_string(status);
    return reason.empty() ? s : s + "(" + reason + ")";
  }
};

struct Artifact {
  std::string path;  // workspace-relative
  std::string sha256;
  std::string stage;
};

struct LabelVersion {
  int iteration = 0;
  std::string rttm;  // workspace-relative
  std::string sha256;
  std::optional<double> der_vs_previous;
};

struct ItemEntry {
  std::string item_id;
  std::string source;
  std::string tag;
  std::string content_hash;
  std::map<std::string, StageState> stages;
  std::map<std::string, Artifact> artifacts;
  json info = json::object();
  std::vector<std::string> clips;
};

struct ClipEntry {
  std::string clip_id;
  std::string item_id;
  std::int64_t start_frame = 0;
  std::int64_t end_frame = 0;
  double fps = 0.0;
  std::map<std::string, StageState> stages;
  std::map<std::string, Artifact> artifacts;
  std::optional<Verdict> verdict;
  std::vector<LabelVersion> label_versions;
  json info = json::object();

  double duration() const { return fps > 0 ? static_cast<double>(end_frame - start_frame) / fps : 0.0; }
};

struct DuplicateEntry {
  std::string source;
  std::string duplicate_of;
  std::string at;
};

inline json to_json(const Verdict &v) {
  json reasons = json::array();
  for (const auto &r : v.reasons)
    reasons.push_back({{"check", r.check}, {"measured", r.measured}, {"threshold", r.threshold},
                       {"passed", r.passed}, {"detail", r.detail}});
  return json{{"pass", v.pass}, {"reasons", reasons}};
}

inline Verdict verdict_from_json(const json &j) {
  Verdict v;
  v.pass = j.at("pass");
  for (const auto &r : j.at("reasons"))
    v.reasons.push_back({r.at("check"), r.at("measured"), r.at("threshold"), r.at("passed"), r.value("detail", "")});
  return v;
}

namespace detail {

inline json StagesToJson(const std::map<std::string, StageState> &stages, bool timestamps) {
  json j = json::object();
  for (const auto &[k, s] : stages) {
    json e{{"status", to_string(s.status)}, {"reason", s.reason}};
    if (timestamps) e["at"] = s.at;
    j[k] = e;
  }
  return j;
}

inline std::map<std::string, StageState> StagesFromJson(const json &j) {
  std::map<std::string, StageState> out;
  for (const auto &[k, e] : j.items())
    out[k] = StageState{stage_status_from_string(e.at("status")), e.value("reason", ""), e.value("at", "")};
  return out;
}

inline json ArtifactsToJson(const std::map<std::string, Artifact> &a) {
  json j = json::object();
  for (const auto &[k, v] : a) j[k] = {{"path", v.path}, {"sha256", v.sha256}, {"stage", v.stage}};
  return j;
}

inline std::map<std::string, Artifact> ArtifactsFromJson(const json &j) {
  std::map<std::string, Artifact> out;
  for (const auto &[k, v] : j.items()) out[k] = Artifact{v.at("path"), v.at("sha256"), v.at("stage")};
  return out;
}

}  // namespace detail

inline json to_json(const ItemEntry &e, bool timestamps = true) {
  return json{{"item_id", e.item_id},
              {"source", e.source},
              {"tag", e.tag},
              {"content_hash", e.content_hash},
              {"stages", detail::StagesToJson(e.stages, timestamps)},
              {"artifacts", detail::ArtifactsToJson(e.artifacts)},
              {"info", e.info},
              {"clips", e.clips}};
}

inline ItemEntry item_from_json(const json &j) {
  ItemEntry e;
  e.item_id = j.at("item_id");
  e.source = j.at("source");
  e.tag = j.value("tag", "");
  e.content_hash = j.value("content_hash", "");
  e.stages = detail::StagesFromJson(j.at("stages"));
  e.artifacts = detail::ArtifactsFromJson(j.at("artifacts"));
  e.info = j.value("info", json::object());
  e.clips = j.value("clips", std::vector<std::string>{});
  return e;
}

inline json to_json(const ClipEntry &e, bool timestamps = true) {
  json versions = json::array();
  for (const auto &v : e.label_versions)
    versions.push_back({{"iteration", v.iteration},
                        {"rttm", v.rttm},
                        {"sha256", v.sha256},
                        {"der_vs_previous", v.der_vs_previous ? json(*v.der_vs_previous) : json(nullptr)}});
  return json{{"clip_id", e.clip_id},
              {"item_id", e.item_id},
              {"start_frame", e.start_frame},
              {"end_frame", e.end_frame},
              {"fps", e.fps},
              {"stages", detail::StagesToJson(e.stages, timestamps)},
              {"artifacts", detail::ArtifactsToJson(e.artifacts)},
              {"verdict", e.verdict ? to_json(*e.verdict) : json(nullptr)},
              {"label_versions", versions},
              {"info", e.info}};
}

inline ClipEntry clip_from_json(const json &j) {
  ClipEntry e;
  e.clip_id = j.at("clip_id");
  e.item_id = j.at("item_id");
  e.start_frame = j.at("start_frame");
  e.end_frame = j.at("end_frame");
  e.fps = j.at("fps");
  e.stages = detail::StagesFromJson(j.at("stages"));
  e.artifacts = detail::ArtifactsFromJson(j.at("artifacts"));
  if (j.contains("verdict") && !j["verdict"].is_null()) e.verdict = verdict_from_json(j["verdict"]);
  const json versions = j.value("label_versions", json::array());
  for (const auto &v : versions) {
    LabelVersion lv{v.at("iteration"), v.at("rttm"), v.value("sha256", ""), std::nullopt};
    if (v.contains("der_vs_previous") && !v["der_vs_previous"].is_null()) lv.der_vs_previous = v["der_vs_previous"];
    e.label_versions.push_back(lv);
  }
  e.info = j.value("info", json::object());
  return e;
}

struct Manifest {
  std::map<std::string, ItemEntry> items;
  std::map<std::string, ClipEntry> clips;
  std::vector<DuplicateEntry> duplicates;

  // Without timestamps, two manifests of equivalent runs compare equal.
  json to_json(bool timestamps = true) const {
    json items_j = json::object(), clips_j = json::object(), dups = json::array();
    for (const auto &[k, e] : items) items_j[k] = avlabel::to_json(e, timestamps);
    for (const auto &[k, e] : clips) clips_j[k] = avlabel::to_json(e, timestamps);
    for (const auto &d : duplicates) {
      json e{{"source", d.source}, {"duplicate_of", d.duplicate_of}, {"status", "skipped"}, {"reason", "duplicate"}};
      if (timestamps) e["at"] = d.at;
      dups.push_back(e);
    }
    return json{{"items", items_j}, {"clips", clips_j}, {"duplicates", dups}};
  }

  static Manifest from_json(const json &j) {
    Manifest m;
    const json items = j.value("items", json::object()), clips = j.value("clips", json::object()),
               dups = j.value("duplicates", json::array());
    for (const auto &[k, e] : items.items()) m.items[k] = item_from_json(e);
    for (const auto &[k, e] : clips.items()) m.clips[k] = clip_from_json(e);
    for (const auto &d : dups)
      m.duplicates.push_back({d.at("source"), d.at("duplicate_of"), d.value("at", "")});
    return m;
  }
};

// Single writer: every mutation is one durable log line, applied in memory
// under the same lock.
class ManifestStore {
 public:
  explicit ManifestStore(std::filesystem::path workspace) : ws_(std::move(workspace)) { load(); }
  ~ManifestStore() {
    if (log_fd_ >= 0) ::close(log_fd_);
  }
  ManifestStore(const ManifestStore &) = delete;
  ManifestStore &operator=(const ManifestStore &) = delete;

  static std::filesystem::path snapshot_path(const std::filesystem::path &ws) { return ws / "manifest.json"; }
  static std::filesystem::path log_path(const std::filesystem::path &ws) { return ws / "manifest.log.jsonl"; }
  static bool exists(const std::filesystem::path &ws) {
    return std::filesystem::exists(snapshot_path(ws)) || std::filesystem::exists(log_path(ws));
  }

  Manifest snapshot() const {
    std::lock_guard lk(mu_);
    return m_;
  }
  std::optional<ItemEntry> item(const std::string &id) const {
    std::lock_guard lk(mu_);
    auto it = m_.items.find(id);
    return it == m_.items.end() ? std::nullopt : std::optional<ItemEntry>(it->second);
  }
  std::optional<ClipEntry> clip(const std::string &id) const {
    std::lock_guard lk(mu_);
    auto it = m_.clips.find(id);
    return it == m_.clips.end() ? std::nullopt : std::optional<ClipEntry>(it->second);
  }
  std::int64_t last_seq() const {
    std::lock_guard lk(mu_);
    return seq_;
  }

  void put_item(const ItemEntry &e) { append("item", to_json(e)); }
  void put_clip(const ClipEntry &e) { append("clip", to_json(e)); }
  void remove_clip(const std::string &clip_id) { append("remove_clip", json{{"clip_id", clip_id}}); }
  void add_duplicate(const DuplicateEntry &d) {
    append("duplicate", json{{"source", d.source}, {"duplicate_of", d.duplicate_of}, {"at", d.at}});
  }

  template <typename F>
  ItemEntry update_item(const std::string &id, F &&fn) {
    std::lock_guard lk(mu_);
    auto it = m_.items.find(id);
    if (it == m_.items.end()) throw InternalError("no item " + id);
    ItemEntry e = it->second;
    fn(e);
    append_locked("item", to_json(e));
    return e;
  }

  template <typename F>
  ClipEntry update_clip(const std::string &id, F &&fn) {
    std::lock_guard lk(mu_);
    auto it = m_.clips.find(id);
    if (it == m_.clips.end()) throw InternalError("no clip " + id);
    ClipEntry e = it->second;
    fn(e);
    append_locked("clip", to_json(e));
    return e;
  }

  // Writes the snapshot atomically, then truncates the log.
  void compact() {
    std::lock_guard lk(mu_);
    json snap = m_.to_json(true);
    snap["schema_version"] = 1;
    snap["last_seq"] = seq_;
    write_file_atomic(snapshot_path(ws_), snap.dump(1) + "\n");
    if (log_fd_ >= 0) {
      ::close(log_fd_);
      log_fd_ = -1;
    }
    std::filesystem::remove(log_path(ws_));
  }

 private:
  void load() {
    auto snap = snapshot_path(ws_);
    std::int64_t snap_seq = 0;
    if (std::filesystem::exists(snap)) {
      auto j = json::parse(read_file(snap), nullptr, false);
      if (j.is_discarded()) throw IoError("corrupt manifest snapshot " + snap.string());
      m_ = Manifest::from_json(j);
      snap_seq = j.value("last_seq", std::int64_t{0});
    }
    seq_ = snap_seq;
    auto log = log_path(ws_);
    if (std::filesystem::exists(log)) {
      std::ifstream in(log);
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto ev = json::parse(line, nullptr, false);
        // A torn final line from a crash is ignored.
        if (ev.is_discarded() || !ev.contains("seq")) continue;
        std::int64_t s = ev["seq"];
        if (s <= snap_seq) continue;
        apply(ev);
        seq_ = std::max(seq_, s);
      }
    }
  }

  void apply(const json &ev) {
    const std::string kind = ev.at("kind");
    const json &e = ev.at("entry");
    if (kind == "item") {
      auto it = item_from_json(e);
      m_.items[it.item_id] = it;
    } else if (kind == "clip") {
      auto c = clip_from_json(e);
      m_.clips[c.clip_id] = c;
    } else if (kind == "remove_clip") {
      m_.clips.erase(e.at("clip_id").get<std::string>());
    } else if (kind == "duplicate") {
      m_.duplicates.push_back({e.at("source"), e.at("duplicate_of"), e.value("at", "")});
    }
  }

  void append(const char *kind, const json &entry) {
    std::lock_guard lk(mu_);
    append_locked(kind, entry);
  }

  void append_locked(const char *kind, const json &entry) {
    if (log_fd_ < 0) {
      std::filesystem::create_directories(ws_);
      log_fd_ = ::open(log_path(ws_).c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
      if (log_fd_ < 0) throw IoError("cannot open manifest log in " + ws_.string());
    }
    json ev{{"seq", seq_ + 1}, {"kind", kind}, {"entry", entry}};
    std::string line = ev.dump() + "\n";
    std::size_t off = 0;
    while (off < line.size()) {
      ssize_t n = ::write(log_fd_, line.data() + off, line.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw IoError("manifest log write failed");
      }
      off += static_cast<std::size_t>(n);
    }
    ::fdatasync(log_fd_);
    ++seq_;
    apply(ev);
  }

  std::filesystem::path ws_;
  mutable std::mutex mu_;
  Manifest m_;
  std::int64_t seq_ = 0;
  int log_fd_ = -1;
};

}  // namespace avlabel
