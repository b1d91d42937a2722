// avlabel/protocol.hpp

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

// Worker wire protocol, schema version 1: one JSON object per line.

#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "avlabel/errors.hpp"
#include "avlabel/lip_roi.hpp"
#include "avlabel/quality_gate.hpp"
#include "avlabel/tracking.hpp"

namespace avlabel {

using json = nlohmann::json;

inline constexpr int kProtocolVersion = 1;
inline constexpr std::string_view kPingTask = "ping";

enum class Task {
  kFaceDetect,
  kLandmarks,
  kAudioQuality,
  kVideoQuality,
  kAvSync,
  kDiarizeAudio,
  kDiarizeAv,
  kEmbedFace,
};

inline constexpr std::array<std::pair<Task, std::string_view>, 8> kTaskNames = {{
    {Task::kFaceDetect, "face_detect"},
    {Task::kLandmarks, "landmarks"},
    {Task::kAudioQuality, "audio_quality"},
    {Task::kVideoQuality, "video_quality"},
    {Task::kAvSync, "av_sync"},
    {Task::kDiarizeAudio, "diarize_audio"},
    {Task::kDiarizeAv, "diarize_av"},
    {Task::kEmbedFace, "embed_face"},
}};

inline std::string to_string(Task t) {
  for (auto &[k, n] : kTaskNames)
    if (k == t) return std::string(n);
  return "?";
}

inline std::optional<Task> task_from_string(std::string_view s) {
  for (auto &[k, n] : kTaskNames)
    if (n == s) return k;
  return std::nullopt;
}

inline std::vector<std::string> all_task_names() {
  std::vector<std::string> out;
  for (auto &[k, n] : kTaskNames) out.emplace_back(n);
  return out;
}

// Relative, no ".." component, not empty.
inline bool is_safe_media_path(std::string_view s) {
  if (s.empty() || s.find('\0') != std::string_view::npos) return false;
  std::filesystem::path p{std::string(s)};
  if (p.is_absolute() || p.has_root_name() || p.has_root_directory()) return false;
  for (const auto &part : p)
    if (part == "..") return false;
  return true;
}

struct ScoreRequest {
  std::string request_id;
  std::string task;
  std::vector<std::string> media;
  json params = json::object();
};

struct ScoreResponse {
  std::string request_id;
  bool ok = false;
  json payload;  // null unless ok
  std::optional<std::string> error;

  static ScoreResponse success(std::string id, json payload) {
    return ScoreResponse{std::move(id), true, std::move(payload), std::nullopt};
  }
  static ScoreResponse failure(std::string id, std::string message) {
    return ScoreResponse{std::move(id), false, nullptr, std::move(message)};
  }
};

inline json to_json(const ScoreRequest &r) {
  return json{{"request_id", r.request_id}, {"task", r.task}, {"media", r.media}, {"params", r.params}};
}

inline json to_json(const ScoreResponse &r) {
  json j{{"request_id", r.request_id}, {"ok", r.ok}, {"payload", r.payload}};
  j["error"] = r.error ? json(*r.error) : json(nullptr);
  return j;
}

inline std::string to_line(const json &j) { return j.dump(-1, ' ', false, json::error_handler_t::replace) + "\n"; }

inline ScoreRequest parse_request(std::string_view line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ProtocolError("request is not a JSON object");
  ScoreRequest r;
  if (!j.contains("request_id") || !j["request_id"].is_string()) throw ProtocolError("request_id missing");
  r.request_id = j["request_id"];
  if (!j.contains("task") || !j["task"].is_string()) throw ProtocolError("task missing");
  r.task = j["task"];
  if (j.contains("media")) {
    if (!j["media"].is_array()) throw ProtocolError("media must be an array");
    for (const auto &m : j["media"]) {
      if (!m.is_string()) throw ProtocolError("media entries must be strings");
      r.media.push_back(m);
    }
  }
  if (j.contains("params") && !j["params"].is_null()) {
    if (!j["params"].is_object()) throw ProtocolError("params must be an object");
    for (const auto &[k, v] : j["params"].items())
      if (v.is_structured()) throw ProtocolError("param '" + k + "' is not a scalar");
    r.params = j["params"];
  }
  return r;
}

inline ScoreResponse parse_response(std::string_view line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ProtocolError("response is not a JSON object");
  ScoreResponse r;
  if (!j.contains("request_id") || !j["request_id"].is_string()) throw ProtocolError("response lacks request_id");
  r.request_id = j["request_id"];
  if (!j.contains("ok") || !j["ok"].is_boolean()) throw ProtocolError("response lacks ok flag");
  r.ok = j["ok"];
  bool has_error = j.contains("error") && !j["error"].is_null();
  if (has_error && !j["error"].is_string()) throw ProtocolError("error must be a string");
  if (r.ok == has_error) throw ProtocolError("exactly one of ok and error must be set");
  if (has_error) r.error = j["error"].get<std::string>();
  if (j.contains("payload")) r.payload = j["payload"];
  if (r.ok && !r.payload.is_object()) throw ProtocolError("ok response without payload object");
  return r;
}

// Task payload decoding. Schemas are documented in docs/protocol.md.

inline AudioQuality parse_audio_quality(const json &p) {
  try {
    return AudioQuality{p.at("sig").get<double>(), p.at("bak").get<double>(), p.at("ovrl").get<double>()};
  } catch (const json::exception &e) {
    throw ProtocolError(std::string("audio_quality payload: ") + e.what());
  }
}

inline VideoQuality parse_video_quality(const json &p) {
  try {
    return VideoQuality{p.at("score").get<double>()};
  } catch (const json::exception &e) {
    throw ProtocolError(std::string("video_quality payload: ") + e.what());
  }
}

inline json sync_to_json(const SyncResult &s) {
  json tracks = json::array();
  for (const auto &t : s.per_track)
    tracks.push_back({{"track_id", t.track_id}, {"offset", t.offset}, {"confidence", t.confidence}});
  return json{{"offset", s.offset}, {"confidence", s.confidence}, {"per_track", tracks}};
}

inline SyncResult parse_sync(const json &p) {
  try {
    SyncResult s;
    s.offset = p.value("offset", 0);
    s.confidence = p.value("confidence", 0.0);
    for (const auto &t : p.at("per_track"))
      s.per_track.push_back({t.at("track_id").get<int>(), t.at("offset").get<int>(), t.at("confidence").get<double>()});
    return s;
  } catch (const json::exception &e) {
    throw ProtocolError(std::string("av_sync payload: ") + e.what());
  }
}

// face_detect: {"frames": [{"frame_index": n, "detections": [{"bbox": [x,y,w,h],
// "confidence": c, "embedding": [...] | null}]}]}
inline std::map<std::int64_t, std::vector<Detection>> parse_face_detect(const json &p) {
  try {
    std::map<std::int64_t, std::vector<Detection>> out;
    for (const auto &f : p.at("frames")) {
      std::int64_t idx = f.at("frame_index").get<std::int64_t>();
      auto &dets = out[idx];
      for (const auto &d : f.at("detections")) {
        Detection det;
        det.frame_index = idx;
        const auto &b = d.at("bbox");
        if (!b.is_array() || b.size() != 4) throw ProtocolError("bbox must have 4 numbers");
        det.bbox = BBox{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
        det.confidence = d.value("confidence", 1.0);
        if (d.contains("embedding") && !d["embedding"].is_null())
          det.embedding = d["embedding"].get<std::vector<double>>();
        dets.push_back(std::move(det));
      }
    }
    return out;
  } catch (const json::exception &e) {
    throw ProtocolError(std::string("face_detect payload: ") + e.what());
  }
}

inline json face_detect_to_json(const std::map<std::int64_t, std::vector<Detection>> &frames) {
  json arr = json::array();
  for (const auto &[idx, dets] : frames) {
    json d = json::array();
    for (const auto &det : dets) {
      json e{{"bbox", {det.bbox.x, det.bbox.y, det.bbox.w, det.bbox.h}}, {"confidence", det.confidence}};
      e["embedding"] = det.embedding ? json(*det.embedding) : json(nullptr);
      d.push_back(e);
    }
    arr.push_back({{"frame_index", idx}, {"detections", d}});
  }
  return json{{"frames", arr}};
}

struct TrackLandmarks {
  int track_id = 0;
  std::int64_t frame_index = 0;
  LandmarkSet landmarks;
};

// landmarks: {"landmarks": [{"frame_index": n, "track_id": t, "points": [[x,y] x 468]}]};
// points are normalized to the face box of that track at that frame.
inline std::vector<TrackLandmarks> parse_landmarks(const json &p) {
  try {
    std::vector<TrackLandmarks> out;
    for (const auto &e : p.at("landmarks")) {
      TrackLandmarks t;
      t.track_id = e.at("track_id").get<int>();
      t.frame_index = e.at("frame_index").get<std::int64_t>();
      for (const auto &pt : e.at("points")) {
        if (!pt.is_array() || pt.size() != 2) throw ProtocolError("landmark point must be [x, y]");
        t.landmarks.points.push_back({pt[0].get<double>(), pt[1].get<double>()});
      }
      if (t.landmarks.points.size() != kNumLandmarks)
        throw ProtocolError("expected 468 landmark points, got " + std::to_string(t.landmarks.points.size()));
      out.push_back(std::move(t));
    }
    return out;
  } catch (const json::exception &e) {
    throw ProtocolError(std::string("landmarks payload: ") + e.what());
  }
}

inline std::string parse_rttm_payload(const json &p) {
  if (!p.contains("rttm") || !p["rttm"].is_string()) throw ProtocolError("diarization payload lacks rttm text");
  return p["rttm"].get<std::string>();
}

}  // namespace avlabel
