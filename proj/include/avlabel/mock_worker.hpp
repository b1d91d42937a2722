// avlabel/mock_worker.hpp

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

// Fixture-driven worker: answers every task from sidecar files keyed by the
// SHA-256 of the first media file. Used for offline and fault-injection tests.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "avlabel/annotation.hpp"
#include "avlabel/corruption.hpp"
#include "avlabel/hashing.hpp"
#include "avlabel/protocol.hpp"

namespace avlabel {

struct MockOptions {
  std::filesystem::path fixtures = "fixtures";  // relative paths resolve against the workspace root
  std::optional<double> shift_ms;               // overrides every recipe's shift
  int version = kProtocolVersion;
};

inline json recipe_to_json(const CorruptionRecipe &r) {
  return json{{"shift_ms", r.shift_ms}, {"shift_fraction", r.shift_fraction}, {"flip", r.flip},
              {"drop", r.drop}, {"seed", r.seed}};
}

inline CorruptionRecipe recipe_from_json(const json &j) {
  CorruptionRecipe r;
  r.shift_ms = j.value("shift_ms", 0.0);
  r.shift_fraction = j.value("shift_fraction", 1.0);
  r.flip = j.value("flip", 0);
  r.drop = j.value("drop", 0);
  r.seed = j.value("seed", std::uint64_t{0});
  return r;
}

class MockWorker {
 public:
  explicit MockWorker(MockOptions opt, std::filesystem::path root = std::filesystem::current_path())
      : opt_(std::move(opt)), root_(std::move(root)) {}

  const std::filesystem::path &root() const { return root_; }

  ScoreResponse handle(const ScoreRequest &req) {
    const std::string &id = req.request_id;
    if (req.task == kPingTask) {
      if (req.params.contains("workspace_root") && req.params["workspace_root"].is_string())
        root_ = req.params["workspace_root"].get<std::string>();
      return ScoreResponse::success(
          id, json{{"version", opt_.version}, {"tasks", all_task_names()}, {"name", "avlabel-mock-worker"}});
    }
    auto task = task_from_string(req.task);
    if (!task) return ScoreResponse::failure(id, "unknown task '" + req.task + "'");
    if (req.media.empty()) return ScoreResponse::failure(id, "task " + req.task + " needs at least one media path");
    for (const auto &m : req.media) {
      if (!is_safe_media_path(m)) return ScoreResponse::failure(id, "media path outside workspace: " + m);
      if (!std::filesystem::is_regular_file(root_ / m)) return ScoreResponse::failure(id, "media not found: " + m);
    }
    std::string hash;
    try {
      hash = sha256_file(root_ / req.media[0]);
    } catch (const IoError &e) {
      return ScoreResponse::failure(id, e.what());
    }
    auto dir = opt_.fixtures.is_absolute() ? opt_.fixtures : root_ / opt_.fixtures;
    auto sidecar = dir / (hash + ".json");
    if (!std::filesystem::is_regular_file(sidecar))
      return ScoreResponse::failure(id, "no fixture for " + req.media[0]);
    auto cached = cache_.find(sidecar);
    if (cached == cache_.end()) cached = cache_.emplace(sidecar, json::parse(read_file(sidecar), nullptr, false)).first;
    const json &fx = cached->second;
    if (fx.is_discarded() || !fx.contains(req.task))
      return ScoreResponse::failure(id, "no fixture for task " + req.task + " on " + req.media[0]);
    json payload = fx[req.task];
    if (*task == Task::kDiarizeAudio || *task == Task::kDiarizeAv) {
      try {
        payload = diarize(payload);
      } catch (const std::exception &e) {
        return ScoreResponse::failure(id, std::string("bad diarization fixture: ") + e.what());
      }
    }
    return ScoreResponse::success(id, payload);
  }

 private:
  json diarize(const json &fx) const {
    std::string text = fx.at("rttm").get<std::string>();
    if (!fx.contains("corruption") && !opt_.shift_ms) return json{{"rttm", text}};
    CorruptionRecipe recipe = fx.contains("corruption") ? recipe_from_json(fx["corruption"]) : CorruptionRecipe{};
    if (opt_.shift_ms) recipe.shift_ms = *opt_.shift_ms;
    auto recs = parse_rttm(text);
    std::vector<Annotation> out;
    for (const auto &a : recs) out.push_back(corrupt(a, recipe));
    return json{{"rttm", emit_rttm(out)}};
  }

  MockOptions opt_;
  std::filesystem::path root_;
  std::map<std::filesystem::path, json> cache_;  // sidecars are named by content hash
};

}  // namespace avlabel
