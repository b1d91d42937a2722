// avlabel/config.hpp

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

// Pipeline configuration: one JSON file, schema_version 1. See docs/config.md.

#pragma once

#include <unistd.h>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "avlabel/errors.hpp"
#include "avlabel/fusion.hpp"
#include "avlabel/hashing.hpp"
#include "avlabel/protocol.hpp"
#include "avlabel/quality_gate.hpp"
#include "avlabel/tracking.hpp"
#include "avlabel/worker_client.hpp"

namespace avlabel {

inline constexpr int kConfigSchemaVersion = 1;

struct ShotConfig {
  double threshold = 30.0;
  std::int64_t min_scene_len = 15;
  int max_width = 256;
};

struct ChurnConfig {
  double collar = 0.0;
  double threshold = 0.1;
};

struct PipelineConfig {
  std::filesystem::path config_dir;
  std::filesystem::path workspace;
  std::string media_tool = "builtin";
  std::map<std::string, WorkerSpec> workers;
  std::map<std::string, std::string> tasks;  // task -> worker name
  GateConfig gate;
  FusionConfig fusion;
  std::map<std::string, int> ranks{{"diarize_av", 1}, {"diarize_audio", 2}};
  ShotConfig shot;
  TrackerParams tracking;
  double lip_margin = 0.1;
  double min_clip_seconds = 10.0;
  std::vector<std::string> scenarios;
  std::vector<std::string> languages;
  int concurrency = 1;
  std::vector<std::string> downloader;  // argv with {url} and {out}
  ChurnConfig churn;

  // "<scenario> in <language>" for every pair.
  std::vector<std::string> search_terms() const {
    std::vector<std::string> out;
    for (const auto &s : scenarios)
      for (const auto &l : languages) out.push_back(s + " in " + l);
    return out;
  }

  const WorkerSpec &worker_for(Task t) const {
    auto it = tasks.find(to_string(t));
    if (it == tasks.end()) throw ConfigError("no worker configured for task " + to_string(t));
    auto w = workers.find(it->second);
    if (w == workers.end()) throw ConfigError("task " + to_string(t) + " names unknown worker " + it->second);
    return w->second;
  }
};

namespace detail {

inline std::filesystem::path SelfDir() {
  std::error_code ec;
  auto p = std::filesystem::read_symlink("/proc/self/exe", ec);
  return ec ? std::filesystem::current_path() : p.parent_path();
}

// "{bindir}" expands to the directory of the running executable; a relative
// argv[0] containing '/' resolves against the config file's directory.
inline std::string ExpandProgram(std::string arg, const std::filesystem::path &config_dir, bool first) {
  const std::string tok = "{bindir}";
  for (auto pos = arg.find(tok); pos != std::string::npos; pos = arg.find(tok))
    arg.replace(pos, tok.size(), SelfDir().string());
  if (first && arg.find('/') != std::string::npos && !std::filesystem::path(arg).is_absolute())
    arg = (config_dir / arg).lexically_normal().string();
  return arg;
}

template <typename T>
void Get(const nlohmann::json &j, const char *key, T &out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline PipelineConfig parse_config(const nlohmann::json &j, const std::filesystem::path &config_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  int version = j.value("schema_version", -1);
  if (version != kConfigSchemaVersion)
    throw ConfigError("unsupported config schema_version " + std::to_string(version) + " (expected 1)");
  static const std::vector<std::string> known = {
      "schema_version", "workspace", "media_tool", "workers", "tasks", "gate", "fusion", "shot", "tracking",
      "lip_margin", "min_clip_seconds", "search_terms", "concurrency", "downloader", "churn"};
  for (const auto &[k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("unknown config field '" + k + "'");

  PipelineConfig c;
  c.config_dir = std::filesystem::absolute(config_dir);
  std::string ws = "workspace";
  detail::Get(j, "workspace", ws);
  c.workspace = std::filesystem::path(ws).is_absolute() ? std::filesystem::path(ws) : c.config_dir / ws;
  c.workspace = c.workspace.lexically_normal();
  detail::Get(j, "media_tool", c.media_tool);
  if (c.media_tool != "builtin" && c.media_tool != "ffmpeg") throw ConfigError("media_tool must be builtin or ffmpeg");

  if (j.contains("workers")) {
    for (const auto &[name, w] : j["workers"].items()) {
      WorkerSpec s;
      s.name = name;
      std::vector<std::string> argv;
      detail::Get(w, "argv", argv);
      if (argv.empty()) throw ConfigError("worker " + name + " has no argv");
      for (std::size_t i = 0; i < argv.size(); ++i)
        s.argv.push_back(detail::ExpandProgram(argv[i], c.config_dir, i == 0));
      detail::Get(w, "env", s.env);
      detail::Get(w, "handshake_timeout_s", s.handshake_timeout_s);
      detail::Get(w, "request_timeout_s", s.request_timeout_s);
      if (!(s.handshake_timeout_s > 0) || !(s.request_timeout_s > 0)) throw ConfigError("worker timeouts must be > 0");
      c.workers[name] = s;
    }
  }
  detail::Get(j, "tasks", c.tasks);
  for (const auto &[task, worker] : c.tasks) {
    if (!task_from_string(task)) throw ConfigError("unknown task '" + task + "' in tasks");
    auto it = c.workers.find(worker);
    if (it == c.workers.end()) throw ConfigError("task " + task + " names undeclared worker '" + worker + "'");
    it->second.tasks.push_back(task);
  }

  if (j.contains("gate")) {
    const auto &g = j["gate"];
    detail::Get(g, "ovrl_min", c.gate.ovrl_min);
    detail::Get(g, "vqa_min", c.gate.vqa_min);
    detail::Get(g, "max_abs_offset", c.gate.max_abs_offset);
    detail::Get(g, "conf_min", c.gate.conf_min);
    detail::Get(g, "min_source_duration", c.gate.min_source_duration);
  }
  try {
    c.gate.validate();
  } catch (const ArgumentError &e) {
    throw ConfigError(e.what());
  }

  if (j.contains("fusion")) {
    const auto &f = j["fusion"];
    detail::Get(f, "rank_exponent", c.fusion.rank_exponent);
    detail::Get(f, "ranks", c.ranks);
    std::string order;
    detail::Get(f, "tie_speaker_order", order);
    if (order == "lexicographic")
      c.fusion.tie_speaker_order = TieSpeakerOrder::kLexicographic;
    else if (order == "longest_then_lexicographic" || order.empty())
      c.fusion.tie_speaker_order = TieSpeakerOrder::kLongestThenLexicographic;
    else
      throw ConfigError("unknown fusion.tie_speaker_order '" + order + "'");
  }
  if (!(c.fusion.rank_exponent >= 0)) throw ConfigError("fusion.rank_exponent must be >= 0");
  for (const char *k : {"diarize_av", "diarize_audio"})
    if (!c.ranks.count(k) || c.ranks[k] < 1) throw ConfigError(std::string("fusion.ranks.") + k + " must be >= 1");

  if (j.contains("shot")) {
    detail::Get(j["shot"], "threshold", c.shot.threshold);
    detail::Get(j["shot"], "min_scene_len", c.shot.min_scene_len);
    detail::Get(j["shot"], "max_width", c.shot.max_width);
  }
  if (!(c.shot.threshold > 0) || c.shot.min_scene_len < 1 || c.shot.max_width < 1)
    throw ConfigError("shot settings out of range");
  if (j.contains("tracking")) {
    detail::Get(j["tracking"], "n_init", c.tracking.n_init);
    detail::Get(j["tracking"], "max_age", c.tracking.max_age);
    detail::Get(j["tracking"], "iou_gate", c.tracking.iou_gate);
    detail::Get(j["tracking"], "lambda", c.tracking.lambda);
  }
  if (c.tracking.n_init < 1 || c.tracking.max_age < 0 || !(c.tracking.lambda >= 0 && c.tracking.lambda <= 1))
    throw ConfigError("tracking settings out of range");
  detail::Get(j, "lip_margin", c.lip_margin);
  detail::Get(j, "min_clip_seconds", c.min_clip_seconds);
  if (c.lip_margin < 0 || c.min_clip_seconds < 0) throw ConfigError("lip_margin and min_clip_seconds must be >= 0");
  if (j.contains("search_terms")) {
    detail::Get(j["search_terms"], "scenarios", c.scenarios);
    detail::Get(j["search_terms"], "languages", c.languages);
  }
  detail::Get(j, "concurrency", c.concurrency);
  if (c.concurrency < 1) throw ConfigError("concurrency must be >= 1");
  detail::Get(j, "downloader", c.downloader);
  if (j.contains("churn")) {
    detail::Get(j["churn"], "collar", c.churn.collar);
    detail::Get(j["churn"], "threshold", c.churn.threshold);
  }
  if (!(c.churn.collar >= 0)) throw ConfigError("churn.collar must be >= 0");
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path &path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError &e) {
    throw ConfigError(e.what());
  }
  auto j = nlohmann::json::parse(text, nullptr, false, true);
  if (j.is_discarded()) throw ConfigError(path.string() + ": not valid JSON");
  return parse_config(j, std::filesystem::absolute(path).parent_path());
}

}  // namespace avlabel
