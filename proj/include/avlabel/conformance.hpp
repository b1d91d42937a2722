// avlabel/conformance.hpp

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

// Conformance transcript run by `avlabel protocol-check` against any worker.

#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "avlabel/protocol.hpp"
#include "avlabel/subprocess.hpp"

namespace avlabel {

struct ConformanceCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ConformanceReport {
  std::vector<ConformanceCheck> checks;
  std::vector<std::string> declared_tasks;
  bool passed() const {
    if (checks.empty()) return false;
    for (const auto &c : checks)
      if (!c.passed) return false;
    return true;
  }
};

class ConformanceRunner {
 public:
  ConformanceRunner(std::vector<std::string> argv, std::filesystem::path root, double timeout_s = 30.0)
      : argv_(std::move(argv)), root_(std::move(root)), timeout_(static_cast<long>(timeout_s * 1000)) {}

  ConformanceReport run() {
    ConformanceReport rep;
    try {
      proc_ = std::make_unique<Subprocess>(ProcessSpec{argv_, {}, root_, {}});
    } catch (const std::exception &e) {
      rep.checks.push_back({"spawn", false, e.what()});
      return rep;
    }
    reader_ = LineReader(proc_->stdout_fd());
    rep.checks.push_back({"spawn", true, ""});

    // Handshake.
    {
      auto r = call({"pc-ping", std::string(kPingTask), {}, json{{"workspace_root", root_.string()}}});
      ConformanceCheck c{"handshake", false, ""};
      if (!r) {
        c.detail = "no response to ping";
      } else if (!r->ok) {
        c.detail = "ping rejected: " + r->error.value_or("");
      } else if (r->payload.value("version", -1) != kProtocolVersion) {
        c.detail = "version " + r->payload.value("version", json(-1)).dump() + " != 1";
      } else if (!r->payload.contains("tasks") || !r->payload["tasks"].is_array()) {
        c.detail = "ping payload lacks tasks";
      } else {
        c.passed = true;
        for (const auto &t : r->payload["tasks"]) {
          if (!t.is_string() || !task_from_string(t.get<std::string>())) {
            c.passed = false;
            c.detail = "unknown task declared: " + t.dump();
          } else {
            rep.declared_tasks.push_back(t);
          }
        }
        if (rep.declared_tasks.empty()) {
          c.passed = false;
          c.detail = "no tasks declared";
        }
      }
      rep.checks.push_back(c);
      if (!c.passed) return finish(rep);
    }

    {
      std::string odd = "pc echo \"quoted\" \xe2\x98\x83 \\ /";
      auto r = call({odd, std::string(kPingTask), {}, json::object()});
      rep.checks.push_back({"echo_request_id", r && r->request_id == odd, r ? "" : "no response"});
    }
    {
      auto r = call({"pc-unknown", "no_such_task", {"x.bin"}, json::object()});
      rep.checks.push_back({"unknown_task_rejected", r && !r->ok && r->error, r ? "" : "no response"});
    }
    {
      send_raw("{this is not json\n");
      // A worker may answer the garbage line or ignore it; it must stay alive.
      auto r = call({"pc-after-malformed", std::string(kPingTask), {}, json::object()}, 1);
      rep.checks.push_back({"survives_malformed_line", r && r->ok, r ? "" : "worker unresponsive"});
    }
    {
      const std::string task = rep.declared_tasks.front();
      auto a = call({"pc-traversal", task, {"../outside.wav"}, json::object()});
      auto b = call({"pc-absolute", task, {"/etc/passwd"}, json::object()});
      rep.checks.push_back({"path_traversal_rejected", a && !a->ok && b && !b->ok,
                            (a && b) ? "" : "no response"});
    }
    {
      ConformanceCheck c{"missing_media_rejected", true, ""};
      for (const auto &t : rep.declared_tasks) {
        auto r = call({"pc-missing-" + t, t, {"avlabel-conformance-missing/none.bin"}, json::object()});
        if (!r || r->ok) {
          c.passed = false;
          c.detail += t + " ";
        }
      }
      rep.checks.push_back(c);
    }
    {
      std::set<std::string> want, got;
      bool dup = false;
      for (int i = 0; i < 20; ++i) {
        ScoreRequest q{"pc-pipe-" + std::to_string(i), std::string(kPingTask), {}, json::object()};
        want.insert(q.request_id);
        send_raw(to_line(to_json(q)));
      }
      for (int i = 0; i < 20; ++i) {
        auto r = read_response();
        if (!r) break;
        dup = dup || got.count(r->request_id);
        got.insert(r->request_id);
      }
      rep.checks.push_back({"pipelined_20", got == want && !dup,
                            std::to_string(got.size()) + " of 20 answered" + (dup ? ", duplicates" : "")});
    }
    return finish(rep);
  }

 private:
  ConformanceReport finish(ConformanceReport &rep) {
    rep.checks.push_back({"ok_xor_error", violations_.empty(),
                          violations_.empty() ? "" : violations_.front()});
    proc_->close_stdin();
    std::string line;
    bool exited = false;
    auto deadline = std::chrono::steady_clock::now() + timeout_;
    while (std::chrono::steady_clock::now() < deadline) {
      if (reader_.read_line(line, std::chrono::milliseconds(100)) == LineReader::Status::kEof) {
        exited = true;
        break;
      }
    }
    rep.checks.push_back({"exits_on_stdin_close", exited, exited ? "" : "still running"});
    proc_.reset();
    return rep;
  }

  void send_raw(const std::string &s) { proc_->write_all(s); }

  std::optional<ScoreResponse> read_response() {
    std::string line;
    for (;;) {
      auto st = reader_.read_line(line, timeout_);
      if (st != LineReader::Status::kLine) return std::nullopt;
      if (line.empty()) continue;
      try {
        return parse_response(line);
      } catch (const ProtocolError &e) {
        violations_.push_back(std::string(e.what()) + ": " + line.substr(0, 200));
      }
    }
  }

  // Sends and waits for the matching response, skipping up to `skip` others.
  std::optional<ScoreResponse> call(const ScoreRequest &q, int skip = 0) {
    send_raw(to_line(to_json(q)));
    for (int i = 0; i <= skip; ++i) {
      auto r = read_response();
      if (!r) return std::nullopt;
      if (r->request_id == q.request_id) return r;
    }
    return std::nullopt;
  }

  std::vector<std::string> argv_;
  std::filesystem::path root_;
  std::chrono::milliseconds timeout_;
  std::unique_ptr<Subprocess> proc_;
  LineReader reader_;
  std::vector<std::string> violations_;
};

}  // namespace avlabel
