// avlabel/worker_client.hpp

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

// Orchestrator side of the worker protocol: spawn, handshake, correlated
// requests from any thread, one respawn-and-retry on failure.

#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "avlabel/errors.hpp"
#include "avlabel/log.hpp"
#include "avlabel/protocol.hpp"
#include "avlabel/subprocess.hpp"

namespace avlabel {

struct WorkerSpec {
  std::string name = "worker";
  std::vector<std::string> argv;
  std::map<std::string, std::string> env;
  std::vector<std::string> tasks;  // tasks the worker must declare
  double handshake_timeout_s = 30.0;
  double request_timeout_s = 600.0;
  std::filesystem::path stderr_path;
};

class WorkerClient {
 public:
  WorkerClient(WorkerSpec spec, std::filesystem::path workspace_root)
      : spec_(std::move(spec)), root_(std::move(workspace_root)) {}
  ~WorkerClient() { stop(); }
  WorkerClient(const WorkerClient &) = delete;
  WorkerClient &operator=(const WorkerClient &) = delete;

  // Spawns and handshakes. Throws WorkerUnavailable.
  void start() {
    std::unique_lock lock(lifecycle_);
    spawn_locked();
  }

  void stop() {
    std::unique_lock lock(lifecycle_);
    shutdown_locked();
  }

  const WorkerSpec &spec() const { return spec_; }
  std::vector<std::string> declared_tasks() const {
    std::lock_guard lk(mu_);
    return declared_;
  }
  int spawn_count() const { return spawns_.load(); }

  std::string next_request_id() { return spec_.name + "-" + std::to_string(++seq_); }

  ScoreResponse request(const std::string &task, std::vector<std::string> media, json params = json::object(),
                        std::optional<double> timeout_s = std::nullopt) {
    ScoreRequest req{next_request_id(), task, std::move(media), std::move(params)};
    return request(req, timeout_s);
  }

  // Exactly one retry, against a fresh worker, with the same request_id.
  ScoreResponse request(const ScoreRequest &req, std::optional<double> timeout_s = std::nullopt) {
    for (const auto &m : req.media)
      if (!is_safe_media_path(m)) throw ArgumentError("media path escapes workspace: " + m);
    if (!req.params.is_null() && !req.params.is_object()) throw ArgumentError("params must be an object");
    if (req.params.is_object())
      for (const auto &[k, v] : req.params.items())
        if (v.is_structured()) throw ArgumentError("param '" + k + "' is not a scalar");
    auto timeout = std::chrono::duration<double>(timeout_s.value_or(spec_.request_timeout_s));
    std::string reason;
    for (int attempt = 0; attempt < 2; ++attempt) {
      int gen = -1;
      auto r = attempt_once(req, timeout, gen, reason);
      if (r) return *r;
      log::warn("worker ", spec_.name, " request ", req.request_id, " attempt ", attempt + 1, " failed: ", reason);
      if (attempt == 0) {
        try {
          recycle(gen);
        } catch (const WorkerUnavailable &e) {
          reason = e.what();
          break;
        }
      }
    }
    throw RequestFailed(spec_.name + ": request " + req.request_id + " (" + req.task + ") failed: " + reason);
  }

 private:
  struct Slot {
    int gen = 0;
    std::optional<ScoreResponse> response;
  };

  std::optional<ScoreResponse> attempt_once(const ScoreRequest &req, std::chrono::duration<double> timeout,
                                            int &gen, std::string &reason) {
    auto slot = std::make_shared<Slot>();
    {
      std::lock_guard lk(mu_);
      gen = gen_;
      if (!alive_) {
        reason = dead_reason_.empty() ? "worker not running" : dead_reason_;
        return std::nullopt;
      }
      slot->gen = gen;
      pending_[req.request_id] = slot;
    }
    {
      std::shared_lock life(lifecycle_);
      if (!send(req, gen)) {
        std::lock_guard lk(mu_);
        pending_.erase(req.request_id);
        reason = dead_reason_;
        return std::nullopt;
      }
    }
    return await(req.request_id, slot, gen, timeout, reason);
  }

  std::optional<ScoreResponse> await(const std::string &id, const std::shared_ptr<Slot> &slot, int gen,
                                     std::chrono::duration<double> timeout, std::string &reason) {
    std::unique_lock lk(mu_);
    auto deadline = std::chrono::steady_clock::now() + std::chrono::duration_cast<std::chrono::nanoseconds>(timeout);
    bool done = cv_.wait_until(lk, deadline, [&] { return slot->response || gen_ != gen || !alive_; });
    pending_.erase(id);
    if (slot->response) return slot->response;
    reason = done ? (dead_reason_.empty() ? "worker restarted" : dead_reason_) : "timeout";
    return std::nullopt;
  }

  // Caller holds lifecycle_ (shared or unique).
  bool send(const ScoreRequest &req, int gen) {
    std::lock_guard w(write_mu_);
    if (!proc_ || !proc_->write_all(to_line(to_json(req)))) {
      mark_dead(gen, "write to worker failed");
      return false;
    }
    return true;
  }

  void mark_dead(int gen, const std::string &why) {
    std::lock_guard lk(mu_);
    if (gen_ != gen || !alive_) return;
    alive_ = false;
    dead_reason_ = why;
    cv_.notify_all();
  }

  void recycle(int gen) {
    std::unique_lock lock(lifecycle_);
    {
      std::lock_guard lk(mu_);
      if (gen_ != gen && alive_) return;  // someone else already respawned
    }
    log::info("respawning worker ", spec_.name);
    shutdown_locked();
    spawn_locked();
  }

  void shutdown_locked() {
    {
      std::lock_guard lk(mu_);
      alive_ = false;
      if (dead_reason_.empty()) dead_reason_ = "worker stopped";
      ++gen_;
      cv_.notify_all();
    }
    if (proc_) proc_->kill();
    if (reader_.joinable()) reader_.join();
    proc_.reset();
  }

  void spawn_locked() {
    if (reader_.joinable()) shutdown_locked();
    ProcessSpec ps{spec_.argv, spec_.env, root_, spec_.stderr_path};
    int gen;
    try {
      proc_ = std::make_unique<Subprocess>(ps);
    } catch (const WorkerUnavailable &e) {
      std::lock_guard lk(mu_);
      dead_reason_ = e.what();
      throw;
    }
    ++spawns_;
    {
      std::lock_guard lk(mu_);
      gen = ++gen_;
      alive_ = true;
      dead_reason_.clear();
    }
    reader_ = std::thread([this, gen, fd = proc_->stdout_fd()] { read_loop(gen, fd); });
    handshake_locked(gen);
  }

  void handshake_locked(int gen) {
    ScoreRequest ping{spec_.name + "-ping-" + std::to_string(gen), std::string(kPingTask), {},
                      json{{"workspace_root", std::filesystem::absolute(root_).string()}}};
    auto slot = std::make_shared<Slot>();
    slot->gen = gen;
    {
      std::lock_guard lk(mu_);
      pending_[ping.request_id] = slot;
    }
    std::string reason;
    std::optional<ScoreResponse> r;
    if (send(ping, gen))
      r = await(ping.request_id, slot, gen, std::chrono::duration<double>(spec_.handshake_timeout_s), reason);
    else
      reason = "write failed";
    auto fail = [&](const std::string &why) {
      mark_dead(gen, why);
      throw WorkerUnavailable(spec_.name + ": " + why);
    };
    if (!r) fail("handshake failed: " + reason);
    if (!r->ok) fail("handshake rejected: " + r->error.value_or(""));
    int version = r->payload.value("version", -1);
    if (version != kProtocolVersion)
      fail("protocol version mismatch: worker speaks " + std::to_string(version) + ", expected " +
           std::to_string(kProtocolVersion));
    std::vector<std::string> tasks;
    if (r->payload.contains("tasks") && r->payload["tasks"].is_array())
      for (const auto &t : r->payload["tasks"])
        if (t.is_string()) tasks.push_back(t);
    for (const auto &need : spec_.tasks)
      if (std::find(tasks.begin(), tasks.end(), need) == tasks.end()) fail("worker does not declare task " + need);
    std::lock_guard lk(mu_);
    declared_ = tasks;
  }

  void read_loop(int gen, int fd) {
    LineReader reader(fd);
    std::string line;
    for (;;) {
      auto st = reader.read_line(line, std::chrono::milliseconds(200));
      if (st == LineReader::Status::kTimeout) {
        std::lock_guard lk(mu_);
        if (gen_ != gen) return;
        continue;
      }
      if (st == LineReader::Status::kEof) {
        mark_dead(gen, "worker exited");
        return;
      }
      if (line.empty()) continue;
      ScoreResponse resp;
      try {
        resp = parse_response(line);
      } catch (const ProtocolError &e) {
        log::warn("worker ", spec_.name, ": malformed response (", e.what(), "); recycling");
        mark_dead(gen, std::string("malformed response: ") + e.what());
        return;
      }
      std::lock_guard lk(mu_);
      auto it = pending_.find(resp.request_id);
      if (it == pending_.end() || it->second->gen != gen || it->second->response) {
        log::warn("worker ", spec_.name, ": dropping response with unknown request_id '", resp.request_id, "'");
        continue;
      }
      it->second->response = std::move(resp);
      cv_.notify_all();
    }
  }

  WorkerSpec spec_;
  std::filesystem::path root_;
  std::atomic<long> seq_{0};
  std::atomic<int> spawns_{0};

  std::shared_mutex lifecycle_;
  std::mutex write_mu_;
  std::unique_ptr<Subprocess> proc_;
  std::thread reader_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  int gen_ = 0;
  bool alive_ = false;
  std::string dead_reason_;
  std::vector<std::string> declared_;
  std::map<std::string, std::shared_ptr<Slot>> pending_;
};

}  // namespace avlabel
