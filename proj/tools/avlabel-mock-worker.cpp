// tools/avlabel-mock-worker.cpp

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

#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "avlabel/hashing.hpp"
#include "avlabel/mock_worker.hpp"
#include "avlabel/protocol.hpp"

using namespace avlabel;

int main(int argc, char **argv) {
  CLI::App app{
      "Fixture-driven scoring worker speaking protocol v1 on stdin/stdout.\n"
      "Payloads come from <fixtures>/<sha256 of media[0]>.json."};
  MockOptions opt;
  std::string fixtures = "fixtures";
  double shift_ms = -1;
  int delay_ms_max = 0;
  std::string die_once, garbage_once;
  bool bad_request_id = false;
  app.add_option("--fixtures", fixtures, "sidecar directory (relative to the workspace root)");
  app.add_option("--shift-ms", shift_ms, "override the shift of every corruption recipe");
  app.add_option("--delay-ms-max", delay_ms_max, "answer each request after a pseudo-random delay");
  app.add_option("--die-once", die_once, "exit on the first task request unless this marker file exists");
  app.add_flag("--bad-request-id", bad_request_id, "answer task requests with a wrong request_id");
  app.add_option("--garbage-once", garbage_once,
                 "answer the first task request with a non-JSON line unless this marker file exists");
  app.add_option("--version", opt.version, "protocol version to announce");
  CLI11_PARSE(app, argc, argv);
  opt.fixtures = fixtures;
  if (shift_ms >= 0) opt.shift_ms = shift_ms;

  MockWorker worker(opt);
  std::mutex out_mu;
  auto emit = [&](const std::string &line) {
    std::lock_guard<std::mutex> lock(out_mu);
    std::cout << line << std::flush;
  };
  std::vector<std::thread> delayed;
  bool first_task = true;

  std::string line;
  while (std::getline(std::cin, line)) {
    if (line.empty()) continue;
    ScoreRequest req;
    try {
      req = parse_request(line);
    } catch (const ProtocolError &e) {
      emit(to_line(to_json(ScoreResponse::failure("", std::string("malformed request: ") + e.what()))));
      continue;
    }
    if (req.task != kPingTask && first_task) {
      first_task = false;
      if (!die_once.empty() && !std::filesystem::exists(die_once)) {
        std::ofstream(die_once) << "died\n";
        _exit(3);
      }
      if (!garbage_once.empty() && !std::filesystem::exists(garbage_once)) {
        std::ofstream(garbage_once) << "garbage sent\n";
        emit("this is not a response\n");
        continue;
      }
    }
    ScoreResponse resp = worker.handle(req);
    if (bad_request_id && req.task != kPingTask) resp.request_id += "-mismatch";
    std::string out = to_line(to_json(resp));
    if (delay_ms_max > 0 && req.task != kPingTask) {
      // Deterministic per request id.
      auto delay = std::stoul(sha256_hex(req.request_id).substr(0, 8), nullptr, 16) % (delay_ms_max + 1);
      delayed.emplace_back([&emit, out, delay] {
        std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        emit(out);
      });
    } else {
      emit(out);
    }
  }
  for (auto &t : delayed) t.join();
  return 0;
}
