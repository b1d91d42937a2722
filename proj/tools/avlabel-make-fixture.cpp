// tools/avlabel-make-fixture.cpp

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

#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "avlabel/config.hpp"
#include "avlabel/fixture.hpp"

using namespace avlabel;

int main(int argc, char **argv) {
  CLI::App app{"Writes the synthetic fixture corpus: sources, mock sidecars, planted truth and configs."};
  FixtureOptions o;
  std::string out, worker;
  app.add_option("--out", out, "output directory")->required();
  app.add_option("--worker", worker, "mock worker executable (default: next to this tool)");
  app.add_option("--seed", o.seed);
  app.add_option("--sources", o.sources)->check(CLI::Range(1, 5));
  app.add_option("--shift-ms", o.shift_ms, "planted corruption shift for both backends");
  app.add_flag("--gate-fail-clip", o.gate_fail_clip, "give one clip an audio quality of 2.0");
  app.add_flag("--short-source", o.short_source, "add a 120 s source");
  CLI11_PARSE(app, argc, argv);
  o.out = out;
  o.worker = worker.empty() ? detail::SelfDir() / "avlabel-mock-worker" : std::filesystem::path(worker);
  try {
    auto info = build_fixture(o);
    int labeled = 0;
    for (const auto &c : info.clips) labeled += c.labeled;
    std::cout << info.sources.size() << " sources, " << info.clips.size() << " clips (" << labeled
              << " labeled)\nconfig: " << info.config.string() << "\n";
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
