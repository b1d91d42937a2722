// tools/avlabel.cpp

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

#include <cstdio>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "avlabel/annotation.hpp"
#include "avlabel/config.hpp"
#include "avlabel/conformance.hpp"
#include "avlabel/fusion.hpp"
#include "avlabel/metrics.hpp"
#include "avlabel/pipeline.hpp"

using namespace avlabel;

namespace {

std::map<std::string, Annotation> LoadRttm(const std::string &path) {
  std::map<std::string, Annotation> out;
  for (auto &a : parse_rttm(read_file(path))) out[a.recording_id()] = std::move(a);
  return out;
}

int Score(const std::string &ref_path, const std::string &hyp_path, double collar, bool no_overlap, bool as_json) {
  auto ref = LoadRttm(ref_path), hyp = LoadRttm(hyp_path);
  std::set<std::string> ids;
  for (const auto &[k, v] : ref) ids.insert(k);
  for (const auto &[k, v] : hyp) ids.insert(k);
  DerOptions opt;
  opt.collar = collar;
  opt.score_overlap = !no_overlap;
  json rows = json::array();
  DerReport total;
  for (const auto &id : ids) {
    Annotation r = ref.count(id) ? ref[id] : Annotation(id);
    Annotation h = hyp.count(id) ? hyp[id] : Annotation(id);
    DerReport d = der(r, h, opt);
    total.missed += d.missed;
    total.false_alarm += d.false_alarm;
    total.confusion += d.confusion;
    total.reference_total += d.reference_total;
    rows.push_back({{"recording_id", id}, {"der", d.der}, {"missed", d.missed}, {"false_alarm", d.false_alarm},
                    {"confusion", d.confusion}, {"reference", d.reference_total}});
  }
  double overall = total.reference_total > 0 ? total.error() / total.reference_total : (total.error() > 0 ? 1.0 : 0.0);
  if (as_json) {
    std::cout << json{{"recordings", rows}, {"der", overall}}.dump(1) << "\n";
    return 0;
  }
  std::cout << std::left << std::setw(24) << "recording" << std::setw(10) << "DER" << std::setw(10) << "miss"
            << std::setw(10) << "fa" << std::setw(10) << "conf" << "ref\n";
  std::cout << std::fixed << std::setprecision(4);
  for (const auto &r : rows)
    std::cout << std::setw(24) << r["recording_id"].get<std::string>() << std::setw(10) << r["der"].get<double>()
              << std::setw(10) << r["missed"].get<double>() << std::setw(10) << r["false_alarm"].get<double>()
              << std::setw(10) << r["confusion"].get<double>() << r["reference"].get<double>() << "\n";
  std::cout << std::setw(24) << "*** OVERALL ***" << overall << "\n";
  return 0;
}

int Fuse(const std::vector<std::string> &files, std::vector<int> ranks, double exponent, const std::string &order,
         const std::string &out) {
  if (ranks.empty()) ranks.assign(files.size(), 1);
  if (ranks.size() != files.size()) throw ArgumentError("--ranks needs one rank per input file");
  FusionConfig cfg;
  cfg.rank_exponent = exponent;
  if (order == "lexicographic")
    cfg.tie_speaker_order = TieSpeakerOrder::kLexicographic;
  else if (order != "longest_then_lexicographic")
    throw ArgumentError("unknown --tie-order " + order);
  std::vector<std::map<std::string, Annotation>> inputs;
  std::set<std::string> ids;
  for (const auto &f : files) {
    inputs.push_back(LoadRttm(f));
    for (const auto &[k, v] : inputs.back()) ids.insert(k);
  }
  std::vector<Annotation> fused;
  for (const auto &id : ids) {
    std::vector<Hypothesis> hyps;
    for (std::size_t k = 0; k < files.size(); ++k) {
      auto it = inputs[k].find(id);
      hyps.push_back({files[k], it == inputs[k].end() ? Annotation(id) : it->second, ranks[k]});
    }
    fused.push_back(fuse(hyps, cfg).with_recording_id(id));
  }
  std::string text = emit_rttm(fused);
  if (out.empty() || out == "-")
    std::cout << text;
  else
    write_file_atomic(out, text);
  return 0;
}

int ProtocolCheck(const std::vector<std::string> &cmd, const std::string &workspace, double timeout) {
  if (cmd.empty()) throw ArgumentError("protocol-check needs a worker command after --");
  auto root = workspace.empty() ? std::filesystem::current_path() : std::filesystem::absolute(workspace);
  ConformanceRunner runner(cmd, root, timeout);
  auto rep = runner.run();
  for (const auto &c : rep.checks)
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << (c.detail.empty() ? "" : ": " + c.detail) << "\n";
  std::cout << (rep.passed() ? "conformant" : "not conformant") << "\n";
  return rep.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Audio-visual speaker diarization pseudo-labeling pipeline."};
  app.require_subcommand(1);
  std::string config_path = "avlabel.json";
  bool as_json = false;

  auto *ingest = app.add_subcommand("ingest", "register and acquire source videos");
  std::vector<std::string> sources;
  std::string tag;
  ingest->add_option("--config", config_path, "pipeline configuration")->required();
  ingest->add_option("--tag", tag, "originating search term");
  ingest->add_option("sources", sources, "local paths or URLs")->required();
  ingest->add_flag("--json", as_json);

  auto *run = app.add_subcommand("run", "run pending stages");
  std::optional<std::string> items;
  run->add_option("--config", config_path)->required();
  run->add_option("--items", items, "comma-separated item id prefixes; empty selects nothing");
  run->add_flag("--json", as_json);

  auto *resume = app.add_subcommand("resume", "verify artifacts and finish an interrupted run");
  resume->add_option("--config", config_path)->required();
  resume->add_flag("--json", as_json);

  auto *status = app.add_subcommand("status", "summarize the manifest");
  std::string workspace;
  status->add_option("--config", config_path);
  status->add_option("--workspace", workspace, "workspace directory (instead of --config)");
  status->add_flag("--json", as_json);

  auto *relabel = app.add_subcommand("relabel", "re-run diarization and fusion with new workers");
  std::optional<int> iteration;
  relabel->add_option("--config", config_path, "configuration naming the new workers")->required();
  relabel->add_option("--iteration", iteration, "label version number (default: next)");
  relabel->add_flag("--json", as_json);

  auto *score = app.add_subcommand("score", "diarization error rate of hyp against ref");
  std::string ref, hyp;
  double collar = 0.25;
  bool no_overlap = false;
  score->add_option("ref", ref)->required();
  score->add_option("hyp", hyp)->required();
  score->add_option("--collar", collar, "seconds excluded around each reference boundary");
  score->add_flag("--no-overlap", no_overlap, "exclude overlapped speech from scoring");
  score->add_flag("--json", as_json);

  auto *fusecmd = app.add_subcommand("fuse", "rank-weighted voting over RTTM files");
  std::vector<std::string> files;
  std::vector<int> ranks;
  double exponent = 0.5;
  std::string order = "longest_then_lexicographic", out;
  fusecmd->add_option("files", files)->required();
  fusecmd->add_option("--ranks", ranks, "one rank per file (1 = best)")->delimiter(',');
  fusecmd->add_option("--exponent", exponent, "weight = rank^-exponent");
  fusecmd->add_option("--tie-order", order, "lexicographic or longest_then_lexicographic");
  fusecmd->add_option("-o,--output", out);

  auto *gate = app.add_subcommand("gate-report", "per-clip quality gate table");
  gate->add_option("--config", config_path);
  gate->add_option("--workspace", workspace);
  gate->add_flag("--json", as_json);

  auto *pcheck = app.add_subcommand("protocol-check", "run the conformance transcript against a worker");
  std::vector<std::string> cmd;
  double timeout = 30.0;
  pcheck->add_option("--workspace", workspace, "workspace root sent in the handshake");
  pcheck->add_option("--timeout", timeout, "seconds per response");
  pcheck->add_option("cmd", cmd, "worker command (after --)")->required();

  CLI11_PARSE(app, argc, argv);

  auto workspace_of = [&]() -> std::filesystem::path {
    if (!workspace.empty()) return workspace;
    return load_config(config_path).workspace;
  };

  try {
    if (*ingest) {
      Pipeline p(load_config(config_path));
      auto res = p.ingest(sources, tag);
      bool failed = false;
      json j = json::array();
      for (const auto &r : res) {
        j.push_back({{"source", r.source}, {"item_id", r.item_id}, {"state", r.state}});
        if (r.state.rfind("failed", 0) == 0 || r.state.rfind("error", 0) == 0) failed = true;
        if (!as_json) std::cout << r.state << "  " << (r.item_id.empty() ? "-" : r.item_id.substr(0, 12)) << "  " << r.source << "\n";
      }
      if (as_json) std::cout << j.dump(1) << "\n";
      return failed ? 1 : 0;
    }
    if (*run || *resume) {
      Pipeline p(load_config(config_path));
      RunSummary s;
      if (*resume) {
        s = p.resume();
      } else if (items) {
        std::vector<std::string> filter;
        std::stringstream ss(*items);
        for (std::string part; std::getline(ss, part, ',');)
          if (!part.empty()) filter.push_back(part);
        s = p.run(filter);
      } else {
        s = p.run();
      }
      std::cout << (as_json ? s.to_json().dump(1) + "\n" : s.to_text());
      return s.failed ? 1 : 0;
    }
    if (*status) {
      auto s = avlabel::status(workspace_of());
      std::cout << (as_json ? s.to_json().dump(1) + "\n" : s.to_text());
      return 0;
    }
    if (*relabel) {
      Pipeline p(load_config(config_path));
      auto rep = p.relabel(iteration);
      if (as_json) {
        std::cout << rep.to_json().dump(1) << "\n";
      } else {
        std::cout << "iteration " << rep.iteration << ": " << rep.items.size() << " relabeled, " << rep.skipped.size()
                  << " skipped\n"
                  << std::fixed << std::setprecision(4) << "churn mean " << rep.mean << "  median " << rep.median
                  << "  above " << rep.threshold << ": " << rep.above_threshold.size() << "\n";
      }
      return 0;
    }
    if (*score) return Score(ref, hyp, collar, no_overlap, as_json);
    if (*fusecmd) return Fuse(files, ranks, exponent, order, out);
    if (*gate) {
      auto ws = workspace_of();
      if (!ManifestStore::exists(ws)) {
        std::cout << "no run\n";
        return 0;
      }
      ManifestStore store(ws);
      auto m = store.snapshot();
      std::cout << (as_json ? gate_report_json(m).dump(1) + "\n" : gate_report_text(m));
      return 0;
    }
    if (*pcheck) return ProtocolCheck(cmd, workspace, timeout);
  } catch (const ConfigError &e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ArgumentError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
