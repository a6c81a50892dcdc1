// Copyright (c) the resynth-detect Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line driver for the experiment pipeline.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "rsd/errors.h"
#include "rsd/harness.h"

namespace {

struct Options {
  std::string config;
  std::optional<uint64_t> seed;
  std::string out_dir;
};

void AddCommonOptions(CLI::App* cmd, Options& opts) {
  cmd->add_option("--config", opts.config, "JSON experiment config")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", opts.seed, "Override the config seed");
  cmd->add_option("--out-dir", opts.out_dir, "Experiment directory")->required();
}

void PrintError(const std::string& kind, const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = {{"kind", kind}, {"message", message}};
  std::cerr << j.dump() << std::endl;
}

int Run(const Options& opts, rsd::Stage last) {
  rsd::ExperimentConfig cfg;
  if (!opts.config.empty()) cfg = rsd::LoadExperimentConfig(opts.config);
  if (opts.seed) cfg.seed = *opts.seed;
  const rsd::RunResult r = rsd::RunExperiment(cfg, opts.out_dir, last);
  if (!r.ok) {
    PrintError(r.error_kind, r.error_message);
    return 1;
  }
  nlohmann::ordered_json j;
  j["status"] = "ok";
  std::vector<std::string> ran;
  for (rsd::Stage s : r.ran) ran.push_back(rsd::StageName(s));
  j["stages_run"] = ran;
  j["out_dir"] = opts.out_dir;
  if (r.report) {
    nlohmann::ordered_json grid = nlohmann::ordered_json::object();
    for (const auto& d : r.report->detectors) {
      for (const auto& c : r.report->conditions) {
        const auto& cell = r.report->grid.at(d).at(c);
        grid[d][c] = cell.accuracy ? nlohmann::ordered_json(*cell.accuracy)
                                   : nlohmann::ordered_json("failed");
      }
    }
    j["grid"] = grid;
  }
  std::cout << j.dump(2) << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fake-image detection by re-synthesis"};
  app.require_subcommand(1);
  Options opts;
  const std::pair<const char*, rsd::Stage> commands[] = {
      {"make-fakes", rsd::Stage::kFakes},
      {"train-resynth", rsd::Stage::kResynth},
      {"train-detectors", rsd::Stage::kDetectors},
      {"evaluate", rsd::Stage::kEvaluate},
      {"report", rsd::Stage::kReport},
      {"run-all", rsd::Stage::kReport},
  };
  const char* help[] = {
      "Prepare the data split and write the toy fakes",
      "Train the re-synthesizer on the training reals",
      "Compute training artifacts and train all requested detectors",
      "Score every detector under every requested condition",
      "Write report.json, grid.csv and plots",
      "Run every stage, resuming after the last completed one",
  };
  std::vector<std::pair<CLI::App*, rsd::Stage>> subs;
  for (size_t i = 0; i < std::size(commands); ++i) {
    CLI::App* cmd = app.add_subcommand(commands[i].first, help[i]);
    AddCommonOptions(cmd, opts);
    subs.emplace_back(cmd, commands[i].second);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    PrintError("usage_error", e.what());
    return 2;
  }
  try {
    for (const auto& [cmd, stage] : subs) {
      if (cmd->parsed()) return Run(opts, stage);
    }
  } catch (const rsd::Error& e) {
    PrintError(e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    PrintError("internal_error", e.what());
    return 1;
  }
  return 1;
}
