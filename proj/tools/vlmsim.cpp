// Copyright 2026 The vlmsim Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vlmsim/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Training-step simulator for vision-language model clusters"};
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("simulate", "Run one configuration");
  vlmsim::SimulateOptions simulate;
  std::uint64_t seed = 0;
  std::string sim_out;
  sim->add_option("--config", simulate.config, "Config JSON")->required();
  auto* seed_opt = sim->add_option("--seed", seed, "Override the config seed");
  sim->add_option("--out", sim_out, "Output directory");

  auto* sweep = app.add_subcommand("sweep", "Cartesian parameter sweep");
  vlmsim::SweepOptions sw;
  std::string sweep_out;
  sweep->add_option("--config", sw.config, "Base config JSON")->required();
  sweep->add_option("--axis", sw.axes, "key=v1,v2,... (repeatable)");
  sweep->add_option("--out", sweep_out, "Output directory");
  sweep->add_option("--parallel", sw.parallel, "Concurrent points")
      ->check(CLI::PositiveNumber);

  auto* val = app.add_subcommand("validate", "Check a configuration");
  std::string val_config;
  val->add_option("--config", val_config, "Config JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : vlmsim::kValidation;
  }

  if (*sim) {
    if (*seed_opt) simulate.seed = seed;
    if (!sim_out.empty()) simulate.out = sim_out;
    return vlmsim::cmd_simulate(simulate, std::cout, std::cerr);
  }
  if (*sweep) {
    if (!sweep_out.empty()) sw.out = sweep_out;
    return vlmsim::cmd_sweep(sw, std::cout, std::cerr);
  }
  return vlmsim::cmd_validate(val_config, std::cout, std::cerr);
}
