// Copyright 2026 The qnet Authors
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

#ifndef QNET_TOOLS_CLI_HPP
#define QNET_TOOLS_CLI_HPP

#include <ostream>
#include <string>
#include <vector>

#include "qnet/analysis.hpp"
#include "qnet/io.hpp"

namespace qnet::cli {

inline constexpr int kExitCertified = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitFailed = 2;

// Parsed "protocol" section of a run or sweep config.
struct ProtocolSection {
  ProtocolConfig config;
  double plan_c = 1.0;
  bool has_N = false;
};

struct SelfTestSection {
  bool enabled = false;
  Vec psi;
  double eps_prime = 0.3;
  SelfTestOptions options;
};

struct RunConfig {
  NetworkModel model;
  ProtocolSection protocol;
  SelfTestSection selftest;
};

struct SweepFileConfig {
  std::string kind;  // completeness or soundness
  std::vector<double> grid;
  int reps = 20;
  RunConfig run;
};

ObservableSpec observable_from_json(const Json& j, int n, const std::string& path);
RunConfig run_config_from_json(const Json& j);
SweepFileConfig sweep_config_from_json(const Json& j);
// Fills N from the planner when the config leaves it out.
void plan_protocol(ProtocolSection& p, int n);

// Entry point shared by the executable and the tests.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace qnet::cli

#endif
