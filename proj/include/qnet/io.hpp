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

#ifndef QNET_IO_HPP
#define QNET_IO_HPP

#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "qnet/network.hpp"
#include "qnet/protocol.hpp"

namespace qnet {

using Json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws ConfigError naming the first key of obj not in allowed.
void require_object(const Json& j, const std::string& path);
void reject_unknown_keys(const Json& obj, const std::vector<std::string>& allowed, const std::string& path);

struct TargetSpec {
  DensityOperator density = DensityOperator(Mat::Identity(2, 2) * 0.5);
  std::optional<Vec> pure;  // set for pure targets
};

// Accepts "zero", "maximally_mixed", or an object with kind haar (seed),
// zero, maximally_mixed, amplitudes (re, im) or density (re, im).
TargetSpec target_from_json(const Json& j, int n, const std::string& path);

DeviceStrategy strategy_from_json(const Json& j, const std::string& path);
Json strategy_to_json(const DeviceStrategy& s);

// Fields: n, target, bell_noise (scalar or 2n-1 array), strategies.
NetworkModel model_from_json(const Json& j, const std::string& path = "model");
Json model_to_json(const NetworkModel& m);

Json counters_to_json(const CounterBank& b);
Json report_to_json(const CertificationReport& r);

// Header "index,l,k,i,j,n,e". Type II and III rows use -1 for unused
// coordinates.
void write_counters_csv(std::ostream& os, const CounterBank& b);

}  // namespace qnet

#endif
