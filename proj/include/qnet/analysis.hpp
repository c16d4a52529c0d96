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

#ifndef QNET_ANALYSIS_HPP
#define QNET_ANALYSIS_HPP

#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "qnet/network.hpp"
#include "qnet/observables.hpp"
#include "qnet/protocol.hpp"

namespace qnet {

// Unitary of the extended swap circuit on party (x) A' (x) A''.
Mat swap_circuit(const Mat& Z, const Mat& X, const Mat& Y);
// Isometry from the party space into party (x) A' (x) A'' (ancillas in |00>).
Mat swap_isometry(const Mat& Z, const Mat& X, const Mat& Y);

struct PartyPaulis {
  Mat X, Y, Z;
};
// Unitarized Pauli surrogates read off a device's CHSH observables.
PartyPaulis main_party_paulis(const PartyDevice& d);
PartyPaulis aux_party_paulis(const PartyDevice& d);

struct IsometryPoint {
  double p = 0.0;
  double chsh_deficit = 0.0;   // 2 sqrt 2 - mean_k S_k
  double fidelity = 0.0;       // <phi+| rho_A'B' |phi+>
  double distance = 0.0;       // sqrt(2 - 2 sqrt F)
};

IsometryPoint isometry_point(double p, const DeviceStrategy& main, const DeviceStrategy& aux);

struct IsometryTrend {
  std::vector<IsometryPoint> points;
  double slope_distance = 0.0;
  double slope_infidelity = 0.0;
};

IsometryTrend isometry_trend(const std::vector<double>& grid);
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

struct ExtractionResult {
  double flag_mass = 0.0;
  double deviation = 0.0;
  double v3_exact = 0.0;
  double channel_value = 0.0;
  Mat output;  // Lambda(rho) on (A_flat_0, A_flatflat_0, A_flat_1, ...)
};

// Local channel of one party as a map on its target qubit (pair absorbed).
// Returns a 16x4 matrix sending vec(X) to vec(Lambda_l(X)), row-major.
Mat extraction_party_map(const PartyDevice& dev, const Mat& pair);
ExtractionResult verify_extraction(const NetworkModel& model, const ObservableSpec& spec);

struct AttackResult {
  std::vector<double> vII;
  std::vector<std::int64_t> counts;
  std::int64_t N = 0;
  std::uint64_t seed = 0;
};

// Braiding rounds only; party l in flipped uses the transposed strategy.
AttackResult transpose_attack_experiment(int n, const std::vector<int>& flipped, std::int64_t N, std::uint64_t seed);
std::int64_t attack_default_N();

struct SweepPoint {
  double param = 0.0;
  double rate = 0.0;
  double stderr_rate = 0.0;
  double mean_vI = 0.0;
  double mean_vII = 0.0;
  double mean_vIII = 0.0;
  std::int64_t N = 0;
  std::uint64_t seed = 0;
  std::vector<double> extra;
};

struct SweepResult {
  std::vector<std::string> extra_columns;
  std::vector<SweepPoint> points;
  void write_csv(std::ostream& os) const;
};

struct SweepConfig {
  NetworkModel model;
  ProtocolConfig protocol;
  int reps = 20;
  std::uint64_t seed = 0;
  // Self-test mode runs the state protocol on psi instead of protocol.spec.
  bool selftest = false;
  Vec psi;
  double eps_prime = 0.3;
  SelfTestOptions selftest_options;
};

std::uint64_t point_seed(std::uint64_t seed, std::size_t point, std::size_t rep);

// Depolarizes every resource pair at each grid value.
SweepResult completeness_sweep(const std::vector<double>& noise, const SweepConfig& cfg);
// Mixes the target with a Haar state orthogonal to psi at each grid value.
SweepResult soundness_sweep(const std::vector<double>& corruption, const SweepConfig& cfg);

struct GapOptions {
  int sampled_m = 64;
  bool with_M = true;
};

struct GapSample {
  int n = 0;
  double gap_L = 0.0;
  double gap_M = 0.0;
  double unit_residual = 0.0;  // ||M psi - psi||
  double lambda_max_M = 0.0;
  bool M_exact = true;
};

std::vector<GapSample> gap_samples(int n_min, int n_max, int trials, std::uint64_t seed, const GapOptions& opt = {});
SweepResult gap_study(int n_min, int n_max, int trials, std::uint64_t seed, const GapOptions& opt = {});
SweepResult gap_summary(const std::vector<GapSample>& samples);

}  // namespace qnet

#endif
