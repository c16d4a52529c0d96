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

#ifndef QNET_PROTOCOL_HPP
#define QNET_PROTOCOL_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "qnet/network.hpp"
#include "qnet/observables.hpp"
#include "qnet/stats.hpp"

namespace qnet {

struct ProtocolConfig {
  Variant variant = Variant::Local;
  std::int64_t N = 0;
  double eps = 0.1;
  double delta = 0.05;
  ObservableSpec spec;
  // Multipliers on the certification thresholds.
  double c_I = 1.0;
  double c_II = 1.0;
  // Minimum marginal probability for the local variant.
  double marginal_floor = 0.05;
  std::int64_t chunk_rounds = 65536;
  EngineKind engine = EngineKind::Factored;
  int threads = 0;  // 0 = OpenMP default

  void validate() const;
};

// CHSH inputs (x(0,k), x(1,k), y(0,k), y(1,k)).
std::array<int, 4> chsh_inputs(int k);

class CounterBank {
 public:
  CounterBank() = default;
  explicit CounterBank(int n);

  int n() const { return n_; }
  static std::size_t index_I(int l, int k, int i, int j) { return static_cast<std::size_t>(((l * 3 + k) * 2 + i) * 2 + j); }

  std::vector<std::int64_t> nI;
  std::vector<double> eI;
  std::vector<std::int64_t> nII;  // per link (l, l+1)
  std::vector<double> eII;
  std::int64_t nIII = 0;
  double eIII = 0.0;
  double sIII = 0.0;  // sum of squared contributions

  // Order-sensitive only through floating-point rounding; merge partial
  // banks in a fixed order for reproducibility.
  void merge(const CounterBank& other);
  void check_invariants(double W) const;

 private:
  int n_ = 0;
};

enum class Verdict { Certified, Failed };
std::string verdict_text(Verdict v);

struct CertificationReport {
  int n = 0;
  Variant variant = Variant::Local;
  std::int64_t N = 0;
  std::uint64_t seed = 0;
  double eps = 0.0;
  double delta = 0.0;
  double W = 1.0;
  double vI = 0.0;
  double vII = 0.0;
  double vIII = 0.0;
  double vIII_stderr = 0.0;
  std::vector<double> S;       // (l, k)
  std::vector<double> vI_lk;   // 2 sqrt 2 - S(l, k)
  std::vector<double> vII_link;
  double threshold_I = 0.0;
  double threshold_II = 0.0;
  Verdict verdict = Verdict::Failed;
  CounterBank counters;
};

// Local variant: one uniform per main party, marginal draw per auxiliary.
void sample_settings_local(const ProtocolConfig& config, Rng& rng, Settings& out);
Settings sample_settings_local(const ProtocolConfig& config, Rng& rng);
// Shared variant: returns the test type (0, 1, 2 for I, II, III).
int sample_settings_shared(const ProtocolConfig& config, Rng& rng, Settings& out);
Settings sample_settings_shared(const ProtocolConfig& config, Rng& rng, int* type = nullptr);

// Stateful helper holding precomputed weights and acceptance probabilities.
class CounterUpdater {
 public:
  explicit CounterUpdater(const ProtocolConfig& config);
  // shared_type selects the update rule in the shared variant; -1 applies
  // every rule whose condition matches (local variant).
  void update(CounterBank& bank, const Settings& s, std::uint64_t code, Rng& rng, int shared_type = -1) const;
  double acceptance(int l, int y) const { return accept_[static_cast<std::size_t>(l * 3 + y)]; }
  double weight(std::uint64_t code, const Settings& s) const;

 private:
  const ProtocolConfig* config_;
  int n_;
  std::vector<double> accept_;
  WeightTable table_;
  std::array<std::array<int, 6>, 3> chsh_j_;  // chsh_j_[y][x] = (k,i,j) packed or -1
};

void update_counters(CounterBank& bank, const RoundTranscript& t, const ProtocolConfig& config, Rng& rng,
                     int shared_type = -1);

CertificationReport finalize(const CounterBank& bank, const ProtocolConfig& config);

CertificationReport run_protocol(const NetworkModel& model, const ProtocolConfig& config, std::uint64_t seed);
// Single-threaded reference with the same chunking and streams.
CertificationReport run_protocol_serial(const NetworkModel& model, const ProtocolConfig& config, std::uint64_t seed);

struct SelfTestOptions {
  double c = 1.0;
  std::int64_t N = 0;  // 0 = planner
  double c_I = 1.0;
  double c_II = 1.0;
  int sampled_m = 64;
  double gap = -1.0;  // < 0 = compute
  std::int64_t chunk_rounds = 65536;
  EngineKind engine = EngineKind::Factored;
  int threads = 0;
};

struct SelfTestResult {
  Verdict verdict = Verdict::Failed;
  CertificationReport report;
  double gap = 0.0;
  double eps_underlying = 0.0;
  double omega_hat = 0.0;
  double omega_threshold = 0.0;
  std::int64_t N = 0;
};

// Gap of the observable used by each variant (M_psi local, L_psi shared).
double selftest_gap(const Vec& psi, Variant v, int sampled_m, std::uint64_t seed);

SelfTestResult run_state_selftest(const Vec& psi, Variant v, double eps_prime, double delta, const NetworkModel& model,
                                  std::uint64_t seed, const SelfTestOptions& opt = {});

using DistributionFn = std::function<std::vector<double>(const Settings&)>;
// Exact Shat(l, k) from outcome distributions.
double exact_chsh_value(const DistributionFn& dist, int n, int l, int k);
// Exact expectation of the all-teleport estimator.
double exact_v3(const DistributionFn& dist, const ObservableSpec& spec);

}  // namespace qnet

#endif
