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

#ifndef QNET_NETWORK_HPP
#define QNET_NETWORK_HPP

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "qnet/linalg.hpp"

namespace qnet {

// Main-party inputs. 0..5 are the single-qubit CHSH settings.
enum Setting : int { kRight = 6, kLeft = 7, kTele = 8, kIdle = 9 };
inline constexpr int kNumSettings = 10;
inline constexpr int kNoAux = -1;  // auxiliary party does not measure

std::string setting_text(int x);

// Qubit indices of the register layout.
struct SystemLayout {
  int n = 0;
  int T(int l) const { return l; }
  int S(int l) const { return n + 2 * l; }
  int B(int l) const { return n + 2 * l + 1; }
  // Link j joins R_j^right and R_{j+1}^left.
  int R_right(int l) const { return 3 * n + 2 * l; }
  int R_left(int l) const { return 3 * n + 2 * (l - 1) + 1; }
  bool has_right(int l) const { return l < n - 1; }
  bool has_left(int l) const { return l > 0; }
  int total() const { return 5 * n - 2; }
  // Noise index of pair l and link j.
  int pair_noise(int l) const { return l; }
  int link_noise(int j) const { return n + j; }
};

enum class StrategyKind { Ideal, Rotated, Transposed, Garbage, Adaptive };
std::string strategy_kind_text(StrategyKind k);
StrategyKind strategy_kind_from_text(const std::string& s);

struct RoundTranscript;

struct DeviceStrategy {
  StrategyKind kind = StrategyKind::Ideal;
  // Rotation about Y applied to single-qubit settings (Rotated, or an
  // adaptive choice that resolves to Rotated).
  double angle = 0.0;

  // Adaptive: picks choices[0] or choices[1] from the prior transcript.
  // Built-in rules: "alternate" (round parity) and "parity" (parity of
  // this party's earlier auxiliary outcomes).
  std::string rule = "alternate";
  std::array<StrategyKind, 2> choices{StrategyKind::Ideal, StrategyKind::Transposed};
  std::function<int(const std::vector<RoundTranscript>&, int party)> selector;

  static DeviceStrategy ideal() { return {}; }
  static DeviceStrategy rotated(double theta);
  static DeviceStrategy transposed();
  static DeviceStrategy garbage();
  static DeviceStrategy adaptive(std::string rule, StrategyKind first, StrategyKind second);

  bool is_adaptive() const { return kind == StrategyKind::Adaptive; }
  // Index into choices for the next round.
  int select(const std::vector<RoundTranscript>& history, int party) const;
  // Non-adaptive strategy for a given choice.
  DeviceStrategy resolve(int choice) const;
};

struct Settings {
  std::vector<int> x;
  std::vector<int> y;  // 0,1,2 = X,Y,Z; kNoAux = idle
};

// Outcome code: 3 bits per party, a_l | b_l << 2, shifted by 3l.
struct RoundTranscript {
  Settings settings;
  std::vector<int> a;
  std::vector<int> b;
  std::uint64_t code() const;
  static RoundTranscript from_code(const Settings& s, std::uint64_t code);
};

inline int outcome_a(std::uint64_t code, int l) { return static_cast<int>((code >> (3 * l)) & 3u); }
inline int outcome_b(std::uint64_t code, int l) { return static_cast<int>((code >> (3 * l + 2)) & 1u); }

struct NetworkModel {
  int n = 1;
  DensityOperator target = DensityOperator(Mat::Identity(2, 2) * 0.5);
  std::vector<double> bell_noise;  // n pairs then n-1 links
  std::vector<DeviceStrategy> strategies;

  static NetworkModel ideal(const DensityOperator& target);
  SystemLayout layout() const { return SystemLayout{n}; }
  bool adaptive() const;
  void validate() const;
};

// POVM elements and Kraus operators for one party under one strategy.
struct PartyDevice {
  // Indexed by setting. Elements act on one qubit (S_l) or on two qubits
  // (input register, S_l) for Bell-state measurements.
  std::array<std::vector<Mat>, kNumSettings> a_povm;
  std::array<std::vector<Mat>, kNumSettings> a_kraus;
  std::array<bool, kNumSettings> a_two_qubit{};
  std::array<std::vector<Mat>, 3> b_povm;
  std::array<std::vector<Mat>, 3> b_kraus;
};

PartyDevice build_party_device(const DeviceStrategy& s, int n, int party);

// Ideal single-qubit CHSH observable of setting x in 0..5.
Mat chsh_observable(int x);

// Bell-diagonal pair state with depolarizing parameter p.
Mat noisy_bell_pair(double p);

enum class EngineKind { Full, Factored };
std::string engine_text(EngineKind e);

// Dense simulation over all 5n-2 qubits. Mixed resources are handled as a
// pure-state ensemble.
class FullEngine {
 public:
  explicit FullEngine(const NetworkModel& model);

  RoundTranscript run_round(const Settings& s, Rng& rng, const std::vector<RoundTranscript>& history = {}) const;
  // Exact outcome distribution over codes (size 8^n).
  std::vector<double> distribution(const Settings& s, const std::vector<RoundTranscript>& history = {}) const;

 private:
  struct Branch {
    double weight;
    Vec state;
  };
  std::vector<Branch> branches(double cutoff) const;
  const PartyDevice& device(int l, const std::vector<RoundTranscript>& history) const;

  NetworkModel model_;
  SystemLayout lay_;
  std::vector<std::array<PartyDevice, 2>> devices_;
  std::vector<double> target_weights_;
  std::vector<Vec> target_vectors_;
};

// Cluster-wise simulation for non-adaptive models with product resources.
class FactoredEngine {
 public:
  explicit FactoredEngine(const NetworkModel& model);
  ~FactoredEngine();
  FactoredEngine(const FactoredEngine&) = delete;
  FactoredEngine& operator=(const FactoredEngine&) = delete;

  std::uint64_t sample_code(const Settings& s, Rng& rng) const;
  RoundTranscript run_round(const Settings& s, Rng& rng) const;
  std::vector<double> distribution(const Settings& s) const;

  int n() const { return model_.n; }

  struct Table {
    std::vector<double> prob;
    std::vector<double> cdf;
    std::vector<std::uint64_t> code;  // global code contribution per entry
    std::size_t sample(double u) const;
  };

 private:
  struct Cluster;
  const Table& pair_table(int l, int x, int y) const;
  const Table& link_table(int j, int yl, int yr) const;
  const Table* target_table(const Settings& s) const;
  std::uint64_t sample_target(const Settings& s, Rng& rng) const;
  Table compute_target_table(const Settings& s) const;
  template <typename F>
  void for_each_cluster(const Settings& s, F&& f) const;

  NetworkModel model_;
  SystemLayout lay_;
  std::vector<PartyDevice> devices_;
  std::vector<Mat> pair_states_;
  std::vector<Mat> link_states_;
  std::vector<Table> pair_tables_;  // (l, x, y+1)
  std::vector<Table> link_tables_;  // (j, yl+2, yr+2); -2 means excluded
  // Lazily computed target tables indexed base 5 per party.
  mutable std::mutex mutex_;
  mutable std::vector<std::unique_ptr<Table>> target_store_;
  mutable std::unique_ptr<std::atomic<const Table*>[]> target_slots_;
  std::size_t target_slot_count_ = 0;
};

inline constexpr std::size_t kTargetTableCap = 4096;

RoundTranscript run_round(const NetworkModel& model, const Settings& s, EngineKind engine, Rng& rng);

double total_variation(const std::vector<double>& p, const std::vector<double>& q);

// Trace distance of the prepared resources from target (x) ideal pairs,
// with the target reduced state held fixed.
double epsilon_S(const NetworkModel& model);

enum class Side { Main, Aux };
// Choi surrogate d * D(J/d, J_ideal/d) for one measurement channel.
double epsilon_M_bound(const DeviceStrategy& s, int n, int party, Side side, int setting);

// Correction rule: b xor [sigma_P anticommutes with X^a0 Z^a1].
int correction_flip(int b, Pauli p, int a);

}  // namespace qnet

#endif
