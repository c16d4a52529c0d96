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

#ifndef QNET_OBSERVABLES_HPP
#define QNET_OBSERVABLES_HPP

#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "qnet/linalg.hpp"

namespace qnet {

using PauliString = std::vector<Pauli>;
using Bits = std::vector<int>;

// Base-3 index with party 0 most significant.
std::size_t pauli_string_index(const PauliString& p);
PauliString pauli_string_from_index(std::size_t index, int n);
PauliString pauli_string_from_text(const std::string& text);
std::string pauli_string_text(const PauliString& p);
std::size_t bits_index(const Bits& b);
Bits bits_from_index(std::size_t index, int n);
std::size_t ipow3(int n);

class BasisDistribution {
 public:
  enum class Kind { Product, Explicit, Generator };
  using Sampler = std::function<PauliString(Rng&)>;

  static BasisDistribution product(std::vector<std::array<double, 3>> marginals);
  static BasisDistribution uniform(int n);
  static BasisDistribution explicit_table(int n, std::vector<double> table);
  static BasisDistribution generator(int n, Sampler sampler);

  Kind kind() const { return kind_; }
  int n() const { return n_; }
  bool enumerable() const { return kind_ != Kind::Generator; }
  const std::vector<std::array<double, 3>>& marginals() const { return marginals_; }
  const std::vector<double>& table() const { return table_; }
  double probability(const PauliString& p) const;
  PauliString sample(Rng& rng) const;
  void sample_into(Rng& rng, PauliString& out) const;

 private:
  Kind kind_ = Kind::Product;
  int n_ = 0;
  std::vector<std::array<double, 3>> marginals_;
  std::vector<double> table_;
  std::vector<double> cumulative_;
  Sampler sampler_;
};

struct WeightingFunction {
  std::function<double(const Bits&, const PauliString&)> eval;
  double bound = 1.0;
  std::string name;
};

struct ObservableSpec {
  int n = 0;
  BasisDistribution distribution = BasisDistribution::uniform(1);
  WeightingFunction weight;

  // Checks the component invariants; the weight bound is checked
  // exhaustively when the (b, P) space has at most 10^6 entries.
  void validate() const;
};

// Precomputed omega(b|P) over all 6^n inputs.
class WeightTable {
 public:
  WeightTable() = default;
  explicit WeightTable(const ObservableSpec& spec);
  bool empty() const { return values_.empty(); }
  double operator()(std::size_t bits, std::size_t paulis) const { return values_[paulis * nb_ + bits]; }

 private:
  std::size_t nb_ = 0;
  std::vector<double> values_;
};

inline constexpr int kDefaultObservableCap = 10;

Mat build_L(const ObservableSpec& spec, int cap = kDefaultObservableCap);
Mat k_operator();

// Frequently used specs.
ObservableSpec braiding_spec();
ObservableSpec parity_spec(const BasisDistribution& dist);
ObservableSpec constant_spec(int n, double value);

struct ConditionalState {
  Vec state;  // 2 amplitudes, zero when the projection vanishes
  bool valid = false;
};

// Projects every qubit except k onto |b_l> in basis P_l (b, P of length n-1).
ConditionalState conditional_state(const Vec& psi, int k, const Bits& b_rest, const PauliString& p_rest);

// Per-k shadow weight with basis P on qubit k and Z elsewhere.
double omega_shadow(const Vec& psi, int k, const Bits& b, Pauli p);
// Per-k shadow weight in an arbitrary basis string.
double omega_k(const Vec& psi, int k, const Bits& b, const PauliString& p);
double omega_avg(const Vec& psi, const Bits& b, const PauliString& p);

Mat build_L_psi(const Vec& psi);
Mat build_L_psi_rotated(const Vec& psi, const PauliString& p);

struct ObservableEstimate {
  Mat matrix;
  double stderr_frobenius = 0.0;
  int samples = 0;
  bool exact = true;
};

inline constexpr int kExactMPsiCap = 6;
ObservableEstimate build_M_psi_exact(const Vec& psi);
ObservableEstimate build_M_psi_exact_serial(const Vec& psi);
ObservableEstimate build_M_psi_sampled(const Vec& psi, int samples, Rng& rng);

// Specs whose L equals L_psi (shared randomness) and M_psi (local
// randomness). For L_psi the coordinated choice of k is marginalised given
// the basis string.
ObservableSpec shadow_overlap_spec(const Vec& psi);
ObservableSpec random_basis_spec(const Vec& psi);

double spectral_gap(const Mat& h);

void write_observable_csv(std::ostream& os, const Mat& m);

}  // namespace qnet

#endif
