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

#ifndef QNET_LINALG_HPP
#define QNET_LINALG_HPP

#include <Eigen/Dense>
#include <array>
#include <complex>
#include <cstdint>
#include <vector>

#include "qnet/rng.hpp"

namespace qnet {

using cplx = std::complex<double>;
using Vec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;

// Largest register the dense routines accept.
inline constexpr int kMaxDenseQubits = 24;

// Qubit q of an m-qubit register is bit (m - 1 - q) of the basis index, so
// kron(A, B) puts A on qubit 0.
inline int qubit_bit(std::uint64_t index, int q, int m) { return static_cast<int>((index >> (m - 1 - q)) & 1u); }

enum class Pauli : std::uint8_t { X = 0, Y = 1, Z = 2 };

char pauli_char(Pauli p);
Pauli pauli_from_char(char c);
const Mat& pauli_matrix(Pauli p);
// Columns are the +1 and -1 eigenvectors, so column b is the outcome-b state.
const Mat& pauli_basis(Pauli p);

class PureState {
 public:
  explicit PureState(Vec amplitudes);
  int num_qubits() const { return num_qubits_; }
  const Vec& amplitudes() const { return amp_; }
  Mat density() const { return amp_ * amp_.adjoint(); }

 private:
  int num_qubits_;
  Vec amp_;
};

class DensityOperator {
 public:
  explicit DensityOperator(Mat matrix);
  static DensityOperator from_pure(const PureState& psi) { return DensityOperator(psi.density()); }
  int num_qubits() const { return num_qubits_; }
  const Mat& matrix() const { return m_; }

 private:
  int num_qubits_;
  Mat m_;
};

class HermitianOperator {
 public:
  explicit HermitianOperator(Mat matrix);
  long dimension() const { return m_.rows(); }
  const Mat& matrix() const { return m_; }

 private:
  Mat m_;
};

struct Eigh {
  RVec values;  // ascending
  Mat vectors;  // columns
};

int qubit_count(long dimension);
Mat identity(int qubits);
Mat kron(const Mat& a, const Mat& b);
Vec kron(const Vec& a, const Vec& b);
Mat kron_all(const std::vector<Mat>& factors);

// In-place application of a k-qubit operator to the listed qubits of an
// m-qubit vector. Works for non-unitary operators.
void apply_to_vector(Vec& psi, int m, const std::vector<int>& targets, const Mat& op);
Mat apply_left(const Mat& rho, int m, const std::vector<int>& targets, const Mat& op);
// op * rho * op^dagger
Mat conjugate_by(const Mat& rho, int m, const std::vector<int>& targets, const Mat& op);
// Operator on m qubits acting as op on the targets.
Mat embed(const Mat& op, const std::vector<int>& targets, int m);

// Keeps the listed qubits in ascending order.
Mat partial_trace(const Mat& rho, int m, const std::vector<int>& keep);
Mat partial_transpose(const Mat& h, const std::vector<int>& subset);

double hermitian_defect(const Mat& h);
Eigh eigh(const Mat& h);
Mat unitarize(const Mat& h);
double trace_distance(const Mat& rho, const Mat& sigma);
double fidelity(const Mat& rho, const Vec& psi);
PureState haar_random_state(int n, Rng& rng);
// (1 - p) rho + p (I/2^k) (x) tr_targets(rho), k = |targets|.
Mat depolarize(const Mat& rho, double p, const std::vector<int>& targets);

PureState bell_state();
// Index a = a0 + 2 a1 projects onto (X^a0 Z^a1 (x) I)|phi+>.
const std::array<Mat, 4>& bsm_projectors();
const Mat& bsm_unitary(int a);

struct MeasureResult {
  int outcome;
  double probability;
  Vec state;
};
struct MeasureResultMixed {
  int outcome;
  double probability;
  Mat state;
};

// Kraus operators act on the listed qubits; projectors are their own Kraus
// operators. Branches with squared norm below 1e-14 are never sampled.
MeasureResult measure(const Vec& psi, const std::vector<Mat>& kraus, const std::vector<int>& targets, Rng& rng);
MeasureResultMixed measure(const Mat& rho, const std::vector<Mat>& kraus, const std::vector<int>& targets, Rng& rng);

inline constexpr double kZeroBranch = 1e-14;

}  // namespace qnet

#endif
