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

#include "qnet/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace qnet {

namespace {

const cplx kI(0.0, 1.0);

Mat make2(cplx a, cplx b, cplx c, cplx d) {
  Mat m(2, 2);
  m << a, b, c, d;
  return m;
}

// Offsets of the 2^k sub-basis states of `targets` inside an m-qubit index.
std::vector<std::uint64_t> sub_offsets(int m, const std::vector<int>& targets) {
  const int k = static_cast<int>(targets.size());
  std::vector<std::uint64_t> off(std::size_t{1} << k, 0);
  for (std::size_t s = 0; s < off.size(); ++s) {
    std::uint64_t o = 0;
    for (int t = 0; t < k; ++t) {
      if ((s >> (k - 1 - t)) & 1u) o |= std::uint64_t{1} << (m - 1 - targets[t]);
    }
    off[s] = o;
  }
  return off;
}

std::uint64_t target_mask(int m, const std::vector<int>& targets) {
  std::uint64_t mask = 0;
  for (int t : targets) {
    if (t < 0 || t >= m) throw std::out_of_range("qubit index " + std::to_string(t) + " out of range");
    std::uint64_t bit = std::uint64_t{1} << (m - 1 - t);
    if (mask & bit) throw std::invalid_argument("repeated qubit index");
    mask |= bit;
  }
  return mask;
}

// Iterates over base indices whose target bits are zero.
template <typename F>
void for_each_base(int m, std::uint64_t mask, F&& f) {
  const std::uint64_t dim = std::uint64_t{1} << m;
  for (std::uint64_t i = 0; i < dim; ++i)
    if (!(i & mask)) f(i);
}

}  // namespace

char pauli_char(Pauli p) { return "XYZ"[static_cast<int>(p)]; }

Pauli pauli_from_char(char c) {
  switch (c) {
    case 'X': case 'x': return Pauli::X;
    case 'Y': case 'y': return Pauli::Y;
    case 'Z': case 'z': return Pauli::Z;
    default: throw std::invalid_argument(std::string("not a Pauli label: ") + c);
  }
}

const Mat& pauli_matrix(Pauli p) {
  static const std::array<Mat, 3> m = {make2(0, 1, 1, 0), make2(0, -kI, kI, 0), make2(1, 0, 0, -1)};
  return m[static_cast<int>(p)];
}

const Mat& pauli_basis(Pauli p) {
  const double r = 1.0 / std::sqrt(2.0);
  static const std::array<Mat, 3> m = {make2(r, r, r, -r), make2(r, r, r * kI, -r * kI), make2(1, 0, 0, 1)};
  return m[static_cast<int>(p)];
}

int qubit_count(long dimension) {
  if (dimension < 1) throw std::invalid_argument("empty dimension");
  int q = 0;
  while ((1L << q) < dimension) ++q;
  if ((1L << q) != dimension) throw std::invalid_argument("dimension is not a power of two");
  if (q > kMaxDenseQubits) throw std::invalid_argument("register exceeds the dense qubit cap");
  return q;
}

PureState::PureState(Vec amplitudes) : num_qubits_(qubit_count(amplitudes.size())), amp_(std::move(amplitudes)) {
  if (std::abs(amp_.squaredNorm() - 1.0) > 1e-12) throw std::invalid_argument("state is not normalized");
}

DensityOperator::DensityOperator(Mat matrix) : num_qubits_(0), m_(std::move(matrix)) {
  if (m_.rows() != m_.cols()) throw std::invalid_argument("density matrix is not square");
  num_qubits_ = qubit_count(m_.rows());
  if (hermitian_defect(m_) > 1e-10) throw std::invalid_argument("density matrix is not Hermitian");
  if (std::abs(m_.trace() - cplx(1.0)) > 1e-10) throw std::invalid_argument("density matrix trace is not one");
  if (eigh(m_).values.minCoeff() < -1e-10) throw std::invalid_argument("density matrix has a negative eigenvalue");
}

HermitianOperator::HermitianOperator(Mat matrix) : m_(std::move(matrix)) {
  if (m_.rows() != m_.cols()) throw std::invalid_argument("operator is not square");
  if (hermitian_defect(m_) > 1e-10) throw std::invalid_argument("operator is not Hermitian");
}

Mat identity(int qubits) {
  const long d = 1L << qubits;
  return Mat::Identity(d, d);
}

Mat kron(const Mat& a, const Mat& b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (long i = 0; i < a.rows(); ++i)
    for (long j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

Vec kron(const Vec& a, const Vec& b) {
  Vec out(a.size() * b.size());
  for (long i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a(i) * b;
  return out;
}

Mat kron_all(const std::vector<Mat>& factors) {
  Mat out = Mat::Identity(1, 1);
  for (const Mat& f : factors) out = kron(out, f);
  return out;
}

void apply_to_vector(Vec& psi, int m, const std::vector<int>& targets, const Mat& op) {
  const std::uint64_t mask = target_mask(m, targets);
  const auto off = sub_offsets(m, targets);
  const long k = static_cast<long>(off.size());
  if (op.rows() != k || op.cols() != k) throw std::invalid_argument("operator size does not match targets");
  Vec in(k), out(k);
  for_each_base(m, mask, [&](std::uint64_t base) {
    for (long s = 0; s < k; ++s) in(s) = psi(static_cast<long>(base | off[s]));
    out.noalias() = op * in;
    for (long s = 0; s < k; ++s) psi(static_cast<long>(base | off[s])) = out(s);
  });
}

Mat apply_left(const Mat& rho, int m, const std::vector<int>& targets, const Mat& op) {
  const std::uint64_t mask = target_mask(m, targets);
  const auto off = sub_offsets(m, targets);
  const long k = static_cast<long>(off.size());
  if (op.rows() != k || op.cols() != k) throw std::invalid_argument("operator size does not match targets");
  Mat out(rho.rows(), rho.cols());
  Mat in(k, rho.cols()), prod(k, rho.cols());
  for_each_base(m, mask, [&](std::uint64_t base) {
    for (long s = 0; s < k; ++s) in.row(s) = rho.row(static_cast<long>(base | off[s]));
    prod.noalias() = op * in;
    for (long s = 0; s < k; ++s) out.row(static_cast<long>(base | off[s])) = prod.row(s);
  });
  return out;
}

Mat conjugate_by(const Mat& rho, int m, const std::vector<int>& targets, const Mat& op) {
  Mat left = apply_left(rho, m, targets, op);
  Mat adj = left.adjoint();
  return apply_left(adj, m, targets, op).adjoint();
}

Mat embed(const Mat& op, const std::vector<int>& targets, int m) {
  return apply_left(identity(m), m, targets, op);
}

Mat partial_trace(const Mat& rho, int m, const std::vector<int>& keep) {
  std::vector<int> kept = keep;
  std::sort(kept.begin(), kept.end());
  std::vector<int> traced;
  for (int q = 0; q < m; ++q)
    if (!std::binary_search(kept.begin(), kept.end(), q)) traced.push_back(q);
  const auto koff = sub_offsets(m, kept);
  const auto toff = sub_offsets(m, traced);
  const long dk = static_cast<long>(koff.size());
  Mat out = Mat::Zero(dk, dk);
  for (long i = 0; i < dk; ++i)
    for (long j = 0; j < dk; ++j) {
      cplx acc = 0.0;
      for (std::uint64_t t : toff) acc += rho(static_cast<long>(koff[i] | t), static_cast<long>(koff[j] | t));
      out(i, j) = acc;
    }
  return out;
}

Mat partial_transpose(const Mat& h, const std::vector<int>& subset) {
  const int m = qubit_count(h.rows());
  const std::uint64_t mask = target_mask(m, subset);
  Mat out(h.rows(), h.cols());
  for (long i = 0; i < h.rows(); ++i)
    for (long j = 0; j < h.cols(); ++j) {
      const std::uint64_t ui = static_cast<std::uint64_t>(i), uj = static_cast<std::uint64_t>(j);
      const std::uint64_t ni = (ui & ~mask) | (uj & mask);
      const std::uint64_t nj = (uj & ~mask) | (ui & mask);
      out(static_cast<long>(ni), static_cast<long>(nj)) = h(i, j);
    }
  return out;
}

double hermitian_defect(const Mat& h) { return (h - h.adjoint()).cwiseAbs().maxCoeff(); }

Eigh eigh(const Mat& h) {
  if (h.rows() != h.cols()) throw std::invalid_argument("eigh needs a square matrix");
  if (hermitian_defect(h) > 1e-8) throw std::invalid_argument("eigh input is not Hermitian");
  Eigen::SelfAdjointEigenSolver<Mat> solver(h);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigensolver did not converge");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

Mat unitarize(const Mat& h) {
  Eigh e = eigh(h);
  RVec s(e.values.size());
  for (long i = 0; i < s.size(); ++i) s(i) = std::abs(e.values(i)) <= 1e-10 ? 1.0 : (e.values(i) > 0 ? 1.0 : -1.0);
  return e.vectors * s.cast<cplx>().asDiagonal() * e.vectors.adjoint();
}

double trace_distance(const Mat& rho, const Mat& sigma) {
  Mat d = rho - sigma;
  d = 0.5 * (d + d.adjoint().eval());
  return 0.5 * eigh(d).values.cwiseAbs().sum();
}

double fidelity(const Mat& rho, const Vec& psi) {
  double f = (psi.adjoint() * rho * psi)(0, 0).real();
  return std::clamp(f, 0.0, 1.0);
}

PureState haar_random_state(int n, Rng& rng) {
  const long d = 1L << n;
  Vec v(d);
  for (long i = 0; i < d; ++i) {
    double re = standard_normal(rng);
    double im = standard_normal(rng);
    v(i) = cplx(re, im);
  }
  v /= v.norm();
  return PureState(v);
}

Mat depolarize(const Mat& rho, double p, const std::vector<int>& targets) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("depolarizing parameter outside [0,1]");
  const int m = qubit_count(rho.rows());
  std::vector<int> rest;
  std::vector<int> sorted = targets;
  std::sort(sorted.begin(), sorted.end());
  for (int q = 0; q < m; ++q)
    if (!std::binary_search(sorted.begin(), sorted.end(), q)) rest.push_back(q);
  Mat reduced = partial_trace(rho, m, rest);
  const int k = static_cast<int>(sorted.size());
  // I/2^k on the targets, the reduced state elsewhere, reassembled in place.
  Mat mixed = Mat::Zero(rho.rows(), rho.cols());
  const auto roff = sub_offsets(m, rest);
  const auto toff = sub_offsets(m, sorted);
  const double w = 1.0 / static_cast<double>(1L << k);
  for (std::size_t i = 0; i < roff.size(); ++i)
    for (std::size_t j = 0; j < roff.size(); ++j)
      for (std::uint64_t t : toff)
        mixed(static_cast<long>(roff[i] | t), static_cast<long>(roff[j] | t)) =
            w * reduced(static_cast<long>(i), static_cast<long>(j));
  return (1.0 - p) * rho + p * mixed;
}

PureState bell_state() {
  Vec v = Vec::Zero(4);
  v(0) = v(3) = 1.0 / std::sqrt(2.0);
  return PureState(v);
}

const Mat& bsm_unitary(int a) {
  static const std::array<Mat, 4> u = [] {
    const Mat& x = pauli_matrix(Pauli::X);
    const Mat& z = pauli_matrix(Pauli::Z);
    Mat id = Mat::Identity(2, 2);
    return std::array<Mat, 4>{id, x, z, Mat(x * z)};
  }();
  return u.at(static_cast<std::size_t>(a));
}

const std::array<Mat, 4>& bsm_projectors() {
  static const std::array<Mat, 4> p = [] {
    std::array<Mat, 4> out;
    const Vec phi = bell_state().amplitudes();
    for (int a = 0; a < 4; ++a) {
      Vec v = kron(bsm_unitary(a), Mat::Identity(2, 2)) * phi;
      out[static_cast<std::size_t>(a)] = v * v.adjoint();
    }
    return out;
  }();
  return p;
}

MeasureResult measure(const Vec& psi, const std::vector<Mat>& kraus, const std::vector<int>& targets, Rng& rng) {
  const int m = qubit_count(psi.size());
  std::vector<Vec> branches;
  std::vector<double> probs;
  for (const Mat& k : kraus) {
    Vec v = psi;
    apply_to_vector(v, m, targets, k);
    probs.push_back(v.squaredNorm());
    branches.push_back(std::move(v));
  }
  double u = uniform01(rng), acc = 0.0;
  int last = -1;
  for (std::size_t o = 0; o < probs.size(); ++o) {
    if (probs[o] < kZeroBranch) continue;
    last = static_cast<int>(o);
    acc += probs[o];
    if (u < acc) break;
  }
  if (last < 0) throw std::runtime_error("measurement has no nonzero branch");
  Vec post = branches[static_cast<std::size_t>(last)] / std::sqrt(probs[static_cast<std::size_t>(last)]);
  return {last, probs[static_cast<std::size_t>(last)], std::move(post)};
}

MeasureResultMixed measure(const Mat& rho, const std::vector<Mat>& kraus, const std::vector<int>& targets, Rng& rng) {
  const int m = qubit_count(rho.rows());
  std::vector<Mat> branches;
  std::vector<double> probs;
  for (const Mat& k : kraus) {
    Mat s = conjugate_by(rho, m, targets, k);
    probs.push_back(s.trace().real());
    branches.push_back(std::move(s));
  }
  double u = uniform01(rng), acc = 0.0;
  int last = -1;
  for (std::size_t o = 0; o < probs.size(); ++o) {
    if (probs[o] < kZeroBranch) continue;
    last = static_cast<int>(o);
    acc += probs[o];
    if (u < acc) break;
  }
  if (last < 0) throw std::runtime_error("measurement has no nonzero branch");
  const std::size_t l = static_cast<std::size_t>(last);
  return {last, probs[l], branches[l] / probs[l]};
}

}  // namespace qnet
