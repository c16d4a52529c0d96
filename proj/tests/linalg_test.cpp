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

#include <gtest/gtest.h>

#include <cmath>

#include "qnet/linalg.hpp"

namespace qnet {
namespace {

Mat random_matrix(long d, Rng& rng) {
  Mat m(d, d);
  for (long i = 0; i < d; ++i)
    for (long j = 0; j < d; ++j) m(i, j) = cplx(standard_normal(rng), standard_normal(rng));
  return m;
}

Mat random_density(int q, Rng& rng) {
  Mat a = random_matrix(1L << q, rng);
  Mat r = a * a.adjoint();
  return r / r.trace().real();
}

// Explicit permutation of qubit positions; perm[new] = old.
Mat permute_qubits(const Mat& op, const std::vector<int>& perm) {
  const int m = static_cast<int>(perm.size());
  const long d = 1L << m;
  Mat p = Mat::Zero(d, d);
  for (long i = 0; i < d; ++i) {
    long j = 0;
    for (int q = 0; q < m; ++q) {
      const int bit = (i >> (m - 1 - perm[static_cast<std::size_t>(q)])) & 1;
      j |= static_cast<long>(bit) << (m - 1 - q);
    }
    p(j, i) = 1.0;
  }
  return p * op * p.adjoint();
}

TEST(Linalg, KronOfPaulisMatchesHandEntries) {
  Mat zx = kron(pauli_matrix(Pauli::Z), pauli_matrix(Pauli::X));
  Mat expect = Mat::Zero(4, 4);
  expect(0, 1) = expect(1, 0) = 1.0;
  expect(2, 3) = expect(3, 2) = -1.0;
  EXPECT_LT((zx - expect).norm(), 1e-15);
}

TEST(Linalg, PauliBasisColumnsAreEigenvectors) {
  for (Pauli p : {Pauli::X, Pauli::Y, Pauli::Z}) {
    const Mat& b = pauli_basis(p);
    const Mat& s = pauli_matrix(p);
    EXPECT_LT((s * b.col(0) - b.col(0)).norm(), 1e-14);
    EXPECT_LT((s * b.col(1) + b.col(1)).norm(), 1e-14);
  }
}

TEST(Linalg, EmbedAgreesWithExplicitPermutation) {
  Rng rng(1);
  const Mat op = random_matrix(4, rng);
  const Mat full = kron(op, identity(1));  // acts on qubits 0,1 of 3
  // op on (2, 0): old qubit 0 -> 2, old 1 -> 0, old 2 -> 1.
  const Mat expect = permute_qubits(full, {1, 2, 0});
  EXPECT_LT((embed(op, {2, 0}, 3) - expect).norm(), 1e-12);
}

TEST(Linalg, ApplyLeftAndConjugateMatchEmbed) {
  Rng rng(2);
  const Mat rho = random_density(3, rng);
  const Mat op = random_matrix(4, rng);
  const Mat e = embed(op, {2, 1}, 3);
  EXPECT_LT((apply_left(rho, 3, {2, 1}, op) - e * rho).norm(), 1e-12);
  EXPECT_LT((conjugate_by(rho, 3, {2, 1}, op) - e * rho * e.adjoint()).norm(), 1e-12);
  Vec v = haar_random_state(3, rng).amplitudes();
  Vec w = v;
  apply_to_vector(w, 3, {2, 1}, op);
  EXPECT_LT((w - e * v).norm(), 1e-12);
}

TEST(Linalg, PartialTraceOfProduct) {
  Rng rng(3);
  const Mat a = random_density(1, rng), b = random_density(2, rng);
  const Mat ab = kron(a, b);
  EXPECT_LT((partial_trace(ab, 3, {0}) - a).norm(), 1e-12);
  EXPECT_LT((partial_trace(ab, 3, {1, 2}) - b).norm(), 1e-12);
  const Mat b1 = partial_trace(b, 2, {1});
  EXPECT_LT((partial_trace(ab, 3, {0, 2}) - kron(a, b1)).norm(), 1e-12);
}

TEST(Linalg, PartialTransposeInvolution) {
  Rng rng(4);
  const Mat h = random_matrix(8, rng);
  EXPECT_LT((partial_transpose(partial_transpose(h, {1}), {1}) - h).norm(), 1e-12);
  EXPECT_LT((partial_transpose(h, {0, 1, 2}) - h.transpose()).norm(), 1e-12);
}

TEST(Linalg, EighSortsAscendingAndReconstructs) {
  Rng rng(5);
  Mat a = random_matrix(6, rng);
  Mat h = a + a.adjoint();
  Eigh e = eigh(h);
  for (long i = 1; i < e.values.size(); ++i) EXPECT_LE(e.values(i - 1), e.values(i));
  Mat back = e.vectors * e.values.cast<cplx>().asDiagonal() * e.vectors.adjoint();
  EXPECT_LT((back - h).norm(), 1e-10);
}

TEST(Linalg, UnitarizeIsUnitaryAndFixesUnitaries) {
  Rng rng(6);
  Mat a = random_matrix(2, rng);
  Mat h = a + a.adjoint();
  Mat u = unitarize(h);
  EXPECT_LT((u.adjoint() * u - Mat::Identity(2, 2)).norm(), 1e-12);
  EXPECT_LT((unitarize(pauli_matrix(Pauli::Y)) - pauli_matrix(Pauli::Y)).norm(), 1e-12);
}

TEST(Linalg, TraceDistanceAndFidelity) {
  Vec zero = Vec::Zero(2), one = Vec::Zero(2);
  zero(0) = 1.0;
  one(1) = 1.0;
  const Mat r0 = zero * zero.adjoint(), r1 = one * one.adjoint();
  EXPECT_NEAR(trace_distance(r0, r1), 1.0, 1e-14);
  EXPECT_NEAR(trace_distance(r0, Mat::Identity(2, 2) * 0.5), 0.5, 1e-14);
  EXPECT_NEAR(fidelity(Mat::Identity(2, 2) * 0.5, zero), 0.5, 1e-14);
}

TEST(Linalg, HaarStatesAreNormalizedAndSpread) {
  Rng rng(7);
  double mean_p0 = 0.0;
  const int trials = 4000;
  for (int t = 0; t < trials; ++t) {
    Vec v = haar_random_state(1, rng).amplitudes();
    EXPECT_NEAR(v.norm(), 1.0, 1e-12);
    mean_p0 += std::norm(v(0));
  }
  // |<0|psi>|^2 is uniform on [0,1] for Haar qubits.
  EXPECT_NEAR(mean_p0 / trials, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / trials));
}

TEST(Linalg, BsmProjectorsFromDefinition) {
  const Vec phi = bell_state().amplitudes();
  Mat sum = Mat::Zero(4, 4);
  for (int a = 0; a < 4; ++a) {
    Mat xz = Mat::Identity(2, 2);
    if (a & 1) xz = pauli_matrix(Pauli::X);
    if (a & 2) xz = xz * pauli_matrix(Pauli::Z);
    Vec v = kron(xz, Mat(Mat::Identity(2, 2))) * phi;
    EXPECT_LT((bsm_projectors()[static_cast<std::size_t>(a)] - v * v.adjoint()).norm(), 1e-14) << a;
    sum += bsm_projectors()[static_cast<std::size_t>(a)];
    const Mat& bu = bsm_unitary(a);
    EXPECT_LT((bu.adjoint() * bu - Mat::Identity(2, 2)).norm(), 1e-14);
  }
  EXPECT_LT((sum - Mat::Identity(4, 4)).norm(), 1e-14);
}

TEST(Linalg, TeleportationRecoversInputWithBsmUnitary) {
  Rng rng(8);
  const Vec psi = haar_random_state(1, rng).amplitudes();
  const Vec full = kron(psi, bell_state().amplitudes());
  for (int a = 0; a < 4; ++a) {
    Mat rho = full * full.adjoint();
    rho = apply_left(rho, 3, {0, 1}, bsm_projectors()[static_cast<std::size_t>(a)]);
    rho = rho * embed(bsm_projectors()[static_cast<std::size_t>(a)], {0, 1}, 3);
    Mat out = partial_trace(rho, 3, {2});
    EXPECT_NEAR(out.trace().real(), 0.25, 1e-12);
    out /= out.trace();
    out = bsm_unitary(a) * out * bsm_unitary(a).adjoint();
    EXPECT_NEAR(fidelity(out, psi), 1.0, 1e-12) << a;
  }
}

TEST(Linalg, DepolarizeFullyMixes) {
  Rng rng(9);
  const Mat rho = random_density(2, rng);
  const Mat out = depolarize(rho, 1.0, {0});
  const Mat expect = kron(Mat(Mat::Identity(2, 2) * 0.5), partial_trace(rho, 2, {1}));
  EXPECT_LT((out - expect).norm(), 1e-12);
  EXPECT_LT((depolarize(rho, 0.0, {0, 1}) - rho).norm(), 1e-14);
}

TEST(Linalg, MeasureFollowsBornRule) {
  Rng rng(10);
  Vec psi(2);
  psi << std::sqrt(0.3), std::sqrt(0.7);
  std::vector<Mat> kraus = {Mat::Zero(2, 2), Mat::Zero(2, 2)};
  kraus[0](0, 0) = 1.0;
  kraus[1](1, 1) = 1.0;
  const int trials = 20000;
  int zeros = 0;
  for (int t = 0; t < trials; ++t) zeros += measure(psi, kraus, {0}, rng).outcome == 0;
  EXPECT_NEAR(static_cast<double>(zeros) / trials, 0.3, 4.0 * std::sqrt(0.21 / trials));
}

TEST(Linalg, QubitCountRejectsNonPowers) {
  EXPECT_EQ(qubit_count(8), 3);
  EXPECT_THROW(qubit_count(6), std::invalid_argument);
}

}  // namespace
}  // namespace qnet
