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

#include "qnet/observables.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "qnet/format.hpp"

namespace qnet {

std::size_t ipow3(int n) {
  std::size_t r = 1;
  for (int i = 0; i < n; ++i) r *= 3;
  return r;
}

std::size_t pauli_string_index(const PauliString& p) {
  std::size_t idx = 0;
  for (Pauli q : p) idx = idx * 3 + static_cast<std::size_t>(q);
  return idx;
}

PauliString pauli_string_from_index(std::size_t index, int n) {
  PauliString p(static_cast<std::size_t>(n));
  for (int l = n - 1; l >= 0; --l) {
    p[static_cast<std::size_t>(l)] = static_cast<Pauli>(index % 3);
    index /= 3;
  }
  return p;
}

PauliString pauli_string_from_text(const std::string& text) {
  PauliString p;
  for (char c : text) p.push_back(pauli_from_char(c));
  return p;
}

std::string pauli_string_text(const PauliString& p) {
  std::string s;
  for (Pauli q : p) s.push_back(pauli_char(q));
  return s;
}

std::size_t bits_index(const Bits& b) {
  std::size_t idx = 0;
  for (int v : b) idx = (idx << 1) | static_cast<std::size_t>(v & 1);
  return idx;
}

Bits bits_from_index(std::size_t index, int n) {
  Bits b(static_cast<std::size_t>(n));
  for (int l = 0; l < n; ++l) b[static_cast<std::size_t>(l)] = static_cast<int>((index >> (n - 1 - l)) & 1u);
  return b;
}

// ---------------------------------------------------------------------------

BasisDistribution BasisDistribution::product(std::vector<std::array<double, 3>> marginals) {
  BasisDistribution d;
  d.kind_ = Kind::Product;
  d.n_ = static_cast<int>(marginals.size());
  for (const auto& m : marginals) {
    for (double v : m)
      if (v < 0.0) throw std::invalid_argument("negative marginal probability");
    if (std::abs(m[0] + m[1] + m[2] - 1.0) > 1e-12) throw std::invalid_argument("marginal does not sum to one");
  }
  d.marginals_ = std::move(marginals);
  return d;
}

BasisDistribution BasisDistribution::uniform(int n) {
  const double t = 1.0 / 3.0;
  return product(std::vector<std::array<double, 3>>(static_cast<std::size_t>(n), {t, t, t}));
}

BasisDistribution BasisDistribution::explicit_table(int n, std::vector<double> table) {
  if (table.size() != ipow3(n)) throw std::invalid_argument("explicit distribution needs 3^n entries");
  double total = 0.0;
  for (double v : table) {
    if (v < 0.0) throw std::invalid_argument("negative probability in explicit distribution");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("explicit distribution does not sum to one");
  BasisDistribution d;
  d.kind_ = Kind::Explicit;
  d.n_ = n;
  d.table_ = std::move(table);
  d.cumulative_.resize(d.table_.size());
  std::partial_sum(d.table_.begin(), d.table_.end(), d.cumulative_.begin());
  return d;
}

BasisDistribution BasisDistribution::generator(int n, Sampler sampler) {
  BasisDistribution d;
  d.kind_ = Kind::Generator;
  d.n_ = n;
  d.sampler_ = std::move(sampler);
  return d;
}

double BasisDistribution::probability(const PauliString& p) const {
  if (static_cast<int>(p.size()) != n_) throw std::invalid_argument("basis string length mismatch");
  switch (kind_) {
    case Kind::Product: {
      double prob = 1.0;
      for (std::size_t l = 0; l < p.size(); ++l) prob *= marginals_[l][static_cast<int>(p[l])];
      return prob;
    }
    case Kind::Explicit:
      return table_[pauli_string_index(p)];
    case Kind::Generator:
      break;
  }
  throw std::logic_error("generator distributions are not enumerable");
}

void BasisDistribution::sample_into(Rng& rng, PauliString& out) const {
  out.resize(static_cast<std::size_t>(n_));
  switch (kind_) {
    case Kind::Product:
      for (int l = 0; l < n_; ++l) {
        const auto& m = marginals_[static_cast<std::size_t>(l)];
        double u = uniform01(rng);
        out[static_cast<std::size_t>(l)] = u < m[0] ? Pauli::X : (u < m[0] + m[1] ? Pauli::Y : Pauli::Z);
      }
      return;
    case Kind::Explicit: {
      double u = uniform01(rng) * cumulative_.back();
      auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
      std::size_t idx = static_cast<std::size_t>(it - cumulative_.begin());
      if (idx >= table_.size()) idx = table_.size() - 1;
      while (table_[idx] == 0.0 && idx > 0) --idx;
      PauliString p = pauli_string_from_index(idx, n_);
      out.assign(p.begin(), p.end());
      return;
    }
    case Kind::Generator: {
      PauliString p = sampler_(rng);
      if (static_cast<int>(p.size()) != n_) throw std::runtime_error("generator returned a wrong-length basis string");
      out.assign(p.begin(), p.end());
      return;
    }
  }
}

PauliString BasisDistribution::sample(Rng& rng) const {
  PauliString p;
  sample_into(rng, p);
  return p;
}

void ObservableSpec::validate() const {
  if (n < 1) throw std::invalid_argument("observable needs at least one party");
  if (distribution.n() != n) throw std::invalid_argument("distribution party count differs from spec");
  if (!weight.eval) throw std::invalid_argument("observable has no weighting function");
  if (!(weight.bound > 0.0)) throw std::invalid_argument("weight bound must be positive");
  const std::size_t nb = std::size_t{1} << n;
  const std::size_t np = ipow3(n);
  if (nb * np > 1000000) return;
  for (std::size_t pi = 0; pi < np; ++pi) {
    PauliString p = pauli_string_from_index(pi, n);
    for (std::size_t bi = 0; bi < nb; ++bi) {
      double w = weight.eval(bits_from_index(bi, n), p);
      if (std::abs(w) > weight.bound + 1e-12)
        throw std::invalid_argument("weight exceeds its declared bound at P=" + pauli_string_text(p));
    }
  }
}

WeightTable::WeightTable(const ObservableSpec& spec) {
  const int n = spec.n;
  nb_ = std::size_t{1} << n;
  const std::size_t np = ipow3(n);
  values_.resize(nb_ * np);
  for (std::size_t pi = 0; pi < np; ++pi) {
    PauliString p = pauli_string_from_index(pi, n);
    for (std::size_t bi = 0; bi < nb_; ++bi) values_[pi * nb_ + bi] = spec.weight.eval(bits_from_index(bi, n), p);
  }
}

// ---------------------------------------------------------------------------

namespace {

void rotate_all(Mat& m, int n, const PauliString& p) {
  for (int l = 0; l < n; ++l) {
    Pauli q = p[static_cast<std::size_t>(l)];
    if (q == Pauli::Z) continue;
    m = conjugate_by(m, n, {l}, pauli_basis(q));
  }
}

}  // namespace

Mat build_L(const ObservableSpec& spec, int cap) {
  const int n = spec.n;
  if (n > cap) throw std::invalid_argument("observable exceeds the dense cap");
  if (!spec.distribution.enumerable()) throw std::invalid_argument("distribution is not enumerable");
  const std::size_t nb = std::size_t{1} << n;
  const long d = static_cast<long>(nb);
  Mat total = Mat::Zero(d, d);
  for (std::size_t pi = 0; pi < ipow3(n); ++pi) {
    PauliString p = pauli_string_from_index(pi, n);
    const double prob = spec.distribution.probability(p);
    if (prob == 0.0) continue;
    Mat diag = Mat::Zero(d, d);
    for (std::size_t bi = 0; bi < nb; ++bi)
      diag(static_cast<long>(bi), static_cast<long>(bi)) = spec.weight.eval(bits_from_index(bi, n), p);
    rotate_all(diag, n, p);
    total += prob * diag;
  }
  return total;
}

Mat k_operator() {
  const Mat& x = pauli_matrix(Pauli::X);
  const Mat& y = pauli_matrix(Pauli::Y);
  const Mat& z = pauli_matrix(Pauli::Z);
  return kron(x, x) - kron(y, y) + kron(z, z);
}

ObservableSpec braiding_spec() {
  std::vector<double> table(9, 0.0);
  table[pauli_string_index({Pauli::X, Pauli::X})] = 1.0 / 3.0;
  table[pauli_string_index({Pauli::Y, Pauli::Y})] = 1.0 / 3.0;
  table[pauli_string_index({Pauli::Z, Pauli::Z})] = 1.0 / 3.0;
  ObservableSpec s;
  s.n = 2;
  s.distribution = BasisDistribution::explicit_table(2, table);
  s.weight.name = "braiding";
  s.weight.bound = 2.0;
  s.weight.eval = [](const Bits& b, const PauliString& p) {
    const double sy = p[0] == Pauli::Y ? -1.0 : 1.0;
    const double sb = ((b[0] + b[1]) & 1) ? -1.0 : 1.0;
    return 1.0 - sy * sb;
  };
  return s;
}

ObservableSpec parity_spec(const BasisDistribution& dist) {
  ObservableSpec s;
  s.n = dist.n();
  s.distribution = dist;
  s.weight.name = "parity";
  s.weight.bound = 1.0;
  s.weight.eval = [](const Bits& b, const PauliString&) {
    int parity = 0;
    for (int v : b) parity ^= v & 1;
    return parity ? -1.0 : 1.0;
  };
  return s;
}

ObservableSpec constant_spec(int n, double value) {
  ObservableSpec s;
  s.n = n;
  s.distribution = BasisDistribution::uniform(n);
  s.weight.name = "constant";
  s.weight.bound = std::max(std::abs(value), 1e-300);
  s.weight.eval = [value](const Bits&, const PauliString&) { return value; };
  return s;
}

// ---------------------------------------------------------------------------

ConditionalState conditional_state(const Vec& psi, int k, const Bits& b_rest, const PauliString& p_rest) {
  const int n = qubit_count(psi.size());
  if (k < 0 || k >= n) throw std::out_of_range("conditional qubit out of range");
  if (static_cast<int>(b_rest.size()) != n - 1 || static_cast<int>(p_rest.size()) != n - 1)
    throw std::invalid_argument("conditioning strings must have length n-1");
  Vec v = psi;
  std::uint64_t base = 0;
  for (int l = 0, r = 0; l < n; ++l) {
    if (l == k) continue;
    const std::size_t ri = static_cast<std::size_t>(r++);
    if (p_rest[ri] != Pauli::Z) apply_to_vector(v, n, {l}, pauli_basis(p_rest[ri]).adjoint());
    if (b_rest[ri] & 1) base |= std::uint64_t{1} << (n - 1 - l);
  }
  const std::uint64_t kbit = std::uint64_t{1} << (n - 1 - k);
  ConditionalState out;
  out.state = Vec::Zero(2);
  out.state(0) = v(static_cast<long>(base));
  out.state(1) = v(static_cast<long>(base | kbit));
  const double nrm = out.state.norm();
  if (nrm < 1e-14) {
    out.state.setZero();
    out.valid = false;
  } else {
    out.state /= nrm;
    out.valid = true;
  }
  return out;
}

double omega_k(const Vec& psi, int k, const Bits& b, const PauliString& p) {
  const int n = qubit_count(psi.size());
  if (static_cast<int>(b.size()) != n || static_cast<int>(p.size()) != n)
    throw std::invalid_argument("outcome and basis strings must have length n");
  Bits b_rest;
  PauliString p_rest;
  for (int l = 0; l < n; ++l) {
    if (l == k) continue;
    b_rest.push_back(b[static_cast<std::size_t>(l)]);
    p_rest.push_back(p[static_cast<std::size_t>(l)]);
  }
  ConditionalState c = conditional_state(psi, k, b_rest, p_rest);
  if (!c.valid) return 0.0;
  const Mat& sigma = pauli_matrix(p[static_cast<std::size_t>(k)]);
  const double sign = (b[static_cast<std::size_t>(k)] & 1) ? -1.0 : 1.0;
  Mat proj = 0.5 * (Mat::Identity(2, 2) + sign * sigma);
  const double q = (c.state.adjoint() * proj * c.state)(0, 0).real();
  return 3.0 * q - 1.0;
}

double omega_shadow(const Vec& psi, int k, const Bits& b, Pauli p) {
  const int n = qubit_count(psi.size());
  PauliString basis(static_cast<std::size_t>(n), Pauli::Z);
  basis[static_cast<std::size_t>(k)] = p;
  return omega_k(psi, k, b, basis);
}

double omega_avg(const Vec& psi, const Bits& b, const PauliString& p) {
  const int n = qubit_count(psi.size());
  double acc = 0.0;
  for (int k = 0; k < n; ++k) acc += omega_k(psi, k, b, p);
  return acc / n;
}

Mat build_L_psi(const Vec& psi) {
  const int n = qubit_count(psi.size());
  const long d = psi.size();
  Mat out = Mat::Zero(d, d);
  for (int k = 0; k < n; ++k) {
    const std::uint64_t kbit = std::uint64_t{1} << (n - 1 - k);
    for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(d); ++i) {
      if (i & kbit) continue;
      const long i0 = static_cast<long>(i), i1 = static_cast<long>(i | kbit);
      cplx a0 = psi(i0), a1 = psi(i1);
      const double nrm = std::sqrt(std::norm(a0) + std::norm(a1));
      if (nrm < 1e-14) continue;
      a0 /= nrm;
      a1 /= nrm;
      out(i0, i0) += std::norm(a0) / n;
      out(i1, i1) += std::norm(a1) / n;
      out(i0, i1) += a0 * std::conj(a1) / static_cast<double>(n);
      out(i1, i0) += a1 * std::conj(a0) / static_cast<double>(n);
    }
  }
  return out;
}

Mat build_L_psi_rotated(const Vec& psi, const PauliString& p) {
  const int n = qubit_count(psi.size());
  if (static_cast<int>(p.size()) != n) throw std::invalid_argument("basis string length mismatch");
  Vec rotated = psi;
  for (int l = 0; l < n; ++l)
    if (p[static_cast<std::size_t>(l)] != Pauli::Z)
      apply_to_vector(rotated, n, {l}, pauli_basis(p[static_cast<std::size_t>(l)]).adjoint());
  Mat out = build_L_psi(rotated);
  rotate_all(out, n, p);
  return out;
}

namespace {

constexpr std::size_t kMPsiBlock = 27;

Mat m_psi_block(const Vec& psi, int n, std::size_t begin, std::size_t end) {
  Mat acc = Mat::Zero(psi.size(), psi.size());
  for (std::size_t pi = begin; pi < end; ++pi) acc += build_L_psi_rotated(psi, pauli_string_from_index(pi, n));
  return acc;
}

}  // namespace

ObservableEstimate build_M_psi_exact(const Vec& psi) {
  const int n = qubit_count(psi.size());
  if (n > kExactMPsiCap) throw std::invalid_argument("exact M_psi is limited to small registers");
  const std::size_t total = ipow3(n);
  const std::size_t blocks = (total + kMPsiBlock - 1) / kMPsiBlock;
  std::vector<Mat> partial(blocks);
#pragma omp parallel for schedule(dynamic)
  for (long bi = 0; bi < static_cast<long>(blocks); ++bi) {
    const std::size_t b = static_cast<std::size_t>(bi);
    partial[b] = m_psi_block(psi, n, b * kMPsiBlock, std::min(total, (b + 1) * kMPsiBlock));
  }
  Mat acc = Mat::Zero(psi.size(), psi.size());
  for (const Mat& m : partial) acc += m;
  return {acc / static_cast<double>(total), 0.0, static_cast<int>(total), true};
}

ObservableEstimate build_M_psi_exact_serial(const Vec& psi) {
  const int n = qubit_count(psi.size());
  if (n > kExactMPsiCap) throw std::invalid_argument("exact M_psi is limited to small registers");
  const std::size_t total = ipow3(n);
  Mat acc = Mat::Zero(psi.size(), psi.size());
  for (std::size_t pi = 0; pi < total; ++pi) acc += build_L_psi_rotated(psi, pauli_string_from_index(pi, n));
  return {acc / static_cast<double>(total), 0.0, static_cast<int>(total), true};
}

ObservableEstimate build_M_psi_sampled(const Vec& psi, int samples, Rng& rng) {
  if (samples < 2) throw std::invalid_argument("sampled M_psi needs at least two samples");
  const int n = qubit_count(psi.size());
  std::vector<PauliString> draws;
  for (int s = 0; s < samples; ++s) {
    PauliString p(static_cast<std::size_t>(n));
    for (auto& q : p) q = static_cast<Pauli>(uniform_int(rng, 3));
    draws.push_back(std::move(p));
  }
  std::vector<Mat> terms(static_cast<std::size_t>(samples));
#pragma omp parallel for schedule(dynamic)
  for (int s = 0; s < samples; ++s)
    terms[static_cast<std::size_t>(s)] = build_L_psi_rotated(psi, draws[static_cast<std::size_t>(s)]);
  Mat mean = Mat::Zero(psi.size(), psi.size());
  for (const Mat& t : terms) mean += t;
  mean /= samples;
  double ss = 0.0;
  for (const Mat& t : terms) ss += (t - mean).squaredNorm();
  const double se = std::sqrt(ss / (static_cast<double>(samples) * (samples - 1)));
  return {mean, se, samples, false};
}

ObservableSpec shadow_overlap_spec(const Vec& psi) {
  const int n = qubit_count(psi.size());
  std::vector<double> table(ipow3(n), 0.0);
  table[ipow3(n) - 1] = 1.0 / 3.0;  // all Z
  for (int k = 0; k < n; ++k)
    for (Pauli q : {Pauli::X, Pauli::Y}) {
      PauliString p(static_cast<std::size_t>(n), Pauli::Z);
      p[static_cast<std::size_t>(k)] = q;
      table[pauli_string_index(p)] = 1.0 / (3.0 * n);
    }
  ObservableSpec s;
  s.n = n;
  s.distribution = BasisDistribution::explicit_table(n, table);
  s.weight.name = "shadow_overlap";
  s.weight.bound = 2.0;
  s.weight.eval = [psi, n](const Bits& b, const PauliString& p) {
    int off = -1, count = 0;
    for (int l = 0; l < n; ++l)
      if (p[static_cast<std::size_t>(l)] != Pauli::Z) {
        off = l;
        ++count;
      }
    if (count == 0) return omega_avg(psi, b, p);
    if (count == 1) return omega_k(psi, off, b, p);
    return 0.0;
  };
  return s;
}

ObservableSpec random_basis_spec(const Vec& psi) {
  const int n = qubit_count(psi.size());
  ObservableSpec s;
  s.n = n;
  s.distribution = BasisDistribution::uniform(n);
  s.weight.name = "random_basis_overlap";
  s.weight.bound = 2.0;
  s.weight.eval = [psi](const Bits& b, const PauliString& p) { return omega_avg(psi, b, p); };
  return s;
}

double spectral_gap(const Mat& h) {
  if (h.rows() < 2) throw std::invalid_argument("spectral gap needs dimension at least two");
  RVec v = eigh(h).values;
  const double top = v(v.size() - 1);
  for (long i = v.size() - 2; i >= 0; --i)
    if (v(i) < top - 1e-9) return top - v(i);
  return 0.0;
}

void write_observable_csv(std::ostream& os, const Mat& m) {
  for (long i = 0; i < m.rows(); ++i) {
    for (long j = 0; j < m.cols(); ++j) {
      if (j) os << ',';
      os << format_double(m(i, j).real()) << ',' << format_double(m(i, j).imag());
    }
    os << '\n';
  }
}

}  // namespace qnet
