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

#include "qnet/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace qnet {

std::string setting_text(int x) {
  if (x >= 0 && x <= 5) return std::to_string(x);
  switch (x) {
    case kRight: return "right";
    case kLeft: return "left";
    case kTele: return "tele";
    case kIdle: return "idle";
    default: throw std::invalid_argument("unknown setting " + std::to_string(x));
  }
}

std::string strategy_kind_text(StrategyKind k) {
  switch (k) {
    case StrategyKind::Ideal: return "ideal";
    case StrategyKind::Rotated: return "rotated";
    case StrategyKind::Transposed: return "transposed";
    case StrategyKind::Garbage: return "garbage";
    case StrategyKind::Adaptive: return "adaptive";
  }
  return "?";
}

StrategyKind strategy_kind_from_text(const std::string& s) {
  if (s == "ideal") return StrategyKind::Ideal;
  if (s == "rotated") return StrategyKind::Rotated;
  if (s == "transposed") return StrategyKind::Transposed;
  if (s == "garbage") return StrategyKind::Garbage;
  if (s == "adaptive") return StrategyKind::Adaptive;
  throw std::invalid_argument("unknown strategy kind '" + s + "'");
}

std::string engine_text(EngineKind e) { return e == EngineKind::Full ? "full" : "factored"; }

DeviceStrategy DeviceStrategy::rotated(double theta) {
  DeviceStrategy s;
  s.kind = StrategyKind::Rotated;
  s.angle = theta;
  return s;
}

DeviceStrategy DeviceStrategy::transposed() {
  DeviceStrategy s;
  s.kind = StrategyKind::Transposed;
  return s;
}

DeviceStrategy DeviceStrategy::garbage() {
  DeviceStrategy s;
  s.kind = StrategyKind::Garbage;
  return s;
}

DeviceStrategy DeviceStrategy::adaptive(std::string rule, StrategyKind first, StrategyKind second) {
  DeviceStrategy s;
  s.kind = StrategyKind::Adaptive;
  s.rule = std::move(rule);
  s.choices = {first, second};
  return s;
}

int DeviceStrategy::select(const std::vector<RoundTranscript>& history, int party) const {
  if (!is_adaptive()) return 0;
  if (selector) {
    int c = selector(history, party);
    if (c != 0 && c != 1) throw std::runtime_error("adaptive selector must return 0 or 1");
    return c;
  }
  if (rule == "alternate") return static_cast<int>(history.size() & 1u);
  if (rule == "parity") {
    int parity = 0;
    for (const auto& t : history) parity ^= t.b[static_cast<std::size_t>(party)] & 1;
    return parity;
  }
  throw std::invalid_argument("unknown adaptive rule '" + rule + "'");
}

DeviceStrategy DeviceStrategy::resolve(int choice) const {
  if (!is_adaptive()) return *this;
  DeviceStrategy s;
  s.kind = choices[static_cast<std::size_t>(choice)];
  s.angle = angle;
  return s;
}

std::uint64_t RoundTranscript::code() const {
  std::uint64_t c = 0;
  for (std::size_t l = 0; l < a.size(); ++l)
    c |= (static_cast<std::uint64_t>(a[l] & 3) | (static_cast<std::uint64_t>(b[l] & 1) << 2)) << (3 * l);
  return c;
}

RoundTranscript RoundTranscript::from_code(const Settings& s, std::uint64_t code) {
  RoundTranscript t;
  t.settings = s;
  const int n = static_cast<int>(s.x.size());
  t.a.resize(static_cast<std::size_t>(n));
  t.b.resize(static_cast<std::size_t>(n));
  for (int l = 0; l < n; ++l) {
    t.a[static_cast<std::size_t>(l)] = outcome_a(code, l);
    t.b[static_cast<std::size_t>(l)] = outcome_b(code, l);
  }
  return t;
}

NetworkModel NetworkModel::ideal(const DensityOperator& target) {
  NetworkModel m;
  m.n = target.num_qubits();
  m.target = target;
  m.bell_noise.assign(static_cast<std::size_t>(2 * m.n - 1), 0.0);
  m.strategies.assign(static_cast<std::size_t>(m.n), DeviceStrategy::ideal());
  return m;
}

bool NetworkModel::adaptive() const {
  return std::any_of(strategies.begin(), strategies.end(), [](const DeviceStrategy& s) { return s.is_adaptive(); });
}

void NetworkModel::validate() const {
  if (n < 1) throw std::invalid_argument("model needs at least one party");
  if (target.num_qubits() != n) throw std::invalid_argument("target qubit count differs from n");
  if (static_cast<int>(bell_noise.size()) != 2 * n - 1)
    throw std::invalid_argument("bell_noise needs 2n-1 entries");
  for (double p : bell_noise)
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("bell_noise entries must lie in [0,1]");
  if (static_cast<int>(strategies.size()) != n) throw std::invalid_argument("strategies needs n entries");
  for (const auto& s : strategies)
    if (s.is_adaptive())
      for (StrategyKind k : s.choices)
        if (k == StrategyKind::Adaptive) throw std::invalid_argument("adaptive choices must be non-adaptive");
}

// ---------------------------------------------------------------------------

Mat chsh_observable(int x) {
  const Mat& X = pauli_matrix(Pauli::X);
  const Mat& Y = pauli_matrix(Pauli::Y);
  const Mat& Z = pauli_matrix(Pauli::Z);
  const double r = 1.0 / std::sqrt(2.0);
  switch (x) {
    case 0: return r * (X + Z);
    case 1: return r * (X - Z);
    case 2: return r * (X + Y);
    case 3: return r * (X - Y);
    case 4: return r * (Z + Y);
    case 5: return r * (Z - Y);
    default: throw std::invalid_argument("CHSH setting must be in 0..5");
  }
}

Mat noisy_bell_pair(double p) {
  const double w[4] = {1.0 - 0.75 * p, 0.25 * p, 0.25 * p, 0.25 * p};
  Mat rho = Mat::Zero(4, 4);
  const Vec phi = bell_state().amplitudes();
  const Mat* sig[4] = {nullptr, &pauli_matrix(Pauli::X), &pauli_matrix(Pauli::Y), &pauli_matrix(Pauli::Z)};
  for (int k = 0; k < 4; ++k) {
    if (w[k] == 0.0) continue;
    Vec v = phi;
    if (sig[k]) apply_to_vector(v, 2, {0}, *sig[k]);
    rho += w[k] * v * v.adjoint();
  }
  return rho;
}

namespace {

Mat psd_sqrt(const Mat& e) {
  Eigh d = eigh(e);
  Mat out = Mat::Zero(e.rows(), e.cols());
  for (long i = 0; i < d.values.size(); ++i) {
    const double v = std::max(0.0, d.values(i));
    if (v == 0.0) continue;
    out += std::sqrt(v) * d.vectors.col(i) * d.vectors.col(i).adjoint();
  }
  return out;
}

std::vector<Mat> projectors_of(const Mat& basis) {
  std::vector<Mat> out;
  for (long c = 0; c < basis.cols(); ++c) out.push_back(basis.col(c) * basis.col(c).adjoint());
  return out;
}

Mat rotation_y(double theta) {
  Mat r(2, 2);
  r << std::cos(theta / 2), -std::sin(theta / 2), std::sin(theta / 2), std::cos(theta / 2);
  return r;
}

Mat basis_projector(int dim, int index) {
  Mat p = Mat::Zero(dim, dim);
  p(index, index) = 1.0;
  return p;
}

bool missing_register(int n, int party, int x) {
  return (x == kRight && party >= n - 1) || (x == kLeft && party <= 0);
}

}  // namespace

PartyDevice build_party_device(const DeviceStrategy& s, int n, int party) {
  if (s.is_adaptive()) throw std::invalid_argument("resolve adaptive strategies before building devices");
  PartyDevice d;
  const Mat id2 = Mat::Identity(2, 2);
  for (int x = 0; x < kNumSettings; ++x) {
    std::vector<Mat>& e = d.a_povm[static_cast<std::size_t>(x)];
    bool two = false;
    if (x <= 5) {
      if (s.kind == StrategyKind::Garbage) {
        e = {basis_projector(2, 0), basis_projector(2, 1)};
      } else {
        Mat o = chsh_observable(x);
        e = {0.5 * (id2 + o), 0.5 * (id2 - o)};
        if (s.kind == StrategyKind::Rotated) {
          Mat r = rotation_y(s.angle);
          for (Mat& m : e) m = r * m * r.adjoint();
        }
      }
    } else if (x == kIdle) {
      e = {id2};
    } else if (missing_register(n, party, x)) {
      if (s.kind == StrategyKind::Garbage) {
        e = {basis_projector(2, 0), basis_projector(2, 1), Mat::Zero(2, 2), Mat::Zero(2, 2)};
      } else {
        // BSM against a fresh |0> standing in for the absent register.
        for (const Mat& p : bsm_projectors()) e.push_back(p.topLeftCorner(2, 2));
      }
    } else {
      two = true;
      if (s.kind == StrategyKind::Garbage) {
        for (int a = 0; a < 4; ++a) e.push_back(basis_projector(4, a));
      } else {
        e.assign(bsm_projectors().begin(), bsm_projectors().end());
      }
    }
    if (s.kind == StrategyKind::Transposed)
      for (Mat& m : e) m = m.conjugate().eval();
    d.a_two_qubit[static_cast<std::size_t>(x)] = two;
    for (const Mat& m : e) d.a_kraus[static_cast<std::size_t>(x)].push_back(psd_sqrt(m));
  }
  for (int y = 0; y < 3; ++y) {
    std::vector<Mat>& e = d.b_povm[static_cast<std::size_t>(y)];
    if (s.kind == StrategyKind::Garbage) {
      e = {basis_projector(2, 0), basis_projector(2, 1)};
    } else {
      e = projectors_of(pauli_basis(static_cast<Pauli>(y)));
      if (s.kind == StrategyKind::Rotated) {
        Mat r = rotation_y(s.angle);
        for (Mat& m : e) m = r * m * r.adjoint();
      }
      if (s.kind == StrategyKind::Transposed)
        for (Mat& m : e) m = m.conjugate().eval();
    }
    for (const Mat& m : e) d.b_kraus[static_cast<std::size_t>(y)].push_back(psd_sqrt(m));
  }
  return d;
}

int correction_flip(int b, Pauli p, int a) {
  const int a0 = a & 1, a1 = (a >> 1) & 1;
  int flip = 0;
  switch (p) {
    case Pauli::X: flip = a1; break;
    case Pauli::Z: flip = a0; break;
    case Pauli::Y: flip = a0 ^ a1; break;
  }
  return (b ^ flip) & 1;
}

double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("distribution sizes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
  return 0.5 * acc;
}

namespace {

void check_settings(const Settings& s, int n) {
  if (static_cast<int>(s.x.size()) != n || static_cast<int>(s.y.size()) != n)
    throw std::invalid_argument("settings must have one entry per party");
  for (int l = 0; l < n; ++l) {
    const int x = s.x[static_cast<std::size_t>(l)], y = s.y[static_cast<std::size_t>(l)];
    if (x < 0 || x >= kNumSettings) throw std::invalid_argument("main setting out of range");
    if (y < kNoAux || y > 2) throw std::invalid_argument("auxiliary setting out of range");
  }
}

// Input register of a two-qubit main measurement.
int input_qubit(const SystemLayout& lay, int l, int x) {
  if (x == kTele) return lay.T(l);
  if (x == kRight) return lay.R_right(l);
  return lay.R_left(l);
}

std::array<double, 4> pauli_mixture(double p) { return {1.0 - 0.75 * p, 0.25 * p, 0.25 * p, 0.25 * p}; }

Vec pair_vector(int sigma) {
  Vec v = bell_state().amplitudes();
  if (sigma > 0) apply_to_vector(v, 2, {0}, pauli_matrix(static_cast<Pauli>(sigma - 1)));
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------

FullEngine::FullEngine(const NetworkModel& model) : model_(model), lay_{model.n} {
  model_.validate();
  if (lay_.total() > kMaxDenseQubits) throw std::invalid_argument("model exceeds the dense qubit cap");
  for (int l = 0; l < model_.n; ++l) {
    const DeviceStrategy& s = model_.strategies[static_cast<std::size_t>(l)];
    devices_.push_back({build_party_device(s.resolve(0), model_.n, l), build_party_device(s.resolve(1), model_.n, l)});
  }
  Eigh d = eigh(model_.target.matrix());
  for (long i = 0; i < d.values.size(); ++i) {
    if (d.values(i) <= kZeroBranch) continue;
    target_weights_.push_back(d.values(i));
    target_vectors_.push_back(d.vectors.col(i));
  }
  const double total = std::accumulate(target_weights_.begin(), target_weights_.end(), 0.0);
  for (double& w : target_weights_) w /= total;
}

const PartyDevice& FullEngine::device(int l, const std::vector<RoundTranscript>& history) const {
  const DeviceStrategy& s = model_.strategies[static_cast<std::size_t>(l)];
  return devices_[static_cast<std::size_t>(l)][static_cast<std::size_t>(s.select(history, l))];
}

std::vector<FullEngine::Branch> FullEngine::branches(double cutoff) const {
  const int res = 2 * model_.n - 1;
  std::vector<Branch> out;
  std::vector<int> sigma(static_cast<std::size_t>(res), 0);
  for (std::size_t t = 0; t < target_weights_.size(); ++t) {
    // Odometer over Pauli labels of every resource pair.
    std::fill(sigma.begin(), sigma.end(), 0);
    while (true) {
      double w = target_weights_[t];
      for (int r = 0; r < res && w > cutoff; ++r)
        w *= pauli_mixture(model_.bell_noise[static_cast<std::size_t>(r)])[static_cast<std::size_t>(sigma[static_cast<std::size_t>(r)])];
      if (w > cutoff) {
        Vec v = target_vectors_[t];
        for (int r = 0; r < res; ++r) v = kron(v, pair_vector(sigma[static_cast<std::size_t>(r)]));
        out.push_back({w, std::move(v)});
      }
      int r = 0;
      while (r < res && ++sigma[static_cast<std::size_t>(r)] == 4) sigma[static_cast<std::size_t>(r++)] = 0;
      if (r == res) break;
    }
  }
  return out;
}

RoundTranscript FullEngine::run_round(const Settings& s, Rng& rng, const std::vector<RoundTranscript>& history) const {
  const int n = model_.n;
  check_settings(s, n);
  // Pick a pure component of the resource ensemble.
  std::size_t t = 0;
  {
    double u = uniform01(rng), acc = 0.0;
    for (t = 0; t + 1 < target_weights_.size(); ++t) {
      acc += target_weights_[t];
      if (u < acc) break;
    }
  }
  Vec psi = target_vectors_[t];
  for (int r = 0; r < 2 * n - 1; ++r) {
    auto w = pauli_mixture(model_.bell_noise[static_cast<std::size_t>(r)]);
    double u = uniform01(rng), acc = 0.0;
    int sigma = 0;
    for (sigma = 0; sigma < 3; ++sigma) {
      acc += w[static_cast<std::size_t>(sigma)];
      if (u < acc) break;
    }
    while (w[static_cast<std::size_t>(sigma)] == 0.0) --sigma;
    psi = kron(psi, pair_vector(sigma));
  }
  RoundTranscript tr;
  tr.settings = s;
  tr.a.assign(static_cast<std::size_t>(n), 0);
  tr.b.assign(static_cast<std::size_t>(n), 0);
  for (int l = 0; l < n; ++l) {
    const PartyDevice& dev = device(l, history);
    const int x = s.x[static_cast<std::size_t>(l)], y = s.y[static_cast<std::size_t>(l)];
    if (x != kIdle) {
      std::vector<int> targets = dev.a_two_qubit[static_cast<std::size_t>(x)]
                                     ? std::vector<int>{input_qubit(lay_, l, x), lay_.S(l)}
                                     : std::vector<int>{lay_.S(l)};
      MeasureResult r = measure(psi, dev.a_kraus[static_cast<std::size_t>(x)], targets, rng);
      tr.a[static_cast<std::size_t>(l)] = r.outcome;
      psi = std::move(r.state);
    }
    if (y != kNoAux) {
      MeasureResult r = measure(psi, dev.b_kraus[static_cast<std::size_t>(y)], {lay_.B(l)}, rng);
      tr.b[static_cast<std::size_t>(l)] = r.outcome;
      psi = std::move(r.state);
    }
  }
  return tr;
}

std::vector<double> FullEngine::distribution(const Settings& s, const std::vector<RoundTranscript>& history) const {
  const int n = model_.n;
  check_settings(s, n);
  const int m = lay_.total();
  struct Step {
    const std::vector<Mat>* kraus;
    std::vector<int> targets;
    int shift;
  };
  std::vector<Step> steps;
  for (int l = 0; l < n; ++l) {
    const PartyDevice& dev = device(l, history);
    const int x = s.x[static_cast<std::size_t>(l)], y = s.y[static_cast<std::size_t>(l)];
    if (x != kIdle) {
      std::vector<int> targets = dev.a_two_qubit[static_cast<std::size_t>(x)]
                                     ? std::vector<int>{input_qubit(lay_, l, x), lay_.S(l)}
                                     : std::vector<int>{lay_.S(l)};
      steps.push_back({&dev.a_kraus[static_cast<std::size_t>(x)], targets, 3 * l});
    }
    if (y != kNoAux) steps.push_back({&dev.b_kraus[static_cast<std::size_t>(y)], {lay_.B(l)}, 3 * l + 2});
  }
  std::vector<double> dist(std::size_t{1} << (3 * n), 0.0);
  std::function<void(std::size_t, const Vec&, std::uint64_t, double)> dfs = [&](std::size_t i, const Vec& v,
                                                                                 std::uint64_t code, double w) {
    const double nrm = v.squaredNorm();
    if (nrm < 1e-30) return;
    if (i == steps.size()) {
      dist[code] += w * nrm;
      return;
    }
    const Step& st = steps[i];
    for (std::size_t o = 0; o < st.kraus->size(); ++o) {
      Vec next = v;
      apply_to_vector(next, m, st.targets, (*st.kraus)[o]);
      dfs(i + 1, next, code | (static_cast<std::uint64_t>(o) << st.shift), w);
    }
  };
  for (const Branch& br : branches(0.0)) dfs(0, br.state, 0, br.weight);
  return dist;
}

// ---------------------------------------------------------------------------

std::size_t FactoredEngine::Table::sample(double u) const {
  const double v = u * cdf.back();
  auto it = std::upper_bound(cdf.begin(), cdf.end(), v);
  std::size_t i = static_cast<std::size_t>(it - cdf.begin());
  return i < cdf.size() ? i : cdf.size() - 1;
}

namespace {

using Table = FactoredEngine::Table;

void table_add(Table& t, double p, std::uint64_t code) {
  if (!(p > 0.0)) return;
  t.prob.push_back(p);
  t.code.push_back(code);
}

void table_finish(Table& t) {
  t.cdf.resize(t.prob.size());
  std::partial_sum(t.prob.begin(), t.prob.end(), t.cdf.begin());
  if (t.prob.empty()) throw std::runtime_error("cluster has no outcome with positive probability");
}

// Probability of a product of POVM elements on disjoint qubits of rho.
double joint_probability(const Mat& rho, int m, const std::vector<std::pair<std::vector<int>, const Mat*>>& ops) {
  Mat acc = rho;
  for (const auto& [targets, op] : ops) acc = apply_left(acc, m, targets, *op);
  return acc.trace().real();
}

}  // namespace

FactoredEngine::FactoredEngine(const NetworkModel& model) : model_(model), lay_{model.n} {
  model_.validate();
  if (model_.adaptive()) throw std::invalid_argument("factored engine does not support adaptive strategies");
  const int n = model_.n;
  for (int l = 0; l < n; ++l) devices_.push_back(build_party_device(model_.strategies[static_cast<std::size_t>(l)], n, l));
  for (int l = 0; l < n; ++l) pair_states_.push_back(noisy_bell_pair(model_.bell_noise[static_cast<std::size_t>(lay_.pair_noise(l))]));
  for (int j = 0; j + 1 < n; ++j) link_states_.push_back(noisy_bell_pair(model_.bell_noise[static_cast<std::size_t>(lay_.link_noise(j))]));

  // Pair clusters: (S_l, B_l) measured alone.
  pair_tables_.resize(static_cast<std::size_t>(n * kNumSettings * 4));
  for (int l = 0; l < n; ++l) {
    const PartyDevice& dev = devices_[static_cast<std::size_t>(l)];
    for (int x = 0; x < kNumSettings; ++x) {
      if (x == kTele || dev.a_two_qubit[static_cast<std::size_t>(x)]) continue;
      for (int y = kNoAux; y <= 2; ++y) {
        Table& t = pair_tables_[static_cast<std::size_t>((l * kNumSettings + x) * 4 + y + 1)];
        const auto& ea = dev.a_povm[static_cast<std::size_t>(x)];
        const Mat id = Mat::Identity(2, 2);
        const std::size_t nb = y == kNoAux ? 1 : 2;
        for (std::size_t a = 0; a < ea.size(); ++a)
          for (std::size_t b = 0; b < nb; ++b) {
            const Mat& eb = y == kNoAux ? id : dev.b_povm[static_cast<std::size_t>(y)][b];
            const double p = joint_probability(pair_states_[static_cast<std::size_t>(l)], 2, {{{0}, &ea[a]}, {{1}, &eb}});
            table_add(t, p, (static_cast<std::uint64_t>(a) | (static_cast<std::uint64_t>(b) << 2)) << (3 * l));
          }
        table_finish(t);
      }
    }
  }

  // Link clusters: the link plus whichever adjacent pairs teleport it.
  link_tables_.resize(static_cast<std::size_t>(std::max(0, n - 1) * 25));
  for (int j = 0; j + 1 < n; ++j) {
    const PartyDevice& dl = devices_[static_cast<std::size_t>(j)];
    const PartyDevice& dr = devices_[static_cast<std::size_t>(j + 1)];
    for (int yl = -2; yl <= 2; ++yl)
      for (int yr = -2; yr <= 2; ++yr) {
        if (yl == -2 && yr == -2) continue;
        Table& t = link_tables_[static_cast<std::size_t>(j * 25 + (yl + 2) * 5 + (yr + 2))];
        Mat rho = link_states_[static_cast<std::size_t>(j)];
        int m = 2, sl = -1, sr = -1;
        if (yl != -2) {
          rho = kron(rho, pair_states_[static_cast<std::size_t>(j)]);
          sl = m;
          m += 2;
        }
        if (yr != -2) {
          rho = kron(rho, pair_states_[static_cast<std::size_t>(j + 1)]);
          sr = m;
          m += 2;
        }
        const Mat id = Mat::Identity(2, 2);
        const std::size_t al_n = yl == -2 ? 1 : 4, ar_n = yr == -2 ? 1 : 4;
        const std::size_t bl_n = yl < 0 ? 1 : 2, br_n = yr < 0 ? 1 : 2;
        for (std::size_t al = 0; al < al_n; ++al)
          for (std::size_t bl = 0; bl < bl_n; ++bl)
            for (std::size_t ar = 0; ar < ar_n; ++ar)
              for (std::size_t br = 0; br < br_n; ++br) {
                std::vector<std::pair<std::vector<int>, const Mat*>> ops;
                std::uint64_t code = 0;
                if (yl != -2) {
                  ops.push_back({{0, sl}, &dl.a_povm[kRight][al]});
                  ops.push_back({{sl + 1}, yl >= 0 ? &dl.b_povm[static_cast<std::size_t>(yl)][bl] : &id});
                  code |= (static_cast<std::uint64_t>(al) | (static_cast<std::uint64_t>(bl) << 2)) << (3 * j);
                }
                if (yr != -2) {
                  ops.push_back({{1, sr}, &dr.a_povm[kLeft][ar]});
                  ops.push_back({{sr + 1}, yr >= 0 ? &dr.b_povm[static_cast<std::size_t>(yr)][br] : &id});
                  code |= (static_cast<std::uint64_t>(ar) | (static_cast<std::uint64_t>(br) << 2)) << (3 * (j + 1));
                }
                table_add(t, joint_probability(rho, m, ops), code);
              }
        table_finish(t);
      }
  }

  std::size_t slots = 1;
  for (int l = 0; l < n && slots <= 390625; ++l) slots *= 5;
  if (slots <= 390625) {
    target_slot_count_ = slots;
    target_slots_ = std::make_unique<std::atomic<const Table*>[]>(slots);
    for (std::size_t i = 0; i < slots; ++i) target_slots_[i].store(nullptr, std::memory_order_relaxed);
  }
}

FactoredEngine::~FactoredEngine() = default;

const FactoredEngine::Table& FactoredEngine::pair_table(int l, int x, int y) const {
  return pair_tables_[static_cast<std::size_t>((l * kNumSettings + x) * 4 + y + 1)];
}

const FactoredEngine::Table& FactoredEngine::link_table(int j, int yl, int yr) const {
  return link_tables_[static_cast<std::size_t>(j * 25 + (yl + 2) * 5 + (yr + 2))];
}

namespace {

// Contraction matrices for one teleporting party: M[t,t'] = sum_{s,s'}
// E_a[(t',s'),(t,s)] sigma_b[s,s'] with sigma_b the pair state after the
// auxiliary outcome b.
std::vector<Mat> tele_maps(const PartyDevice& dev, const Mat& pair, int y) {
  std::vector<Mat> out;
  const Mat id = Mat::Identity(2, 2);
  const std::size_t nb = y == kNoAux ? 1 : 2;
  for (std::size_t a = 0; a < 4; ++a) {
    const Mat& ea = dev.a_povm[kTele][a];
    for (std::size_t b = 0; b < nb; ++b) {
      const Mat& eb = y == kNoAux ? id : dev.b_povm[static_cast<std::size_t>(y)][b];
      Mat sigma = Mat::Zero(2, 2);
      for (int s = 0; s < 2; ++s)
        for (int sp = 0; sp < 2; ++sp)
          for (int be = 0; be < 2; ++be)
            for (int bp = 0; bp < 2; ++bp) sigma(s, sp) += eb(bp, be) * pair(s * 2 + be, sp * 2 + bp);
      Mat mm = Mat::Zero(2, 2);
      for (int t = 0; t < 2; ++t)
        for (int tp = 0; tp < 2; ++tp)
          for (int s = 0; s < 2; ++s)
            for (int sp = 0; sp < 2; ++sp) mm(t, tp) += ea(tp * 2 + sp, t * 2 + s) * sigma(s, sp);
      out.push_back(mm);
    }
  }
  return out;
}

Mat contract_first(const Mat& rho, const Mat& mm) {
  const long h = rho.rows() / 2;
  Mat out = Mat::Zero(h, h);
  for (int t = 0; t < 2; ++t)
    for (int tp = 0; tp < 2; ++tp)
      if (mm(t, tp) != cplx(0.0)) out.noalias() += mm(t, tp) * rho.block(t * h, tp * h, h, h);
  return out;
}

double contract_prob(const Mat& rho, const Mat& mm) {
  const long h = rho.rows() / 2;
  cplx acc = 0.0;
  for (int t = 0; t < 2; ++t)
    for (int tp = 0; tp < 2; ++tp) {
      if (mm(t, tp) == cplx(0.0)) continue;
      cplx tr = 0.0;
      for (long r = 0; r < h; ++r) tr += rho(t * h + r, tp * h + r);
      acc += mm(t, tp) * tr;
    }
  return acc.real();
}

std::uint64_t tele_code(std::size_t idx, int y, int l) {
  const std::uint64_t a = y == kNoAux ? idx : idx / 2;
  const std::uint64_t b = y == kNoAux ? 0 : idx % 2;
  return (a | (b << 2)) << (3 * l);
}

}  // namespace

FactoredEngine::Table FactoredEngine::compute_target_table(const Settings& s) const {
  const int n = model_.n;
  std::vector<int> parties;
  for (int l = 0; l < n; ++l)
    if (s.x[static_cast<std::size_t>(l)] == kTele) parties.push_back(l);
  std::vector<std::vector<Mat>> maps;
  for (int l : parties)
    maps.push_back(tele_maps(devices_[static_cast<std::size_t>(l)], pair_states_[static_cast<std::size_t>(l)], s.y[static_cast<std::size_t>(l)]));
  Table t;
  std::function<void(std::size_t, const Mat&, std::uint64_t)> dfs = [&](std::size_t i, const Mat& rho, std::uint64_t code) {
    if (i == parties.size()) {
      table_add(t, rho.trace().real(), code);
      return;
    }
    const int l = parties[i];
    const int y = s.y[static_cast<std::size_t>(l)];
    for (std::size_t o = 0; o < maps[i].size(); ++o) {
      Mat next = contract_first(rho, maps[i][o]);
      if (next.squaredNorm() == 0.0) continue;
      dfs(i + 1, next, code | tele_code(o, y, l));
    }
  };
  dfs(0, partial_trace(model_.target.matrix(), n, parties), 0);
  table_finish(t);
  return t;
}

const FactoredEngine::Table* FactoredEngine::target_table(const Settings& s) const {
  if (!target_slots_) return nullptr;
  std::size_t key = 0, mult = 1;
  int k = 0;
  for (int l = 0; l < model_.n; ++l, mult *= 5) {
    if (s.x[static_cast<std::size_t>(l)] != kTele) continue;
    key += mult * static_cast<std::size_t>(s.y[static_cast<std::size_t>(l)] + 2);
    ++k;
  }
  if ((std::size_t{1} << (3 * k)) > kTargetTableCap) return nullptr;
  const Table* p = target_slots_[key].load(std::memory_order_acquire);
  if (p) return p;
  std::lock_guard<std::mutex> lock(mutex_);
  p = target_slots_[key].load(std::memory_order_acquire);
  if (p) return p;
  target_store_.push_back(std::make_unique<Table>(compute_target_table(s)));
  p = target_store_.back().get();
  target_slots_[key].store(p, std::memory_order_release);
  return p;
}

std::uint64_t FactoredEngine::sample_target(const Settings& s, Rng& rng) const {
  const int n = model_.n;
  std::vector<int> parties;
  for (int l = 0; l < n; ++l)
    if (s.x[static_cast<std::size_t>(l)] == kTele) parties.push_back(l);
  Mat rho = partial_trace(model_.target.matrix(), n, parties);
  std::uint64_t code = 0;
  for (int l : parties) {
    const int y = s.y[static_cast<std::size_t>(l)];
    std::vector<Mat> maps = tele_maps(devices_[static_cast<std::size_t>(l)], pair_states_[static_cast<std::size_t>(l)], y);
    std::vector<double> p(maps.size());
    double total = 0.0;
    for (std::size_t o = 0; o < maps.size(); ++o) total += p[o] = std::max(0.0, contract_prob(rho, maps[o]));
    double u = uniform01(rng) * total, acc = 0.0;
    std::size_t o = 0;
    for (; o + 1 < maps.size(); ++o) {
      acc += p[o];
      if (u < acc && p[o] > 0.0) break;
    }
    while (p[o] == 0.0 && o > 0) --o;
    rho = contract_first(rho, maps[o]) / p[o];
    code |= tele_code(o, y, l);
  }
  return code;
}

template <typename F>
void FactoredEngine::for_each_cluster(const Settings& s, F&& f) const {
  const int n = model_.n;
  bool tele = false;
  for (int l = 0; l < n; ++l) {
    const int x = s.x[static_cast<std::size_t>(l)];
    if (x == kTele) {
      tele = true;
    } else if (!devices_[static_cast<std::size_t>(l)].a_two_qubit[static_cast<std::size_t>(x)]) {
      f(&pair_table(l, x, s.y[static_cast<std::size_t>(l)]));
    }
  }
  for (int j = 0; j + 1 < n; ++j) {
    const bool inl = s.x[static_cast<std::size_t>(j)] == kRight;
    const bool inr = s.x[static_cast<std::size_t>(j + 1)] == kLeft;
    if (!inl && !inr) continue;
    f(&link_table(j, inl ? s.y[static_cast<std::size_t>(j)] : -2, inr ? s.y[static_cast<std::size_t>(j + 1)] : -2));
  }
  if (tele) f(nullptr);
}

std::uint64_t FactoredEngine::sample_code(const Settings& s, Rng& rng) const {
  std::uint64_t code = 0;
  for_each_cluster(s, [&](const Table* t) {
    if (!t) {
      const Table* tt = target_table(s);
      code |= tt ? tt->code[tt->sample(uniform01(rng))] : sample_target(s, rng);
    } else {
      code |= t->code[t->sample(uniform01(rng))];
    }
  });
  return code;
}

RoundTranscript FactoredEngine::run_round(const Settings& s, Rng& rng) const {
  check_settings(s, model_.n);
  return RoundTranscript::from_code(s, sample_code(s, rng));
}

std::vector<double> FactoredEngine::distribution(const Settings& s) const {
  check_settings(s, model_.n);
  std::vector<std::pair<std::uint64_t, double>> cur{{0, 1.0}};
  for_each_cluster(s, [&](const Table* t) {
    Table local;
    if (!t) {
      t = target_table(s);
      if (!t) {
        local = compute_target_table(s);
        t = &local;
      }
    }
    std::vector<std::pair<std::uint64_t, double>> next;
    next.reserve(cur.size() * t->prob.size());
    for (const auto& [c, p] : cur)
      for (std::size_t i = 0; i < t->prob.size(); ++i) next.push_back({c | t->code[i], p * t->prob[i]});
    cur = std::move(next);
  });
  std::vector<double> dist(std::size_t{1} << (3 * model_.n), 0.0);
  for (const auto& [c, p] : cur) dist[c] += p;
  return dist;
}

RoundTranscript run_round(const NetworkModel& model, const Settings& s, EngineKind engine, Rng& rng) {
  if (engine == EngineKind::Full) return FullEngine(model).run_round(s, rng);
  return FactoredEngine(model).run_round(s, rng);
}

// ---------------------------------------------------------------------------

double epsilon_S(const NetworkModel& model) {
  model.validate();
  double keep = 1.0;
  for (double p : model.bell_noise) keep *= 1.0 - 0.75 * p;
  return 1.0 - keep;
}

namespace {

Mat choi_of(const std::vector<Mat>& povm) {
  const long d = povm.front().rows();
  const long k = static_cast<long>(povm.size());
  Mat j = Mat::Zero(k * d, k * d);
  for (long o = 0; o < k; ++o) j.block(o * d, o * d, d, d) = povm[static_cast<std::size_t>(o)].transpose();
  return j;
}

const std::vector<Mat>& pick_povm(const PartyDevice& d, Side side, int setting) {
  if (side == Side::Main) {
    if (setting < 0 || setting >= kNumSettings) throw std::invalid_argument("main setting out of range");
    return d.a_povm[static_cast<std::size_t>(setting)];
  }
  if (setting < 0 || setting > 2) throw std::invalid_argument("auxiliary setting out of range");
  return d.b_povm[static_cast<std::size_t>(setting)];
}

}  // namespace

double epsilon_M_bound(const DeviceStrategy& s, int n, int party, Side side, int setting) {
  if (s.is_adaptive())
    return std::max(epsilon_M_bound(s.resolve(0), n, party, side, setting), epsilon_M_bound(s.resolve(1), n, party, side, setting));
  const PartyDevice impl = build_party_device(s, n, party);
  const PartyDevice ref = build_party_device(DeviceStrategy::ideal(), n, party);
  const auto& pi = pick_povm(impl, side, setting);
  const auto& pr = pick_povm(ref, side, setting);
  if (pi.size() != pr.size() || pi.front().rows() != pr.front().rows())
    throw std::invalid_argument("measurement dimensions differ");
  const double d = static_cast<double>(pi.front().rows());
  return d * trace_distance(choi_of(pi) / d, choi_of(pr) / d);
}

}  // namespace qnet
