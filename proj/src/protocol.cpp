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

#include "qnet/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace qnet {

namespace {
const double kTwoRootTwo = 2.0 * std::sqrt(2.0);
constexpr std::size_t kWeightTableCap = 1u << 20;
}  // namespace

std::string verdict_text(Verdict v) { return v == Verdict::Certified ? "CERTIFIED" : "FAILED"; }

void ProtocolConfig::validate() const {
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0,1)");
  if (N < 0) throw std::invalid_argument("N must be nonnegative");
  if (chunk_rounds < 1) throw std::invalid_argument("chunk_rounds must be positive");
  spec.validate();
  if (variant == Variant::Local) {
    if (spec.distribution.kind() != BasisDistribution::Kind::Product)
      throw std::invalid_argument("local variant needs a product basis distribution");
    for (const auto& m : spec.distribution.marginals())
      for (double v : m)
        if (v < marginal_floor) throw std::invalid_argument("local variant marginal below the configured floor");
  }
}

std::array<int, 4> chsh_inputs(int k) {
  switch (k) {
    case 0: return {0, 1, 0, 2};
    case 1: return {3, 2, 0, 1};
    case 2: return {5, 4, 2, 1};
    default: throw std::invalid_argument("CHSH index must be 0, 1 or 2");
  }
}

CounterBank::CounterBank(int n)
    : nI(static_cast<std::size_t>(n * 12), 0),
      eI(static_cast<std::size_t>(n * 12), 0.0),
      nII(static_cast<std::size_t>(std::max(0, n - 1)), 0),
      eII(static_cast<std::size_t>(std::max(0, n - 1)), 0.0),
      n_(n) {}

void CounterBank::merge(const CounterBank& o) {
  if (o.n_ != n_) throw std::invalid_argument("cannot merge banks of different size");
  for (std::size_t i = 0; i < nI.size(); ++i) {
    nI[i] += o.nI[i];
    eI[i] += o.eI[i];
  }
  for (std::size_t i = 0; i < nII.size(); ++i) {
    nII[i] += o.nII[i];
    eII[i] += o.eII[i];
  }
  nIII += o.nIII;
  eIII += o.eIII;
  sIII += o.sIII;
}

void CounterBank::check_invariants(double W) const {
  for (std::size_t i = 0; i < nI.size(); ++i)
    if (nI[i] < 0 || std::abs(eI[i]) > static_cast<double>(nI[i]) + 1e-9) throw std::logic_error("type I counter invariant");
  for (std::size_t i = 0; i < nII.size(); ++i)
    if (nII[i] < 0 || std::abs(eII[i]) > static_cast<double>(nII[i]) + 1e-9) throw std::logic_error("type II counter invariant");
  if (nIII < 0 || std::abs(eIII) > W * static_cast<double>(nIII) * (1 + 1e-12) + 1e-9)
    throw std::logic_error("type III counter invariant");
}

// ---------------------------------------------------------------------------

void sample_settings_local(const ProtocolConfig& config, Rng& rng, Settings& out) {
  const int n = config.spec.n;
  out.x.resize(static_cast<std::size_t>(n));
  out.y.resize(static_cast<std::size_t>(n));
  const double tele = 1.0 - 1.0 / n;
  const auto& marg = config.spec.distribution.marginals();
  for (int l = 0; l < n; ++l) {
    const double u = uniform01(rng);
    int x = kTele;
    if (u >= tele) {
      int idx = static_cast<int>((u - tele) * 8.0 * n);
      idx = std::min(idx, 7);
      x = idx < 6 ? idx : (idx == 6 ? kRight : kLeft);
    }
    out.x[static_cast<std::size_t>(l)] = x;
    const auto& m = marg[static_cast<std::size_t>(l)];
    const double v = uniform01(rng);
    out.y[static_cast<std::size_t>(l)] = v < m[0] ? 0 : (v < m[0] + m[1] ? 1 : 2);
  }
}

Settings sample_settings_local(const ProtocolConfig& config, Rng& rng) {
  Settings s;
  sample_settings_local(config, rng, s);
  return s;
}

int sample_settings_shared(const ProtocolConfig& config, Rng& rng, Settings& out) {
  const int n = config.spec.n;
  out.x.assign(static_cast<std::size_t>(n), kIdle);
  out.y.assign(static_cast<std::size_t>(n), kNoAux);
  const int type = uniform_int(rng, 3);
  if (type == 0) {
    for (int l = 0; l < n; ++l) {
      const int k = uniform_int(rng, 3), i = uniform_int(rng, 2), j = uniform_int(rng, 2);
      const auto in = chsh_inputs(k);
      out.x[static_cast<std::size_t>(l)] = in[static_cast<std::size_t>(i)];
      out.y[static_cast<std::size_t>(l)] = in[static_cast<std::size_t>(2 + j)];
    }
  } else if (type == 1) {
    const int s = uniform_int(rng, 2), y = uniform_int(rng, 3);
    for (int l = s; l + 1 < n; l += 2) {
      out.x[static_cast<std::size_t>(l)] = kRight;
      out.x[static_cast<std::size_t>(l + 1)] = kLeft;
      out.y[static_cast<std::size_t>(l)] = y;
      out.y[static_cast<std::size_t>(l + 1)] = y;
    }
  } else {
    PauliString p;
    config.spec.distribution.sample_into(rng, p);
    for (int l = 0; l < n; ++l) {
      out.x[static_cast<std::size_t>(l)] = kTele;
      out.y[static_cast<std::size_t>(l)] = static_cast<int>(p[static_cast<std::size_t>(l)]);
    }
  }
  return type;
}

Settings sample_settings_shared(const ProtocolConfig& config, Rng& rng, int* type) {
  Settings s;
  const int t = sample_settings_shared(config, rng, s);
  if (type) *type = t;
  return s;
}

// ---------------------------------------------------------------------------

CounterUpdater::CounterUpdater(const ProtocolConfig& config) : config_(&config), n_(config.spec.n) {
  for (auto& row : chsh_j_) row.fill(-1);
  for (int k = 0; k < 3; ++k) {
    const auto in = chsh_inputs(k);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        chsh_j_[static_cast<std::size_t>(in[static_cast<std::size_t>(2 + j)])][static_cast<std::size_t>(in[static_cast<std::size_t>(i)])] =
            (k * 2 + i) * 2 + j;
  }
  accept_.assign(static_cast<std::size_t>(n_ * 3), 1.0);
  if (config.spec.distribution.kind() == BasisDistribution::Kind::Product) {
    const auto& m = config.spec.distribution.marginals();
    for (int l = 0; l + 1 < n_; ++l) {
      double lo = 2.0;
      for (int q = 0; q < 3; ++q) lo = std::min(lo, m[static_cast<std::size_t>(l)][static_cast<std::size_t>(q)] * m[static_cast<std::size_t>(l + 1)][static_cast<std::size_t>(q)]);
      for (int q = 0; q < 3; ++q) {
        const double here = m[static_cast<std::size_t>(l)][static_cast<std::size_t>(q)] * m[static_cast<std::size_t>(l + 1)][static_cast<std::size_t>(q)];
        accept_[static_cast<std::size_t>(l * 3 + q)] = here > 0.0 ? lo / here : 0.0;
      }
    }
  }
  if ((std::size_t{1} << n_) * ipow3(n_) <= kWeightTableCap) table_ = WeightTable(config.spec);
}

double CounterUpdater::weight(std::uint64_t code, const Settings& s) const {
  std::size_t bits = 0, paulis = 0;
  for (int l = 0; l < n_; ++l) {
    const int y = s.y[static_cast<std::size_t>(l)];
    const int f = correction_flip(outcome_b(code, l), static_cast<Pauli>(y), outcome_a(code, l));
    bits = (bits << 1) | static_cast<std::size_t>(f);
    paulis = paulis * 3 + static_cast<std::size_t>(y);
  }
  if (!table_.empty()) return table_(bits, paulis);
  return config_->spec.weight.eval(bits_from_index(bits, n_), pauli_string_from_index(paulis, n_));
}

void CounterUpdater::update(CounterBank& bank, const Settings& s, std::uint64_t code, Rng& rng, int shared_type) const {
  const bool all = shared_type < 0;
  if (all || shared_type == 0) {
    for (int l = 0; l < n_; ++l) {
      const int x = s.x[static_cast<std::size_t>(l)], y = s.y[static_cast<std::size_t>(l)];
      if (x > 5 || y < 0) continue;
      const int packed = chsh_j_[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)];
      if (packed < 0) continue;
      const std::size_t idx = static_cast<std::size_t>(l * 12 + packed);
      bank.nI[idx] += 1;
      bank.eI[idx] += ((outcome_a(code, l) + outcome_b(code, l)) & 1) ? -1.0 : 1.0;
    }
  }
  if (all || shared_type == 1) {
    for (int l = 0; l + 1 < n_; ++l) {
      if (s.x[static_cast<std::size_t>(l)] != kRight || s.x[static_cast<std::size_t>(l + 1)] != kLeft) continue;
      const int y = s.y[static_cast<std::size_t>(l)];
      if (y < 0 || y != s.y[static_cast<std::size_t>(l + 1)]) continue;
      if (all) {
        const double acc = accept_[static_cast<std::size_t>(l * 3 + y)];
        if (acc < 1.0 && !(uniform01(rng) < acc)) continue;
      }
      const Pauli p = static_cast<Pauli>(y);
      const int f0 = correction_flip(outcome_b(code, l), p, outcome_a(code, l));
      const int f1 = correction_flip(outcome_b(code, l + 1), p, outcome_a(code, l + 1));
      const double sign_y = p == Pauli::Y ? -1.0 : 1.0;
      const double sign_f = ((f0 + f1) & 1) ? -1.0 : 1.0;
      bank.nII[static_cast<std::size_t>(l)] += 1;
      bank.eII[static_cast<std::size_t>(l)] -= sign_y * sign_f;
    }
  }
  if (all || shared_type == 2) {
    for (int l = 0; l < n_; ++l)
      if (s.x[static_cast<std::size_t>(l)] != kTele || s.y[static_cast<std::size_t>(l)] < 0) return;
    const double w = weight(code, s);
    bank.nIII += 1;
    bank.eIII += w;
    bank.sIII += w * w;
  }
}

void update_counters(CounterBank& bank, const RoundTranscript& t, const ProtocolConfig& config, Rng& rng, int shared_type) {
  CounterUpdater(config).update(bank, t.settings, t.code(), rng, shared_type);
}

CertificationReport finalize(const CounterBank& bank, const ProtocolConfig& config) {
  const int n = config.spec.n;
  if (bank.n() != n) throw std::invalid_argument("bank size differs from the observable");
  CertificationReport r;
  r.n = n;
  r.variant = config.variant;
  r.N = config.N;
  r.eps = config.eps;
  r.delta = config.delta;
  r.W = config.spec.weight.bound;
  r.counters = bank;
  auto ratio = [](double e, std::int64_t c) { return c == 0 ? 0.0 : e / static_cast<double>(c); };
  double sum_s = 0.0;
  for (int l = 0; l < n; ++l)
    for (int k = 0; k < 3; ++k) {
      double s = 0.0;
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          const std::size_t idx = CounterBank::index_I(l, k, i, j);
          const double c = ratio(bank.eI[idx], bank.nI[idx]);
          s += (i & j) ? -c : c;
        }
      r.S.push_back(s);
      r.vI_lk.push_back(kTwoRootTwo - s);
      sum_s += s;
    }
  r.vI = kTwoRootTwo - sum_s / (3.0 * n);
  double sum_ii = 0.0;
  for (int l = 0; l + 1 < n; ++l) {
    const double q = ratio(bank.eII[static_cast<std::size_t>(l)], bank.nII[static_cast<std::size_t>(l)]);
    r.vII_link.push_back(1.0 + q);
    sum_ii += q;
  }
  r.vII = n > 1 ? 1.0 + sum_ii / (n - 1) : 0.0;
  r.vIII = ratio(bank.eIII, bank.nIII);
  if (bank.nIII > 1) {
    const double m = r.vIII;
    const double var = std::max(0.0, (bank.sIII - bank.nIII * m * m) / static_cast<double>(bank.nIII - 1));
    r.vIII_stderr = std::sqrt(var / static_cast<double>(bank.nIII));
  }
  const double nW = n * r.W;
  r.threshold_I = config.c_I * config.eps * config.eps / (nW * nW);
  r.threshold_II = config.c_II * config.eps / nW;
  r.verdict = (r.vI > r.threshold_I || r.vII > r.threshold_II) ? Verdict::Failed : Verdict::Certified;
  return r;
}

// ---------------------------------------------------------------------------

namespace {

CounterBank run_chunk(const FactoredEngine& engine, const ProtocolConfig& config, const CounterUpdater& upd,
                      std::uint64_t seed, std::int64_t chunk, std::int64_t rounds) {
  Rng rng = derive_rng(seed, {static_cast<std::uint64_t>(chunk)});
  CounterBank bank(config.spec.n);
  Settings s;
  for (std::int64_t r = 0; r < rounds; ++r) {
    int type = -1;
    if (config.variant == Variant::Local)
      sample_settings_local(config, rng, s);
    else
      type = sample_settings_shared(config, rng, s);
    const std::uint64_t code = engine.sample_code(s, rng);
    upd.update(bank, s, code, rng, type);
  }
  return bank;
}

CertificationReport run_sequential_full(const NetworkModel& model, const ProtocolConfig& config, std::uint64_t seed) {
  FullEngine engine(model);
  CounterUpdater upd(config);
  CounterBank total(config.spec.n);
  std::vector<RoundTranscript> history;
  const std::int64_t chunks = (config.N + config.chunk_rounds - 1) / config.chunk_rounds;
  for (std::int64_t c = 0; c < chunks; ++c) {
    Rng rng = derive_rng(seed, {static_cast<std::uint64_t>(c)});
    CounterBank bank(config.spec.n);
    const std::int64_t rounds = std::min(config.chunk_rounds, config.N - c * config.chunk_rounds);
    for (std::int64_t r = 0; r < rounds; ++r) {
      Settings s;
      int type = -1;
      if (config.variant == Variant::Local)
        sample_settings_local(config, rng, s);
      else
        type = sample_settings_shared(config, rng, s);
      RoundTranscript t = engine.run_round(s, rng, history);
      upd.update(bank, s, t.code(), rng, type);
      if (model.adaptive()) history.push_back(std::move(t));
    }
    total.merge(bank);
  }
  return finalize(total, config);
}

void check_compat(const NetworkModel& model, const ProtocolConfig& config) {
  config.validate();
  model.validate();
  if (model.n != config.spec.n) throw std::invalid_argument("model and observable have different party counts");
}

}  // namespace

CertificationReport run_protocol(const NetworkModel& model, const ProtocolConfig& config, std::uint64_t seed) {
  check_compat(model, config);
  CertificationReport rep;
  if (model.adaptive() || config.engine == EngineKind::Full) {
    rep = run_sequential_full(model, config, seed);
  } else {
    FactoredEngine engine(model);
    CounterUpdater upd(config);
    const std::int64_t chunks = (config.N + config.chunk_rounds - 1) / config.chunk_rounds;
    std::vector<CounterBank> banks(static_cast<std::size_t>(chunks));
    int threads = config.threads;
#ifdef _OPENMP
    if (threads <= 0) threads = omp_get_max_threads();
#else
    threads = 1;
#endif
    (void)threads;
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (std::int64_t c = 0; c < chunks; ++c) {
      const std::int64_t rounds = std::min(config.chunk_rounds, config.N - c * config.chunk_rounds);
      banks[static_cast<std::size_t>(c)] = run_chunk(engine, config, upd, seed, c, rounds);
    }
    CounterBank total(config.spec.n);
    for (const auto& b : banks) total.merge(b);
    rep = finalize(total, config);
  }
  rep.seed = seed;
  return rep;
}

CertificationReport run_protocol_serial(const NetworkModel& model, const ProtocolConfig& config, std::uint64_t seed) {
  check_compat(model, config);
  CertificationReport rep;
  if (model.adaptive() || config.engine == EngineKind::Full) {
    rep = run_sequential_full(model, config, seed);
  } else {
    FactoredEngine engine(model);
    CounterUpdater upd(config);
    CounterBank total(config.spec.n);
    const std::int64_t chunks = (config.N + config.chunk_rounds - 1) / config.chunk_rounds;
    for (std::int64_t c = 0; c < chunks; ++c)
      total.merge(run_chunk(engine, config, upd, seed, c, std::min(config.chunk_rounds, config.N - c * config.chunk_rounds)));
    rep = finalize(total, config);
  }
  rep.seed = seed;
  return rep;
}

// ---------------------------------------------------------------------------

double selftest_gap(const Vec& psi, Variant v, int sampled_m, std::uint64_t seed) {
  const int n = qubit_count(psi.size());
  if (v == Variant::Shared) return spectral_gap(build_L_psi(psi));
  if (n <= kExactMPsiCap) return spectral_gap(build_M_psi_exact(psi).matrix);
  Rng rng = derive_rng(seed, {0x4d505349ull});
  return spectral_gap(build_M_psi_sampled(psi, sampled_m, rng).matrix);
}

SelfTestResult run_state_selftest(const Vec& psi, Variant v, double eps_prime, double delta, const NetworkModel& model,
                                  std::uint64_t seed, const SelfTestOptions& opt) {
  if (!(eps_prime > 0.0)) throw std::invalid_argument("eps_prime must be positive");
  const int n = qubit_count(psi.size());
  SelfTestResult out;
  out.gap = opt.gap >= 0.0 ? opt.gap : selftest_gap(psi, v, opt.sampled_m, seed);
  if (!(out.gap > 1e-12)) throw std::invalid_argument("observable has zero spectral gap");
  out.eps_underlying = out.gap * eps_prime * eps_prime;
  ProtocolConfig cfg;
  cfg.variant = v;
  cfg.eps = out.eps_underlying;
  cfg.delta = delta;
  cfg.spec = v == Variant::Local ? random_basis_spec(psi) : shadow_overlap_spec(psi);
  cfg.c_I = opt.c_I;
  cfg.c_II = opt.c_II;
  cfg.chunk_rounds = opt.chunk_rounds;
  cfg.engine = opt.engine;
  cfg.threads = opt.threads;
  if (opt.N > 0) {
    cfg.N = opt.N;
  } else {
    PlanInputs in;
    in.W = cfg.spec.weight.bound;
    in.n = n;
    in.eps = cfg.eps;
    in.delta = delta;
    in.c = opt.c;
    cfg.N = plan_N(v, in);
  }
  out.N = cfg.N;
  out.report = run_protocol(model, cfg, seed);
  out.omega_hat = out.report.vIII;
  out.omega_threshold = 1.0 - out.eps_underlying;
  out.verdict = (out.report.verdict == Verdict::Failed || out.omega_hat < out.omega_threshold) ? Verdict::Failed
                                                                                               : Verdict::Certified;
  return out;
}

// ---------------------------------------------------------------------------

double exact_chsh_value(const DistributionFn& dist, int n, int l, int k) {
  const auto in = chsh_inputs(k);
  double s = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      Settings st;
      st.x.assign(static_cast<std::size_t>(n), kIdle);
      st.y.assign(static_cast<std::size_t>(n), kNoAux);
      st.x[static_cast<std::size_t>(l)] = in[static_cast<std::size_t>(i)];
      st.y[static_cast<std::size_t>(l)] = in[static_cast<std::size_t>(2 + j)];
      const std::vector<double> p = dist(st);
      double corr = 0.0;
      for (std::size_t c = 0; c < p.size(); ++c)
        if (p[c] != 0.0) corr += ((outcome_a(c, l) + outcome_b(c, l)) & 1) ? -p[c] : p[c];
      s += (i & j) ? -corr : corr;
    }
  return s;
}

double exact_v3(const DistributionFn& dist, const ObservableSpec& spec) {
  if (!spec.distribution.enumerable()) throw std::invalid_argument("exact estimator needs an enumerable distribution");
  const int n = spec.n;
  double total = 0.0;
  for (std::size_t pi = 0; pi < ipow3(n); ++pi) {
    const PauliString p = pauli_string_from_index(pi, n);
    const double prob = spec.distribution.probability(p);
    if (prob == 0.0) continue;
    Settings st;
    st.x.assign(static_cast<std::size_t>(n), kTele);
    for (Pauli q : p) st.y.push_back(static_cast<int>(q));
    const std::vector<double> d = dist(st);
    double acc = 0.0;
    for (std::size_t c = 0; c < d.size(); ++c) {
      if (d[c] == 0.0) continue;
      Bits f(static_cast<std::size_t>(n));
      for (int l = 0; l < n; ++l) f[static_cast<std::size_t>(l)] = correction_flip(outcome_b(c, l), p[static_cast<std::size_t>(l)], outcome_a(c, l));
      acc += d[c] * spec.weight.eval(f, p);
    }
    total += prob * acc;
  }
  return total;
}

}  // namespace qnet
