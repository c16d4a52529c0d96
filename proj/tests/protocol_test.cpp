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

#include "qnet/protocol.hpp"

namespace qnet {
namespace {

const double kTsirelson = 2.0 * std::sqrt(2.0);

NetworkModel haar_model(int n, std::uint64_t seed) {
  Rng rng(seed);
  return NetworkModel::ideal(DensityOperator::from_pure(haar_random_state(n, rng)));
}

ProtocolConfig config_for(Variant v, const ObservableSpec& spec, std::int64_t N) {
  ProtocolConfig c;
  c.variant = v;
  c.spec = spec;
  c.N = N;
  c.chunk_rounds = 4096;
  return c;
}

void expect_same_report(const CertificationReport& a, const CertificationReport& b) {
  EXPECT_EQ(a.vI, b.vI);
  EXPECT_EQ(a.vII, b.vII);
  EXPECT_EQ(a.vIII, b.vIII);
  EXPECT_EQ(a.counters.nI, b.counters.nI);
  EXPECT_EQ(a.counters.eI, b.counters.eI);
  EXPECT_EQ(a.counters.nII, b.counters.nII);
  EXPECT_EQ(a.counters.eII, b.counters.eII);
  EXPECT_EQ(a.counters.nIII, b.counters.nIII);
  EXPECT_EQ(a.counters.eIII, b.counters.eIII);
  EXPECT_EQ(a.verdict, b.verdict);
}

TEST(Protocol, ChshInputTable) {
  EXPECT_EQ(chsh_inputs(0), (std::array<int, 4>{0, 1, 0, 2}));
  EXPECT_EQ(chsh_inputs(1), (std::array<int, 4>{3, 2, 0, 1}));
  EXPECT_EQ(chsh_inputs(2), (std::array<int, 4>{5, 4, 2, 1}));
  EXPECT_THROW(chsh_inputs(3), std::invalid_argument);
}

TEST(Protocol, LocalSettingFrequencies) {
  const int n = 4;
  ProtocolConfig c = config_for(Variant::Local, parity_spec(BasisDistribution::product({{0.2, 0.3, 0.5}, {0.2, 0.3, 0.5},
                                                                                        {0.2, 0.3, 0.5}, {0.2, 0.3, 0.5}})),
                                0);
  Rng rng(31);
  std::vector<double> xs(kNumSettings, 0.0), ys(3, 0.0);
  const int trials = 40000;
  Settings s;
  for (int t = 0; t < trials; ++t) {
    sample_settings_local(c, rng, s);
    for (int l = 0; l < n; ++l) {
      xs[static_cast<std::size_t>(s.x[static_cast<std::size_t>(l)])] += 1.0 / (trials * n);
      ys[static_cast<std::size_t>(s.y[static_cast<std::size_t>(l)])] += 1.0 / (trials * n);
    }
  }
  const double tol = 4.0 * std::sqrt(0.25 / (trials * n));
  EXPECT_NEAR(xs[kTele], 1.0 - 1.0 / n, tol);
  EXPECT_EQ(xs[kIdle], 0.0);
  for (int x : {0, 1, 2, 3, 4, 5, static_cast<int>(kRight), static_cast<int>(kLeft)})
    EXPECT_NEAR(xs[static_cast<std::size_t>(x)], 1.0 / (8.0 * n), tol) << x;
  EXPECT_NEAR(ys[0], 0.2, tol);
  EXPECT_NEAR(ys[1], 0.3, tol);
  EXPECT_NEAR(ys[2], 0.5, tol);
}

TEST(Protocol, SharedSettingStructure) {
  const int n = 5;
  ProtocolConfig c = config_for(Variant::Shared, parity_spec(BasisDistribution::uniform(n)), 0);
  Rng rng(32);
  std::vector<int> types(3, 0);
  const int trials = 30000;
  for (int t = 0; t < trials; ++t) {
    int type = -1;
    Settings s = sample_settings_shared(c, rng, &type);
    ++types[static_cast<std::size_t>(type)];
    if (type == 0) {
      for (int l = 0; l < n; ++l) {
        EXPECT_LE(s.x[static_cast<std::size_t>(l)], 5);
        EXPECT_GE(s.y[static_cast<std::size_t>(l)], 0);
      }
    } else if (type == 1) {
      const int start = s.x[0] == kRight ? 0 : 1;
      for (int l = 0; l < n; ++l) {
        const int x = s.x[static_cast<std::size_t>(l)];
        const bool paired = l >= start && ((l - start) % 2 == 0 ? l + 1 < n : true);
        if (!paired) {
          EXPECT_EQ(x, kIdle);
          EXPECT_EQ(s.y[static_cast<std::size_t>(l)], kNoAux);
        } else {
          EXPECT_EQ(x, (l - start) % 2 == 0 ? kRight : kLeft);
          EXPECT_EQ(s.y[static_cast<std::size_t>(l)], s.y[static_cast<std::size_t>(start)]);
        }
      }
    } else {
      for (int l = 0; l < n; ++l) EXPECT_EQ(s.x[static_cast<std::size_t>(l)], kTele);
    }
  }
  for (int t = 0; t < 3; ++t) EXPECT_NEAR(types[static_cast<std::size_t>(t)] / static_cast<double>(trials), 1.0 / 3.0, 0.015);
}

TEST(Protocol, FinalizeMatchesHandComputation) {
  ProtocolConfig c = config_for(Variant::Shared, parity_spec(BasisDistribution::uniform(2)), 1000);
  c.eps = 0.2;
  CounterBank b(2);
  for (int l = 0; l < 2; ++l)
    for (int k = 0; k < 3; ++k)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          const std::size_t idx = CounterBank::index_I(l, k, i, j);
          b.nI[idx] = 10;
          b.eI[idx] = (i & j) ? -7.0 : 7.0;  // S = 4 * 0.7
        }
  b.nII = {20};
  b.eII = {-18.0};
  b.nIII = 4;
  b.eIII = 2.0;
  b.sIII = 1.5;
  CertificationReport r = finalize(b, c);
  EXPECT_NEAR(r.vI, kTsirelson - 2.8, 1e-14);
  for (double s : r.S) EXPECT_NEAR(s, 2.8, 1e-14);
  EXPECT_NEAR(r.vII, 1.0 - 0.9, 1e-14);
  EXPECT_NEAR(r.vIII, 0.5, 1e-14);
  // sample variance (1.5 - 4 * 0.25) / 3
  EXPECT_NEAR(r.vIII_stderr, std::sqrt((0.5 / 3.0) / 4.0), 1e-14);
  EXPECT_NEAR(r.threshold_I, 0.04 / 4.0, 1e-15);
  EXPECT_NEAR(r.threshold_II, 0.1, 1e-15);
  EXPECT_EQ(r.verdict, Verdict::Failed);
}

TEST(Protocol, FinalizeSinglePartyHasNoBraiding) {
  ProtocolConfig c = config_for(Variant::Local, parity_spec(BasisDistribution::uniform(1)), 10);
  CounterBank b(1);
  CertificationReport r = finalize(b, c);
  EXPECT_EQ(r.vII, 0.0);
  EXPECT_TRUE(r.vII_link.empty());
}

TEST(Protocol, ExactChshIsTsirelsonForIdealNetwork) {
  NetworkModel m = haar_model(3, 33);
  FactoredEngine e(m);
  for (int l = 0; l < 3; ++l)
    for (int k = 0; k < 3; ++k)
      EXPECT_NEAR(exact_chsh_value([&](const Settings& s) { return e.distribution(s); }, 3, l, k), kTsirelson, 1e-12);
}

TEST(Protocol, ExactEstimatorEqualsDenseExpectation) {
  for (int n = 2; n <= 3; ++n) {
    NetworkModel m = haar_model(n, 34 + static_cast<std::uint64_t>(n));
    Rng rng(35);
    const Vec psi = haar_random_state(n, rng).amplitudes();
    FactoredEngine e(m);
    for (const ObservableSpec& spec : {parity_spec(BasisDistribution::uniform(n)), shadow_overlap_spec(psi), random_basis_spec(psi)}) {
      const double dense = (build_L(spec) * m.target.matrix()).trace().real();
      EXPECT_NEAR(exact_v3([&](const Settings& s) { return e.distribution(s); }, spec), dense, 1e-10) << n;
    }
  }
}

TEST(Protocol, TransposedPartyCountsAsComplexConjugateTarget) {
  // A transposed device everywhere reproduces tr(L rho*), with rho* the
  // entrywise conjugate.
  NetworkModel m = haar_model(2, 36);
  for (auto& s : m.strategies) s = DeviceStrategy::transposed();
  Rng rng(37);
  const ObservableSpec spec = shadow_overlap_spec(haar_random_state(2, rng).amplitudes());
  FactoredEngine e(m);
  const double dense = (build_L(spec) * m.target.matrix().conjugate()).trace().real();
  EXPECT_NEAR(exact_v3([&](const Settings& s) { return e.distribution(s); }, spec), dense, 1e-10);
}

TEST(Protocol, ParallelRunMatchesSerialReference) {
  NetworkModel m = haar_model(3, 38);
  m.bell_noise.assign(5, 0.01);
  for (Variant v : {Variant::Local, Variant::Shared}) {
    ProtocolConfig c = config_for(v, parity_spec(BasisDistribution::uniform(3)), 30000);
    expect_same_report(run_protocol(m, c, 99), run_protocol_serial(m, c, 99));
    c.threads = 1;
    expect_same_report(run_protocol(m, c, 99), run_protocol_serial(m, c, 99));
  }
}

TEST(Protocol, SeedsControlTheStream) {
  NetworkModel m = haar_model(2, 39);
  ProtocolConfig c = config_for(Variant::Shared, parity_spec(BasisDistribution::uniform(2)), 20000);
  CertificationReport a = run_protocol(m, c, 1), b = run_protocol(m, c, 1), d = run_protocol(m, c, 2);
  expect_same_report(a, b);
  EXPECT_NE(a.counters.eI, d.counters.eI);
  EXPECT_EQ(a.seed, 1u);
}

TEST(Protocol, MonteCarloEstimatorIsUnbiased) {
  NetworkModel m = haar_model(2, 40);
  const ObservableSpec spec = shadow_overlap_spec(m.target.matrix().col(0).normalized());
  ProtocolConfig c = config_for(Variant::Shared, spec, 90000);
  CertificationReport r = run_protocol(m, c, 5);
  const double dense = (build_L(spec) * m.target.matrix()).trace().real();
  EXPECT_GT(r.counters.nIII, 25000);
  EXPECT_NEAR(r.vIII, dense, 4.0 * r.vIII_stderr);
  r.counters.check_invariants(spec.weight.bound);
}

TEST(Protocol, IdealNetworkCertifiesWithAmpleRounds) {
  NetworkModel m = haar_model(2, 42);
  ProtocolConfig c = config_for(Variant::Shared, parity_spec(BasisDistribution::uniform(2)), 400000);
  c.eps = 0.4;
  CertificationReport r = run_protocol(m, c, 7);
  EXPECT_EQ(r.verdict, Verdict::Certified);
  EXPECT_NEAR(r.vI, 0.0, 0.03);
  EXPECT_NEAR(r.vII, 0.0, 0.03);
}

TEST(Protocol, LocalAcceptanceEqualisesBasisPairs) {
  ProtocolConfig c = config_for(Variant::Local, parity_spec(BasisDistribution::product({{0.2, 0.3, 0.5}, {0.5, 0.25, 0.25}})), 0);
  CounterUpdater u(c);
  // Products 0.1, 0.075, 0.125; minimum 0.075.
  EXPECT_NEAR(u.acceptance(0, 0), 0.75, 1e-14);
  EXPECT_NEAR(u.acceptance(0, 1), 1.0, 1e-14);
  EXPECT_NEAR(u.acceptance(0, 2), 0.6, 1e-14);
}

TEST(Protocol, UpdaterRoutesSharedTypes) {
  ProtocolConfig c = config_for(Variant::Shared, parity_spec(BasisDistribution::uniform(2)), 0);
  CounterUpdater u(c);
  Rng rng(43);
  CounterBank b(2);
  Settings s;
  s.x = {kRight, kLeft};
  s.y = {1, 1};
  RoundTranscript t;
  t.settings = s;
  t.a = {0, 0};
  t.b = {0, 0};
  u.update(b, s, t.code(), rng, 0);
  EXPECT_EQ(b.nII[0], 0);
  u.update(b, s, t.code(), rng, 1);
  EXPECT_EQ(b.nII[0], 1);
  // Y basis, no flips: contribution -(-1)(+1) = +1.
  EXPECT_EQ(b.eII[0], 1.0);
}

TEST(Protocol, WeightUsesCorrectedBits) {
  ProtocolConfig c = config_for(Variant::Shared, parity_spec(BasisDistribution::uniform(2)), 0);
  CounterUpdater u(c);
  Settings s;
  s.x = {kTele, kTele};
  s.y = {0, 2};
  RoundTranscript t;
  t.settings = s;
  t.a = {2, 1};  // party 0 flips X, party 1 flips Z
  t.b = {0, 0};
  EXPECT_EQ(u.weight(t.code(), s), 1.0);
  t.a = {2, 0};
  EXPECT_EQ(u.weight(t.code(), s), -1.0);
}

TEST(Protocol, AdaptiveModelRunsSequentiallyAndDeterministically) {
  NetworkModel m = haar_model(2, 44);
  m.strategies[1] = DeviceStrategy::adaptive("parity", StrategyKind::Ideal, StrategyKind::Transposed);
  ProtocolConfig c = config_for(Variant::Shared, parity_spec(BasisDistribution::uniform(2)), 3000);
  CertificationReport a = run_protocol(m, c, 3), b = run_protocol(m, c, 3);
  expect_same_report(a, b);
  a.counters.check_invariants(1.0);
}

TEST(Protocol, ConfigValidation) {
  ProtocolConfig c = config_for(Variant::Local, parity_spec(BasisDistribution::uniform(2)), 10);
  EXPECT_NO_THROW(c.validate());
  c.spec = braiding_spec();
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = config_for(Variant::Local, parity_spec(BasisDistribution::product({{0.01, 0.49, 0.5}, {0.3, 0.3, 0.4}})), 10);
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.variant = Variant::Shared;
  EXPECT_NO_THROW(c.validate());
  c.delta = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Protocol, SelftestDerivesAccuracyFromGap) {
  NetworkModel m = haar_model(2, 45);
  const Vec psi = eigh(m.target.matrix()).vectors.col(3);
  SelfTestOptions o;
  o.N = 20000;
  SelfTestResult r = run_state_selftest(psi, Variant::Shared, 0.5, 0.1, m, 8, o);
  const double gap = spectral_gap(build_L_psi(psi));
  EXPECT_NEAR(r.gap, gap, 1e-12);
  EXPECT_NEAR(r.eps_underlying, gap * 0.25, 1e-12);
  EXPECT_NEAR(r.omega_threshold, 1.0 - r.eps_underlying, 1e-12);
  EXPECT_EQ(r.N, 20000);
  EXPECT_NEAR(r.omega_hat, 1.0, 4.0 * r.report.vIII_stderr + 1e-12);
}

}  // namespace
}  // namespace qnet
