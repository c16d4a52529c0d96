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

// Acceptance checks. Each criterion prints one PASS/FAIL line.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cli.hpp"
#include "qnet/analysis.hpp"
#include "qnet/format.hpp"
#include "qnet/network.hpp"
#include "qnet/observables.hpp"
#include "qnet/protocol.hpp"
#include "qnet/stats.hpp"

namespace qnet {
namespace {

const double kTsirelson = 2.0 * std::sqrt(2.0);

struct Check {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

Mat pauli(char c) {
  Mat m = Mat::Zero(2, 2);
  switch (c) {
    case 'X': m(0, 1) = m(1, 0) = 1.0; break;
    case 'Y': m(0, 1) = cplx(0.0, -1.0); m(1, 0) = cplx(0.0, 1.0); break;
    case 'Z': m(0, 0) = 1.0; m(1, 1) = -1.0; break;
    default: m = Mat::Identity(2, 2);
  }
  return m;
}

Vec phi_plus() {
  Vec v = Vec::Zero(4);
  v(0) = v(3) = 1.0 / std::sqrt(2.0);
  return v;
}

Settings idle_settings(int n) {
  Settings s;
  s.x.assign(static_cast<std::size_t>(n), kIdle);
  s.y.assign(static_cast<std::size_t>(n), kNoAux);
  return s;
}

NetworkModel haar_model(int n, std::uint64_t seed) {
  Rng rng(seed);
  return NetworkModel::ideal(DensityOperator::from_pure(haar_random_state(n, rng)));
}

NetworkModel rich_model(int n, std::uint64_t seed) {
  Rng rng(seed);
  Mat a = Mat::Zero(1L << n, 1L << n);
  for (int k = 0; k < 2; ++k) {
    Vec v = haar_random_state(n, rng).amplitudes();
    a += (k == 0 ? 0.7 : 0.3) * v * v.adjoint();
  }
  NetworkModel m = NetworkModel::ideal(DensityOperator(a));
  for (std::size_t r = 0; r < m.bell_noise.size(); ++r) m.bell_noise[r] = 0.02 * static_cast<double>(r + 1);
  const DeviceStrategy pool[] = {DeviceStrategy::rotated(0.3), DeviceStrategy::transposed(), DeviceStrategy::garbage(),
                                 DeviceStrategy::ideal()};
  for (int l = 0; l < n; ++l) m.strategies[static_cast<std::size_t>(l)] = pool[l % 4];
  return m;
}

double top_eigenvalue(const Mat& h) { return eigh(h).values(h.rows() - 1); }

// Operator identities for K and the braiding observable.
Check criterion1() {
  Check c;
  const Mat K = kron(pauli('X'), pauli('X')) - kron(pauli('Y'), pauli('Y')) + kron(pauli('Z'), pauli('Z'));
  c.require((K - k_operator()).norm() <= 1e-12, "k_operator matches XX - YY + ZZ");
  const double top = top_eigenvalue(K);
  const Vec phi = phi_plus();
  const double on_phi = (phi.adjoint() * K * phi)(0, 0).real();
  c.require(std::abs(top - 3.0) <= 1e-12, "lambda_max(K) = 3");
  c.require(std::abs(on_phi - 3.0) <= 1e-12 && (K * phi - 3.0 * phi).norm() <= 1e-12, "phi+ attains 3");
  // Partial transpose on the first qubit, written out entrywise.
  Mat kt = Mat::Zero(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) kt((j & 2) | (i & 1), (i & 2) | (j & 1)) = K(i, j);
  c.require((kt - partial_transpose(K, {0})).norm() <= 1e-12, "partial_transpose agrees with entrywise swap");
  const double top_t = top_eigenvalue(kt);
  c.require(std::abs(top_t - 1.0) <= 1e-12, "lambda_max(K^T1) = 1");
  const double braid = (build_L(braiding_spec()) - (Mat::Identity(4, 4) - K / 3.0)).norm();
  c.require(braid <= 1e-12, "braiding L = I - K/3");
  c.detail << "lambda_max(K)=" << format_double(top) << " lambda_max(K^T1)=" << format_double(top_t)
           << " |L_braid-(I-K/3)|=" << format_double(braid);
  return c;
}

// Every party and every k of the 3-CHSH table reaches 2 sqrt 2 exactly.
Check criterion2() {
  Check c;
  const double r = 1.0 / std::sqrt(2.0);
  const Mat X = pauli('X'), Y = pauli('Y'), Z = pauli('Z');
  const std::vector<Mat> a = {r * (X + Z), r * (X - Z), r * (X + Y), r * (X - Y), r * (Z + Y), r * (Z - Y)};
  const std::vector<Mat> b = {X, Y, Z};
  const Vec phi = phi_plus();
  double worst_oracle = 0.0, worst_engine = 0.0;
  for (int k = 0; k < 3; ++k) {
    const auto in = chsh_inputs(k);
    double s = 0.0;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        const double e = (phi.adjoint() * kron(a[static_cast<std::size_t>(in[static_cast<std::size_t>(i)])],
                                               b[static_cast<std::size_t>(in[static_cast<std::size_t>(2 + j)])]) *
                          phi)(0, 0)
                             .real();
        s += (i & j) ? -e : e;
      }
    worst_oracle = std::max(worst_oracle, std::abs(s - kTsirelson));
  }
  NetworkModel m = haar_model(3, 201);
  FullEngine full(m);
  for (int l = 0; l < 3; ++l)
    for (int k = 0; k < 3; ++k) {
      const double s = exact_chsh_value([&](const Settings& st) { return full.distribution(st); }, 3, l, k);
      worst_engine = std::max(worst_engine, std::abs(s - kTsirelson));
    }
  c.require(worst_oracle <= 1e-12, "phi+ oracle reaches 2 sqrt 2 for every k");
  c.require(worst_engine <= 1e-12, "dense network reaches 2 sqrt 2 for all (l, k)");
  c.detail << "max|S-2sqrt2| oracle=" << format_double(worst_oracle) << " dense n=3 (9 assignments)=" << format_double(worst_engine);
  return c;
}

// Corrected teleported outcomes reproduce direct Pauli measurement.
Check criterion3() {
  Check c;
  Rng rng(301);
  double worst = 0.0;
  const char names[3] = {'X', 'Y', 'Z'};
  for (int t = 0; t < 50; ++t) {
    const Vec psi = haar_random_state(1, rng).amplitudes();
    NetworkModel m = NetworkModel::ideal(DensityOperator::from_pure(PureState(psi)));
    FullEngine full(m);
    FactoredEngine fe(m);
    for (int y = 0; y < 3; ++y) {
      const Mat sigma = pauli(names[y]);
      Settings s = idle_settings(1);
      s.x[0] = kTele;
      s.y[0] = y;
      for (const auto& p : {full.distribution(s), fe.distribution(s)}) {
        double corrected[2] = {0.0, 0.0};
        for (std::size_t code = 0; code < p.size(); ++code)
          corrected[correction_flip(outcome_b(code, 0), static_cast<Pauli>(y), outcome_a(code, 0))] += p[code];
        for (int b = 0; b < 2; ++b) {
          const Mat proj = 0.5 * (Mat::Identity(2, 2) + (b == 0 ? 1.0 : -1.0) * sigma);
          const double born = (psi.adjoint() * proj * psi)(0, 0).real();
          worst = std::max(worst, std::abs(corrected[b] - born));
        }
      }
    }
  }
  c.require(worst <= 1e-12, "corrected distribution equals Born rule");
  c.detail << "50 states x 3 Paulis x 2 engines, max deviation=" << format_double(worst);
  return c;
}

// Full and factored engines agree.
Check criterion4() {
  Check c;
  double worst2 = 0.0, worst3 = 0.0;
  {
    NetworkModel m = rich_model(2, 401);
    FullEngine full(m);
    FactoredEngine fe(m);
    Settings s = idle_settings(2);
    for (int x0 = 0; x0 < kNumSettings; ++x0)
      for (int x1 = 0; x1 < kNumSettings; ++x1)
        for (int y0 = -1; y0 < 3; ++y0)
          for (int y1 = -1; y1 < 3; ++y1) {
            s.x = {x0, x1};
            s.y = {y0, y1};
            worst2 = std::max(worst2, total_variation(full.distribution(s), fe.distribution(s)));
          }
  }
  int sampled = 0;
  {
    NetworkModel m = rich_model(3, 402);
    // Noise on a single link keeps the dense ensemble small.
    for (std::size_t r = 0; r < m.bell_noise.size(); ++r) m.bell_noise[r] = r == 3 ? 0.05 : 0.0;
    FullEngine full(m);
    FactoredEngine fe(m);
    Rng rng(403);
    ProtocolConfig shared;
    shared.variant = Variant::Shared;
    shared.spec = parity_spec(BasisDistribution::uniform(3));
    ProtocolConfig local = shared;
    local.variant = Variant::Local;
    Settings s = idle_settings(3);
    for (int t = 0; t < 60; ++t) {
      if (t % 3 == 0) {
        for (int l = 0; l < 3; ++l) {
          s.x[static_cast<std::size_t>(l)] = uniform_int(rng, kNumSettings);
          s.y[static_cast<std::size_t>(l)] = uniform_int(rng, 4) - 1;
        }
      } else if (t % 3 == 1) {
        sample_settings_shared(shared, rng, s);
      } else {
        sample_settings_local(local, rng, s);
      }
      worst3 = std::max(worst3, total_variation(full.distribution(s), fe.distribution(s)));
      ++sampled;
    }
  }
  c.require(worst2 <= 1e-10, "n=2 exhaustive TV <= 1e-10");
  c.require(worst3 <= 1e-10, "n=3 sampled TV <= 1e-10");
  c.detail << "n=2 all 1600 settings max TV=" << format_double(worst2) << "; n=3 " << sampled
           << " sampled settings max TV=" << format_double(worst3);
  return c;
}

// Transposed party 0 is caught on link (0, 1).
Check criterion5() {
  Check c;
  ProtocolConfig cfg;
  cfg.variant = Variant::Shared;
  cfg.spec = parity_spec(BasisDistribution::uniform(3));
  cfg.eps = 0.3;
  cfg.delta = 0.05;
  PlanInputs in;
  in.n = 3;
  in.eps = cfg.eps;
  in.delta = cfg.delta;
  in.W = cfg.spec.weight.bound;
  cfg.N = plan_N(cfg.variant, in);
  NetworkModel m = haar_model(3, 501);
  m.strategies[0] = DeviceStrategy::transposed();
  int failed = 0, link_ok = 0;
  double min_link = 1e9;
  for (int r = 0; r < 20; ++r) {
    CertificationReport rep = run_protocol(m, cfg, derive_rng(502, {static_cast<std::uint64_t>(r)})());
    failed += rep.verdict == Verdict::Failed;
    min_link = std::min(min_link, rep.vII_link[0]);
    link_ok += rep.vII_link[0] >= 2.0 / 3.0 - 0.05;
  }
  c.require(failed >= 19, "FAILED in >= 19/20");
  c.require(link_ok == 20, "v_II(0,1) >= 2/3 - 0.05 in every run");
  c.detail << "planned N=" << cfg.N << " FAILED " << failed << "/20, min v_II(0,1)=" << format_double(min_link);
  return c;
}

// Honest n = 3 local-variant state self-test certifies.
Check criterion6() {
  Check c;
  Rng rng(601);
  const Vec psi = haar_random_state(3, rng).amplitudes();
  NetworkModel m = NetworkModel::ideal(DensityOperator::from_pure(PureState(psi)));
  const double target_eps = 0.2;
  const double gap = selftest_gap(psi, Variant::Local, 64, 602);
  const double eps_prime = std::sqrt(target_eps / gap);
  SelfTestOptions opt;
  opt.c = 10.0;
  opt.gap = gap;
  const double exact = (build_M_psi_exact(psi).matrix * m.target.matrix()).trace().real();
  int certified = 0, close = 0;
  double worst = 0.0;
  std::int64_t N = 0;
  double eps_used = 0.0;
  for (int r = 0; r < 20; ++r) {
    SelfTestResult res = run_state_selftest(psi, Variant::Local, eps_prime, 0.1, m, derive_rng(603, {static_cast<std::uint64_t>(r)})(), opt);
    certified += res.verdict == Verdict::Certified;
    worst = std::max(worst, std::abs(res.omega_hat - 1.0));
    close += std::abs(res.omega_hat - 1.0) <= 0.2;
    N = res.N;
    eps_used = res.eps_underlying;
  }
  c.require(std::abs(exact - 1.0) <= 1e-10, "tr(M psi) = 1");
  c.require(std::abs(eps_used - target_eps) <= 1e-12, "underlying eps = 0.2");
  c.require(certified >= 18, "CERTIFIED in >= 18/20");
  c.require(close == 20, "|v_III - 1| <= 0.2 in every run");
  c.detail << "gap=" << format_double(gap) << " eps'=" << format_double(eps_prime) << " c=10 N=" << N << " CERTIFIED "
           << certified << "/20, max|v_III-1|=" << format_double(worst);
  return c;
}

// Maximally mixed target is rejected.
Check criterion7() {
  Check c;
  Rng rng(701);
  const Vec psi = haar_random_state(3, rng).amplitudes();
  NetworkModel m = NetworkModel::ideal(DensityOperator(Mat::Identity(8, 8) / 8.0));
  const Mat M = build_M_psi_exact(psi).matrix;
  const double dense = M.trace().real() / 8.0;
  SelfTestOptions opt;
  opt.N = 200000;
  int failed = 0, overlap_failed = 0, within = 0;
  double threshold = 0.0, mean_hat = 0.0;
  for (int r = 0; r < 20; ++r) {
    SelfTestResult res = run_state_selftest(psi, Variant::Local, 0.3, 0.1, m, derive_rng(702, {static_cast<std::uint64_t>(r)})(), opt);
    failed += res.verdict == Verdict::Failed;
    overlap_failed += res.omega_hat < res.omega_threshold;
    within += std::abs(res.omega_hat - dense) <= 4.0 * res.report.vIII_stderr;
    threshold = res.omega_threshold;
    mean_hat += res.omega_hat / 20.0;
  }
  c.require(failed >= 18, "FAILED in >= 18/20");
  c.require(overlap_failed >= 18, "overlap test alone rejects in >= 18/20");
  c.require(within >= 18, "v_III matches tr(M I/8) within 4 sigma");
  c.detail << "tr(M I/8)=" << format_double(dense) << " mean v_III=" << format_double(mean_hat)
           << " threshold=" << format_double(threshold) << " FAILED " << failed << "/20 (overlap " << overlap_failed << "/20)";
  return c;
}

// Monte-Carlo v_III against the dense expectation.
Check criterion8() {
  Check c;
  int idx = 0;
  for (int n = 2; n <= 3; ++n) {
    NetworkModel m = rich_model(n, 800 + static_cast<std::uint64_t>(n));
    for (auto& s : m.strategies) s = DeviceStrategy::ideal();
    std::fill(m.bell_noise.begin(), m.bell_noise.end(), 0.0);
    Rng rng(810 + static_cast<std::uint64_t>(n));
    const Vec psi = haar_random_state(n, rng).amplitudes();
    const std::vector<std::pair<std::string, ObservableSpec>> specs = {
        {"parity", parity_spec(BasisDistribution::uniform(n))},
        {"shadow", shadow_overlap_spec(psi)},
        {"random_basis", random_basis_spec(psi)},
    };
    for (const auto& [name, spec] : specs) {
      ProtocolConfig cfg;
      cfg.variant = Variant::Shared;
      cfg.spec = spec;
      cfg.N = 310000;
      CertificationReport r = run_protocol(m, cfg, 820 + static_cast<std::uint64_t>(idx++));
      const double dense = (build_L(spec) * m.target.matrix()).trace().real();
      const double z = (r.vIII - dense) / r.vIII_stderr;
      c.require(r.counters.nIII >= 100000, name + " has 1e5 contributions");
      c.require(std::abs(z) <= 4.0, name + " within 4 sigma");
      c.detail << " n=" << n << ' ' << name << " rounds=" << r.counters.nIII << " z=" << format_double(z);
    }
  }
  return c;
}

// Gap scaling and the top eigenvector of M.
Check criterion9() {
  Check c;
  GapOptions opt;
  opt.sampled_m = 64;
  std::vector<GapSample> samples = gap_samples(2, 8, 50, 901, opt);
  std::vector<double> ns, mins;
  double max_residual = 0.0, max_lambda = 0.0, floor = 1e9;
  for (int n = 2; n <= 8; ++n) {
    double mn = 1e9;
    for (const auto& g : samples)
      if (g.n == n) {
        mn = std::min(mn, g.gap_L);
        max_residual = std::max(max_residual, g.unit_residual);
        max_lambda = std::max(max_lambda, std::abs(g.lambda_max_M - 1.0));
      }
    ns.push_back(n);
    mins.push_back(mn);
    floor = std::min(floor, mn * n * n);
    c.detail << " n=" << n << ":" << format_double(mn * n * n);
  }
  // Fitted exponent of the minimum gap against n.
  const double slope = loglog_slope(ns, mins);
  c.require(samples.size() == 350, "50 samples per n");
  c.require(floor > 0.0, "min gap * n^2 bounded below by a positive constant");
  c.require(slope >= -2.0, "min gap decays no faster than n^-2");
  c.require(max_residual <= 1e-10 && max_lambda <= 1e-10, "psi is the top unit eigenvector of M");
  c.detail << " | c_fit=" << format_double(floor) << " exponent=" << format_double(slope)
           << " max|M psi - psi|=" << format_double(max_residual) << " max|lambda_max-1|=" << format_double(max_lambda);
  return c;
}

// Extraction distance scales as the square root of the CHSH deficit.
Check criterion10() {
  Check c;
  std::vector<double> grid;
  for (int i = 0; i < 12; ++i) grid.push_back(std::exp(std::log(1e-4) + (std::log(5e-2) - std::log(1e-4)) * i / 11.0));
  IsometryTrend t = isometry_trend(grid);
  c.require(t.slope_distance >= 0.3 && t.slope_distance <= 0.7, "distance slope in [0.3, 0.7]");
  c.detail << "slope(distance vs CHSH deficit)=" << format_double(t.slope_distance)
           << " slope(1-F vs CHSH deficit)=" << format_double(t.slope_infidelity);
  return c;
}

// Concentration bounds on repeated streams.
Check criterion11() {
  Check c;
  const std::int64_t reps = 10000;
  StreamCheck h1 = hoeffding_stream_check(0.5, 0.05, 0.05, 1.0, reps, 1101);
  StreamCheck h2 = hoeffding_stream_check(0.2, 0.1, 0.2, 1.0, reps, 1102);
  StreamCheck m1 = mixed_chernoff_stream_check(0.3, 2000, 0.1, reps, 1103);
  StreamCheck m2 = mixed_chernoff_stream_check(0.5, 1000, 0.15, reps, 1104);
  for (const auto* s : {&h1, &h2, &m1, &m2}) {
    c.require(s->repetitions == reps, "1e4 repetitions");
    c.require(s->frequency <= s->bound, "frequency below bound");
    c.detail << " T=" << s->T << " freq=" << format_double(s->frequency) << "<=" << format_double(s->bound);
  }
  return c;
}

// Every CLI command is byte-identical across two seeded runs.
Check criterion12() {
  namespace fs = std::filesystem;
  Check c;
  const fs::path root = fs::temp_directory_path() / "qnet_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  std::ofstream(root / "run.json") << R"({"model": {"n": 3, "target": {"kind": "haar", "seed": 12},
    "bell_noise": 0.01, "strategies": ["ideal", {"kind": "rotated", "angle": 0.1}, "ideal"]},
    "protocol": {"variant": "local", "eps": 0.3, "N": 30000}})";
  std::ofstream(root / "selftest.json") << R"({"model": {"n": 2, "target": {"kind": "haar", "seed": 5}},
    "protocol": {"variant": "shared", "N": 20000}, "selftest": {"state": {"kind": "haar", "seed": 5}}})";
  std::ofstream(root / "sweep.json") << R"({"kind": "soundness", "grid": [0.0, 0.5], "reps": 2,
    "model": {"n": 2, "target": {"kind": "haar", "seed": 6}},
    "protocol": {"variant": "shared", "N": 5000}, "selftest": {"state": {"kind": "haar", "seed": 6}}})";
  const std::vector<std::pair<std::string, std::vector<std::string>>> commands = {
      {"run", {"run", (root / "run.json").string()}},
      {"run-selftest", {"run", (root / "selftest.json").string()}},
      {"plan", {"plan", "--variant", "shared", "--n", "5", "--eps", "0.2"}},
      {"gap", {"gap", "--n", "2..5", "--trials", "3"}},
      {"attack", {"attack", "--n", "3", "--flip", "1", "--N", "3000"}},
      {"sweep", {"sweep", (root / "sweep.json").string()}},
      {"verify-isometry", {"verify-isometry", "--p", "0.01", "--angle", "0.1", "--grid", "--extraction-n", "2"}},
  };
  int identical = 0;
  for (const auto& [name, args] : commands) {
    std::string files[2], stdouts[2];
    int codes[2];
    for (int rep = 0; rep < 2; ++rep) {
      const fs::path dir = root / (name + "_" + std::to_string(rep));
      std::vector<std::string> full = {"--seed", "1234", "--threads", "1", "--out", dir.string()};
      full.insert(full.end(), args.begin(), args.end());
      std::ostringstream out, err;
      codes[rep] = cli::run_cli(full, out, err);
      stdouts[rep] = out.str();
      if (codes[rep] == cli::kExitError) c.detail << " " << name << ": " << err.str();
      std::vector<fs::path> paths;
      if (fs::is_directory(dir))
        for (const auto& e : fs::directory_iterator(dir)) paths.push_back(e.path());
      std::sort(paths.begin(), paths.end());
      for (const auto& p : paths) {
        std::ifstream f(p, std::ios::binary);
        std::ostringstream s;
        s << f.rdbuf();
        files[rep] += p.filename().string() + "\n" + s.str();
      }
    }
    const bool same = codes[0] == codes[1] && codes[0] != cli::kExitError && stdouts[0] == stdouts[1] && files[0] == files[1] &&
                      !files[0].empty();
    identical += same;
    c.require(same, name + " identical");
  }
  c.detail << identical << "/" << commands.size() << " commands byte-identical";
  fs::remove_all(root);
  return c;
}

}  // namespace
}  // namespace qnet

int main(int argc, char** argv) {
  CLI::App app{"qnet acceptance checks"};
  int only = 0;
  app.add_option("--criterion", only, "Run a single criterion (1..12)")->check(CLI::Range(1, 12));
  CLI11_PARSE(app, argc, argv);
  const std::vector<std::function<qnet::Check()>> criteria = {
      qnet::criterion1, qnet::criterion2, qnet::criterion3,  qnet::criterion4,  qnet::criterion5,  qnet::criterion6,
      qnet::criterion7, qnet::criterion8, qnet::criterion9, qnet::criterion10, qnet::criterion11, qnet::criterion12};
  bool all = true;
  for (int i = 1; i <= 12; ++i) {
    if (only != 0 && only != i) continue;
    const auto start = std::chrono::steady_clock::now();
    qnet::Check c = criteria[static_cast<std::size_t>(i - 1)]();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "criterion " << i << ": " << (c.pass ? "PASS" : "FAIL") << " (" << qnet::format_double(secs) << " s) "
              << c.detail.str() << std::endl;
    all = all && c.pass;
  }
  return all ? 0 : 1;
}
