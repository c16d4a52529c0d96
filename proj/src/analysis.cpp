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

#include "qnet/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "qnet/format.hpp"

namespace qnet {

namespace {

const double kTwoRootTwo = 2.0 * std::sqrt(2.0);

Mat hadamard() {
  Mat h(2, 2);
  h << 1, 1, 1, -1;
  return h / std::sqrt(2.0);
}

Mat controlled(const Mat& u, long d, int control) {
  // Ordering party (x) A' (x) A''; control is 1 for A', 2 for A''.
  Mat out = Mat::Zero(4 * d, 4 * d);
  for (int c1 = 0; c1 < 2; ++c1)
    for (int c2 = 0; c2 < 2; ++c2) {
      const bool on = (control == 1 ? c1 : c2) == 1;
      const long anc = c1 * 2 + c2;
      for (long i = 0; i < d; ++i)
        for (long j = 0; j < d; ++j) {
          const cplx v = on ? u(i, j) : (i == j ? cplx(1.0) : cplx(0.0));
          out(i * 4 + anc, j * 4 + anc) = v;
        }
    }
  return out;
}

void check_unitary(const Mat& u, const char* name) {
  const double defect = (u.adjoint() * u - Mat::Identity(u.rows(), u.cols())).norm();
  if (defect > 1e-8) throw std::invalid_argument(std::string("swap isometry input ") + name + " is not unitary");
}

}  // namespace

Mat swap_circuit(const Mat& Z, const Mat& X, const Mat& Y) {
  check_unitary(Z, "Z");
  check_unitary(X, "X");
  check_unitary(Y, "Y");
  const long d = Z.rows();
  if (X.rows() != d || Y.rows() != d) throw std::invalid_argument("swap isometry inputs differ in dimension");
  const Mat id = Mat::Identity(d, d);
  const Mat i2 = Mat::Identity(2, 2);
  const Mat h1 = kron(id, kron(hadamard(), i2));
  const Mat h2 = kron(id, kron(i2, hadamard()));
  const Mat iyx = cplx(0.0, 1.0) * Y * X;
  return h2 * controlled(iyx, d, 2) * controlled(X, d, 1) * h1 * controlled(Z, d, 1) * h1 * h2;
}

Mat swap_isometry(const Mat& Z, const Mat& X, const Mat& Y) {
  const Mat full = swap_circuit(Z, X, Y);
  const long d = Z.rows();
  Mat v(4 * d, d);
  for (long j = 0; j < d; ++j) v.col(j) = full.col(j * 4);
  return v;
}

namespace {

Mat observable_of(const std::vector<Mat>& povm) { return povm[0] - povm[1]; }

}  // namespace

PartyPaulis main_party_paulis(const PartyDevice& d) {
  const double r = 1.0 / std::sqrt(2.0);
  const Mat a0 = observable_of(d.a_povm[0]), a1 = observable_of(d.a_povm[1]);
  const Mat a2 = observable_of(d.a_povm[2]), a3 = observable_of(d.a_povm[3]);
  return {unitarize(r * (a0 + a1)), unitarize(r * (a2 - a3)), unitarize(r * (a0 - a1))};
}

PartyPaulis aux_party_paulis(const PartyDevice& d) {
  return {unitarize(observable_of(d.b_povm[0])), unitarize(observable_of(d.b_povm[1])), unitarize(observable_of(d.b_povm[2]))};
}

// ---------------------------------------------------------------------------

IsometryPoint isometry_point(double p, const DeviceStrategy& main, const DeviceStrategy& aux) {
  const Mat pair = noisy_bell_pair(p);
  const PartyDevice da = build_party_device(main, 1, 0);
  const PartyDevice db = build_party_device(aux, 1, 0);
  double mean_s = 0.0;
  for (int k = 0; k < 3; ++k) {
    const auto in = chsh_inputs(k);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        const Mat ax = observable_of(da.a_povm[static_cast<std::size_t>(in[static_cast<std::size_t>(i)])]);
        const Mat by = observable_of(db.b_povm[static_cast<std::size_t>(in[static_cast<std::size_t>(2 + j)])]);
        const double c = (pair * kron(ax, by)).trace().real();
        mean_s += ((i & j) ? -c : c) / 3.0;
      }
  }
  const PartyPaulis pa = main_party_paulis(da), pb = aux_party_paulis(db);
  const Mat v = kron(swap_isometry(pa.Z, pa.X, pa.Y), swap_isometry(pb.Z, pb.X, pb.Y));
  const Mat out = v * pair * v.adjoint();
  // Qubits: S, A', A'', B, B', B''.
  const Mat ab = partial_trace(out, 6, {1, 4});
  IsometryPoint pt;
  pt.p = p;
  pt.chsh_deficit = kTwoRootTwo - mean_s;
  pt.fidelity = fidelity(ab, bell_state().amplitudes());
  pt.distance = std::sqrt(std::max(0.0, 2.0 - 2.0 * std::sqrt(pt.fidelity)));
  return pt;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("slope needs two or more matching points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double k = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0 && y[i] > 0.0)) throw std::invalid_argument("log-log slope needs positive values");
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

IsometryTrend isometry_trend(const std::vector<double>& grid) {
  IsometryTrend t;
  std::vector<double> dx, dd, di;
  for (double p : grid) {
    IsometryPoint pt = isometry_point(p, DeviceStrategy::ideal(), DeviceStrategy::ideal());
    t.points.push_back(pt);
    dx.push_back(pt.chsh_deficit);
    dd.push_back(pt.distance);
    di.push_back(1.0 - pt.fidelity);
  }
  t.slope_distance = loglog_slope(dx, dd);
  t.slope_infidelity = loglog_slope(dx, di);
  return t;
}

// ---------------------------------------------------------------------------

Mat extraction_party_map(const PartyDevice& dev, const Mat& pair) {
  const PartyPaulis pa = main_party_paulis(dev), pb = aux_party_paulis(dev);
  const Mat va = swap_isometry(pa.Z, pa.X, pa.Y);
  const Mat vb = swap_isometry(pb.Z, pb.X, pb.Y);
  const Mat vtilde = swap_circuit(pa.Z, pa.X, pa.Y);
  const Mat k0 = kron(Mat::Identity(2, 2), kron(va, vb));  // T,S,A',A'',B,B',B''
  Mat phi = bell_state().density();
  Mat zero = Mat::Zero(2, 2);
  zero(0, 0) = 1.0;
  Mat cx = Mat::Zero(4, 4);
  cx(0, 0) = cx(1, 1) = cx(2, 3) = cx(3, 2) = 1.0;
  Mat out = Mat::Zero(16, 4);
  for (int t = 0; t < 2; ++t)
    for (int tp = 0; tp < 2; ++tp) {
      Mat x = Mat::Zero(2, 2);
      x(t, tp) = 1.0;
      Mat rho = k0 * kron(x, pair) * k0.adjoint();
      rho = partial_trace(rho, 7, {0, 1, 3, 4, 6});  // T,S,A'',B,B''
      rho = kron(rho, kron(phi, zero));                // + A', A_flat, A_flatflat
      rho = conjugate_by(rho, 8, {2, 7}, cx);
      rho = conjugate_by(rho, 8, {1, 5, 2}, vtilde.adjoint());
      rho = partial_trace(rho, 8, {0, 1, 3, 4, 6, 7});  // T,S,B,B'',A_flat,A_flatflat
      Mat acc = Mat::Zero(4, 4);
      for (int a = 0; a < 4; ++a) {
        Mat r = apply_left(rho, 6, {0, 1}, dev.a_povm[kTele][static_cast<std::size_t>(a)]);
        r = partial_trace(r, 6, {4, 5});
        acc += conjugate_by(r, 2, {0}, bsm_unitary(a));
      }
      for (int o = 0; o < 4; ++o)
        for (int op = 0; op < 4; ++op) out(o * 4 + op, t * 2 + tp) = acc(o, op);
    }
  return out;
}

namespace {

// Replaces qubit pos of rho by the two output qubits of a one-qubit map.
Mat apply_qubit_map(const Mat& rho, int m, int pos, const Mat& map) {
  const long pre = 1L << pos, post = 1L << (m - pos - 1);
  const long dout = pre * 4 * post;
  Mat out = Mat::Zero(dout, dout);
  for (long p = 0; p < pre; ++p)
    for (long pp = 0; pp < pre; ++pp)
      for (long q = 0; q < post; ++q)
        for (long qp = 0; qp < post; ++qp) {
          cplx in[2][2];
          for (int t = 0; t < 2; ++t)
            for (int tp = 0; tp < 2; ++tp) in[t][tp] = rho((p * 2 + t) * post + q, (pp * 2 + tp) * post + qp);
          for (int o = 0; o < 4; ++o)
            for (int op = 0; op < 4; ++op) {
              cplx v = 0.0;
              for (int t = 0; t < 2; ++t)
                for (int tp = 0; tp < 2; ++tp) v += map(o * 4 + op, t * 2 + tp) * in[t][tp];
              out((p * 4 + o) * post + q, (pp * 4 + op) * post + qp) = v;
            }
        }
  return out;
}

}  // namespace

ExtractionResult verify_extraction(const NetworkModel& model, const ObservableSpec& spec) {
  model.validate();
  const int n = model.n;
  if (n > 2) throw std::invalid_argument("extraction check is limited to n <= 2");
  if (model.adaptive()) throw std::invalid_argument("extraction check needs non-adaptive strategies");
  if (spec.n != n) throw std::invalid_argument("observable and model differ in party count");
  Mat rho = model.target.matrix();
  for (int l = 0; l < n; ++l) {
    const PartyDevice dev = build_party_device(model.strategies[static_cast<std::size_t>(l)], n, l);
    const Mat pair = noisy_bell_pair(model.bell_noise[static_cast<std::size_t>(l)]);
    rho = apply_qubit_map(rho, n + l, 2 * l, extraction_party_map(dev, pair));
  }
  const int m = 2 * n;
  std::vector<int> flat, flags;
  for (int l = 0; l < n; ++l) {
    flat.push_back(2 * l);
    flags.push_back(2 * l + 1);
  }
  std::vector<int> order = flat;
  order.insert(order.end(), flags.begin(), flags.end());
  const long dn = 1L << n;
  Mat f0 = Mat::Zero(dn, dn), f1 = Mat::Zero(dn, dn);
  f0(0, 0) = 1.0;
  f1(dn - 1, dn - 1) = 1.0;
  const Mat L = build_L(spec);
  const Mat flag_op = embed(kron(Mat::Identity(dn, dn), Mat(f0 + f1)), order, m);
  const Mat value_op = embed(Mat(kron(L, f0) + kron(Mat(L.conjugate()), f1)), order, m);
  FactoredEngine engine(model);
  ExtractionResult r;
  r.output = rho;
  r.flag_mass = (flag_op * rho).trace().real();
  r.channel_value = (value_op * rho).trace().real();
  r.v3_exact = exact_v3([&](const Settings& s) { return engine.distribution(s); }, spec);
  r.deviation = std::abs(r.v3_exact - r.channel_value);
  return r;
}

// ---------------------------------------------------------------------------

std::int64_t attack_default_N() { return hoeffding_samples(2.0, 0.05, 0.01); }

AttackResult transpose_attack_experiment(int n, const std::vector<int>& flipped, std::int64_t N, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("attack experiment needs n >= 2");
  Vec zero = Vec::Zero(1L << n);
  zero(0) = 1.0;
  NetworkModel model = NetworkModel::ideal(DensityOperator::from_pure(PureState(zero)));
  for (int l : flipped) {
    if (l < 0 || l >= n) throw std::invalid_argument("flipped party out of range");
    model.strategies[static_cast<std::size_t>(l)] = DeviceStrategy::transposed();
  }
  ProtocolConfig cfg;
  cfg.variant = Variant::Shared;
  cfg.spec = parity_spec(BasisDistribution::uniform(n));
  cfg.N = N;
  FactoredEngine engine(model);
  CounterUpdater upd(cfg);
  const std::int64_t chunk = cfg.chunk_rounds;
  const std::int64_t chunks = (N + chunk - 1) / chunk;
  std::vector<CounterBank> banks(static_cast<std::size_t>(chunks));
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t c = 0; c < chunks; ++c) {
    Rng rng = derive_rng(seed, {static_cast<std::uint64_t>(c)});
    CounterBank bank(n);
    Settings s;
    s.x.assign(static_cast<std::size_t>(n), kIdle);
    s.y.assign(static_cast<std::size_t>(n), kNoAux);
    const std::int64_t rounds = std::min(chunk, N - c * chunk);
    for (std::int64_t r = 0; r < rounds; ++r) {
      std::fill(s.x.begin(), s.x.end(), kIdle);
      std::fill(s.y.begin(), s.y.end(), kNoAux);
      const int start = uniform_int(rng, 2), y = uniform_int(rng, 3);
      for (int l = start; l + 1 < n; l += 2) {
        s.x[static_cast<std::size_t>(l)] = kRight;
        s.x[static_cast<std::size_t>(l + 1)] = kLeft;
        s.y[static_cast<std::size_t>(l)] = s.y[static_cast<std::size_t>(l + 1)] = y;
      }
      upd.update(bank, s, engine.sample_code(s, rng), rng, 1);
    }
    banks[static_cast<std::size_t>(c)] = std::move(bank);
  }
  CounterBank total(n);
  for (const auto& b : banks) total.merge(b);
  AttackResult out;
  out.N = N;
  out.seed = seed;
  for (int l = 0; l + 1 < n; ++l) {
    const std::int64_t k = total.nII[static_cast<std::size_t>(l)];
    out.counts.push_back(k);
    out.vII.push_back(1.0 + (k ? total.eII[static_cast<std::size_t>(l)] / static_cast<double>(k) : 0.0));
  }
  return out;
}

// ---------------------------------------------------------------------------

void SweepResult::write_csv(std::ostream& os) const {
  os << "param,rate,stderr,mean_vI,mean_vII,mean_vIII,N,seed";
  for (const auto& c : extra_columns) os << ',' << c;
  os << '\n';
  for (const auto& p : points) {
    os << format_double(p.param) << ',' << format_double(p.rate) << ',' << format_double(p.stderr_rate) << ','
       << format_double(p.mean_vI) << ',' << format_double(p.mean_vII) << ',' << format_double(p.mean_vIII) << ','
       << p.N << ',' << p.seed;
    for (double e : p.extra) os << ',' << format_double(e);
    os << '\n';
  }
}

std::uint64_t point_seed(std::uint64_t seed, std::size_t point, std::size_t rep) {
  Rng rng = derive_rng(seed, {static_cast<std::uint64_t>(point), static_cast<std::uint64_t>(rep)});
  return rng();
}

namespace {

SweepPoint run_point(double param, const NetworkModel& model, const SweepConfig& cfg, std::size_t index) {
  SweepPoint pt;
  pt.param = param;
  pt.seed = point_seed(cfg.seed, index, 0);
  int certified = 0;
  double si = 0, sii = 0, siii = 0;
  for (int r = 0; r < cfg.reps; ++r) {
    const std::uint64_t s = point_seed(cfg.seed, index, static_cast<std::size_t>(r));
    CertificationReport rep;
    Verdict v;
    if (cfg.selftest) {
      SelfTestResult st = run_state_selftest(cfg.psi, cfg.protocol.variant, cfg.eps_prime, cfg.protocol.delta, model, s,
                                             cfg.selftest_options);
      rep = st.report;
      v = st.verdict;
    } else {
      rep = run_protocol(model, cfg.protocol, s);
      v = rep.verdict;
    }
    certified += v == Verdict::Certified;
    si += rep.vI;
    sii += rep.vII;
    siii += rep.vIII;
    pt.N = rep.N;
  }
  const double k = std::max(1, cfg.reps);
  pt.rate = certified / k;
  pt.stderr_rate = std::sqrt(pt.rate * (1.0 - pt.rate) / k);
  pt.mean_vI = si / k;
  pt.mean_vII = sii / k;
  pt.mean_vIII = siii / k;
  return pt;
}

}  // namespace

SweepResult completeness_sweep(const std::vector<double>& noise, const SweepConfig& cfg) {
  if (noise.empty()) throw std::invalid_argument("sweep grid is empty");
  SweepResult out;
  out.extra_columns = {"epsilon_S"};
  for (std::size_t i = 0; i < noise.size(); ++i) {
    NetworkModel m = cfg.model;
    std::fill(m.bell_noise.begin(), m.bell_noise.end(), noise[i]);
    SweepPoint pt = run_point(noise[i], m, cfg, i);
    pt.extra = {epsilon_S(m)};
    out.points.push_back(pt);
  }
  return out;
}

SweepResult soundness_sweep(const std::vector<double>& corruption, const SweepConfig& cfg) {
  if (corruption.empty()) throw std::invalid_argument("sweep grid is empty");
  if (!cfg.selftest) throw std::invalid_argument("soundness sweep runs the state self-test");
  const int n = qubit_count(cfg.psi.size());
  Rng rng = derive_rng(cfg.seed, {0x6f727468ull});
  Vec perp = haar_random_state(n, rng).amplitudes();
  perp -= cfg.psi * (cfg.psi.adjoint() * perp)(0, 0);
  perp.normalize();
  const Mat pp = cfg.psi * cfg.psi.adjoint(), qq = perp * perp.adjoint();
  SweepResult out;
  out.extra_columns = {"overlap_M"};
  const Mat M = n <= kExactMPsiCap ? build_M_psi_exact(cfg.psi).matrix : Mat();
  for (std::size_t i = 0; i < corruption.size(); ++i) {
    const double q = corruption[i];
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("corruption must lie in [0,1]");
    NetworkModel m = cfg.model;
    m.target = DensityOperator((1.0 - q) * pp + q * qq);
    SweepPoint pt = run_point(q, m, cfg, i);
    pt.extra = {M.size() ? (M * m.target.matrix()).trace().real() : std::numeric_limits<double>::quiet_NaN()};
    out.points.push_back(pt);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<GapSample> gap_samples(int n_min, int n_max, int trials, std::uint64_t seed, const GapOptions& opt) {
  if (n_min < 2 || n_max < n_min || trials < 1) throw std::invalid_argument("gap study needs 2 <= n_min <= n_max and trials >= 1");
  std::vector<std::pair<int, int>> jobs;
  for (int n = n_min; n <= n_max; ++n)
    for (int t = 0; t < trials; ++t) jobs.push_back({n, t});
  std::vector<GapSample> out(jobs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto [n, t] = jobs[i];
    Rng rng = derive_rng(seed, {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(t)});
    const Vec psi = haar_random_state(n, rng).amplitudes();
    GapSample g;
    g.n = n;
    g.gap_L = spectral_gap(build_L_psi(psi));
    if (opt.with_M) {
      ObservableEstimate est =
          n <= kExactMPsiCap ? build_M_psi_exact_serial(psi) : build_M_psi_sampled(psi, opt.sampled_m, rng);
      g.M_exact = est.exact;
      Eigh e = eigh(est.matrix);
      g.lambda_max_M = e.values(e.values.size() - 1);
      const RVec& v = e.values;
      const double top = v(v.size() - 1);
      double second = top;
      for (long k = v.size() - 2; k >= 0; --k)
        if (v(k) < top - 1e-9) {
          second = v(k);
          break;
        }
      g.gap_M = top - second;
      g.unit_residual = (est.matrix * psi - psi).norm();
    }
    out[i] = g;
  }
  return out;
}

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size();
  return k % 2 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

}  // namespace

SweepResult gap_summary(const std::vector<GapSample>& samples) {
  SweepResult out;
  out.extra_columns = {"min_gap_L", "median_gap_L", "min_gap_L_n2", "min_gap_M", "median_gap_M", "min_gap_M_n2",
                       "max_unit_residual", "max_lambda_M", "M_exact"};
  std::vector<int> ns;
  for (const auto& s : samples)
    if (std::find(ns.begin(), ns.end(), s.n) == ns.end()) ns.push_back(s.n);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int n : ns) {
    std::vector<double> gl, gm;
    double res = 0.0, lam = -1e300;
    int unit_ok = 0, count = 0;
    bool exact = true;
    for (const auto& s : samples) {
      if (s.n != n) continue;
      ++count;
      gl.push_back(s.gap_L);
      gm.push_back(s.gap_M);
      res = std::max(res, s.unit_residual);
      lam = std::max(lam, s.lambda_max_M);
      unit_ok += s.unit_residual <= 1e-10 && s.lambda_max_M <= 1.0 + 1e-10;
      exact = exact && s.M_exact;
    }
    SweepPoint pt;
    pt.param = n;
    pt.rate = static_cast<double>(unit_ok) / count;
    pt.stderr_rate = 0.0;
    pt.mean_vI = pt.mean_vII = pt.mean_vIII = nan;
    pt.N = count;
    const double n2 = static_cast<double>(n) * n;
    const double ml = *std::min_element(gl.begin(), gl.end());
    const double mm = *std::min_element(gm.begin(), gm.end());
    pt.extra = {ml, median_of(gl), ml * n2, mm, median_of(gm), mm * n2, res, lam, exact ? 1.0 : 0.0};
    out.points.push_back(pt);
  }
  return out;
}

SweepResult gap_study(int n_min, int n_max, int trials, std::uint64_t seed, const GapOptions& opt) {
  SweepResult r = gap_summary(gap_samples(n_min, n_max, trials, seed, opt));
  for (auto& p : r.points) p.seed = seed;
  return r;
}

}  // namespace qnet
