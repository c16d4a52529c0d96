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

#include "qnet/stats.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace qnet {

std::string variant_text(Variant v) { return v == Variant::Local ? "local" : "shared"; }

Variant variant_from_text(const std::string& s) {
  if (s == "local") return Variant::Local;
  if (s == "shared") return Variant::Shared;
  throw std::invalid_argument("unknown variant '" + s + "'");
}

void PlanInputs::validate() const {
  if (!(W > 0.0)) throw std::invalid_argument("W must be positive");
  if (n < 1) throw std::invalid_argument("n must be positive");
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  if (!(delta > 0.0 && delta <= 1.0)) throw std::invalid_argument("delta must lie in (0,1]");
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("p must lie in (0,1]");
  if (!(c > 0.0)) throw std::invalid_argument("c must be positive");
}

namespace {

std::int64_t ceil_count(double v) {
  if (!std::isfinite(v) || v > 9.0e18) throw std::overflow_error("planned count does not fit in 64 bits");
  // Guard against values like 300.00000000000006 from rounding in log.
  const double r = std::round(v);
  if (std::abs(v - r) <= 1e-9 * std::max(1.0, std::abs(v))) return static_cast<std::int64_t>(r);
  return static_cast<std::int64_t>(std::ceil(v));
}

}  // namespace

std::int64_t chernoff_rounds(double p, double target_count, double delta, double c) {
  PlanInputs in;
  in.p = p;
  in.delta = delta;
  in.c = c;
  in.validate();
  if (target_count < 0.0) throw std::invalid_argument("target count must be nonnegative");
  return ceil_count(c * (target_count + std::log(1.0 / delta)) / p);
}

std::int64_t hoeffding_samples(double sigma, double eps, double delta, double c) {
  PlanInputs in;
  in.eps = eps;
  in.delta = delta;
  in.c = c;
  in.validate();
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  return ceil_count(c * sigma * sigma / (eps * eps) * std::log(1.0 / delta));
}

std::int64_t plan_N(Variant v, const PlanInputs& in) {
  in.validate();
  const double n = in.n;
  const double npow = v == Variant::Local ? std::pow(n, 5) : std::pow(n, 4);
  return ceil_count(in.c * std::pow(in.W, 4) * npow * std::log(n / in.delta) / std::pow(in.eps, 4));
}

double mixed_chernoff_tail(double p, std::int64_t N, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("p must lie in (0,1]");
  if (N < 1) throw std::invalid_argument("N must be positive");
  return std::exp(-eps * eps * p * static_cast<double>(N) / (2.0 + eps));
}

StreamCheck hoeffding_stream_check(double mu, double eps, double delta, double c, std::int64_t reps, std::uint64_t seed) {
  StreamCheck out;
  out.T = hoeffding_samples(1.0, eps, delta, c);
  out.repetitions = reps;
  out.bound = delta;
  std::vector<int> hit(static_cast<std::size_t>(reps), 0);
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < reps; ++r) {
    Rng rng = derive_rng(seed, {static_cast<std::uint64_t>(r)});
    std::int64_t ones = 0;
    for (std::int64_t t = 0; t < out.T; ++t) ones += uniform01(rng) < mu;
    const double mean = static_cast<double>(ones) / static_cast<double>(out.T);
    hit[static_cast<std::size_t>(r)] = std::abs(mean - mu) > eps;
  }
  for (int h : hit) out.violations += h;
  out.frequency = static_cast<double>(out.violations) / static_cast<double>(reps);
  return out;
}

StreamCheck mixed_chernoff_stream_check(double p, std::int64_t N, double eps, std::int64_t reps, std::uint64_t seed) {
  StreamCheck out;
  out.T = N;
  out.repetitions = reps;
  out.bound = mixed_chernoff_tail(p, N, eps);
  std::vector<int> hit(static_cast<std::size_t>(reps), 0);
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < reps; ++r) {
    Rng rng = derive_rng(seed, {static_cast<std::uint64_t>(r)});
    double observed = 0.0, expected = 0.0, drift = 0.0;
    for (std::int64_t i = 0; i < N; ++i) {
      // Conditional mean chases the running tally of accepted values.
      const double v = 0.8 * std::tanh(drift / 8.0);
      expected += v;
      const bool accepted = uniform01(rng) < p;
      const double vhat = uniform01(rng) < 0.5 * (1.0 + v) ? 1.0 : -1.0;
      if (accepted) {
        observed += vhat;
        drift += vhat;
      }
    }
    const double stat = observed / (p * static_cast<double>(N)) - expected / static_cast<double>(N);
    hit[static_cast<std::size_t>(r)] = stat >= eps;
  }
  for (int h : hit) out.violations += h;
  out.frequency = static_cast<double>(out.violations) / static_cast<double>(reps);
  return out;
}

}  // namespace qnet
