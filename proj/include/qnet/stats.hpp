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

#ifndef QNET_STATS_HPP
#define QNET_STATS_HPP

#include <cstdint>
#include <string>

#include "qnet/rng.hpp"

namespace qnet {

enum class Variant { Local, Shared };
std::string variant_text(Variant v);
Variant variant_from_text(const std::string& s);

struct PlanInputs {
  double W = 1.0;
  int n = 1;
  double eps = 0.1;
  double delta = 0.05;
  double p = 1.0;
  double c = 1.0;
  void validate() const;
};

// ceil(c (1/p)(target + ln(1/delta)))
std::int64_t chernoff_rounds(double p, double target_count, double delta, double c = 1.0);
// ceil(c (sigma^2/eps^2) ln(1/delta))
std::int64_t hoeffding_samples(double sigma, double eps, double delta, double c = 1.0);
// ceil(c W^4 n^e ln(n/delta) / eps^4) with e = 5 (local) or 4 (shared).
std::int64_t plan_N(Variant v, const PlanInputs& in);
// exp(-eps^2 p N / (2 + eps))
double mixed_chernoff_tail(double p, std::int64_t N, double eps);

struct StreamCheck {
  std::int64_t repetitions = 0;
  std::int64_t violations = 0;
  double frequency = 0.0;
  double bound = 0.0;
  std::int64_t T = 0;
};

// Fraction of repeated Bernoulli(mu) experiments of planned length whose
// mean deviates by more than eps.
StreamCheck hoeffding_stream_check(double mu, double eps, double delta, double c, std::int64_t reps, std::uint64_t seed);

// Repeated adaptive streams: delta_i ~ Bernoulli(p), v_i in {-1,1} whose
// conditional mean depends on the history. Counts how often
// sum(delta v)/(pN) - sum(E v)/N >= eps.
StreamCheck mixed_chernoff_stream_check(double p, std::int64_t N, double eps, std::int64_t reps, std::uint64_t seed);

}  // namespace qnet

#endif
