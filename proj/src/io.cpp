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

#include "qnet/io.hpp"

#include <algorithm>

#include "qnet/format.hpp"

namespace qnet {

void require_object(const Json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError("'" + path + "' must be an object");
}

void reject_unknown_keys(const Json& obj, const std::vector<std::string>& allowed, const std::string& path) {
  require_object(obj, path);
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ConfigError("unknown key '" + path + "." + it.key() + "'");
}

namespace {

double get_number(const Json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError("'" + path + "' must be a number");
  return j.get<double>();
}

std::vector<double> get_numbers(const Json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError("'" + path + "' must be an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(get_number(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

const Json& need(const Json& obj, const std::string& key, const std::string& path) {
  if (!obj.contains(key)) throw ConfigError("missing key '" + path + "." + key + "'");
  return obj.at(key);
}

Mat dense_from(const Json& re, const Json& im, long dim, const std::string& path) {
  Mat m = Mat::Zero(dim, dim);
  if (!re.is_array() || static_cast<long>(re.size()) != dim) throw ConfigError("'" + path + ".re' must have " + std::to_string(dim) + " rows");
  for (long r = 0; r < dim; ++r) {
    std::vector<double> row = get_numbers(re[static_cast<std::size_t>(r)], path + ".re");
    if (static_cast<long>(row.size()) != dim) throw ConfigError("'" + path + ".re' rows must have " + std::to_string(dim) + " entries");
    for (long c = 0; c < dim; ++c) m(r, c) += row[static_cast<std::size_t>(c)];
  }
  if (!im.is_null()) {
    if (!im.is_array() || static_cast<long>(im.size()) != dim) throw ConfigError("'" + path + ".im' must have " + std::to_string(dim) + " rows");
    for (long r = 0; r < dim; ++r) {
      std::vector<double> row = get_numbers(im[static_cast<std::size_t>(r)], path + ".im");
      if (static_cast<long>(row.size()) != dim) throw ConfigError("'" + path + ".im' rows must have " + std::to_string(dim) + " entries");
      for (long c = 0; c < dim; ++c) m(r, c) += cplx(0.0, row[static_cast<std::size_t>(c)]);
    }
  }
  return m;
}

}  // namespace

TargetSpec target_from_json(const Json& j, int n, const std::string& path) {
  const long dim = 1L << n;
  std::string kind;
  if (j.is_string()) {
    kind = j.get<std::string>();
  } else {
    require_object(j, path);
    kind = need(j, "kind", path).is_string() ? j.at("kind").get<std::string>() : "";
  }
  TargetSpec t;
  try {
    if (kind == "zero") {
      if (j.is_object()) reject_unknown_keys(j, {"kind"}, path);
      Vec v = Vec::Zero(dim);
      v(0) = 1.0;
      t.pure = v;
    } else if (kind == "maximally_mixed") {
      if (j.is_object()) reject_unknown_keys(j, {"kind"}, path);
      t.density = DensityOperator(Mat::Identity(dim, dim) / static_cast<double>(dim));
      return t;
    } else if (kind == "haar") {
      if (!j.is_object()) throw ConfigError("'" + path + "' haar target needs a seed");
      reject_unknown_keys(j, {"kind", "seed"}, path);
      const Json& s = need(j, "seed", path);
      if (!s.is_number_unsigned()) throw ConfigError("'" + path + ".seed' must be an unsigned integer");
      Rng rng = derive_rng(s.get<std::uint64_t>(), {0x68616172ull});
      t.pure = haar_random_state(n, rng).amplitudes();
    } else if (kind == "amplitudes") {
      reject_unknown_keys(j, {"kind", "re", "im"}, path);
      std::vector<double> re = get_numbers(need(j, "re", path), path + ".re");
      std::vector<double> im = j.contains("im") ? get_numbers(j.at("im"), path + ".im") : std::vector<double>(re.size(), 0.0);
      if (static_cast<long>(re.size()) != dim || im.size() != re.size())
        throw ConfigError("'" + path + "' amplitudes need 2^n entries");
      Vec v(dim);
      for (long i = 0; i < dim; ++i) v(i) = cplx(re[static_cast<std::size_t>(i)], im[static_cast<std::size_t>(i)]);
      t.pure = PureState(v).amplitudes();
    } else if (kind == "density") {
      reject_unknown_keys(j, {"kind", "re", "im"}, path);
      t.density = DensityOperator(dense_from(need(j, "re", path), j.contains("im") ? j.at("im") : Json(), dim, path));
      return t;
    } else {
      throw ConfigError("'" + path + ".kind' has unknown value '" + kind + "'");
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
  t.density = DensityOperator(PureState(*t.pure).density());
  return t;
}

DeviceStrategy strategy_from_json(const Json& j, const std::string& path) {
  try {
    if (j.is_string()) {
      const StrategyKind k = strategy_kind_from_text(j.get<std::string>());
      if (k == StrategyKind::Rotated || k == StrategyKind::Adaptive)
        throw ConfigError("'" + path + "' needs an object to configure " + j.get<std::string>());
      DeviceStrategy s;
      s.kind = k;
      return s;
    }
    require_object(j, path);
    reject_unknown_keys(j, {"kind", "angle", "rule", "choices"}, path);
    const Json& kind = need(j, "kind", path);
    if (!kind.is_string()) throw ConfigError("'" + path + ".kind' must be a string");
    DeviceStrategy s;
    s.kind = strategy_kind_from_text(kind.get<std::string>());
    if (j.contains("angle")) s.angle = get_number(j.at("angle"), path + ".angle");
    if (s.kind == StrategyKind::Adaptive) {
      if (j.contains("rule")) {
        if (!j.at("rule").is_string()) throw ConfigError("'" + path + ".rule' must be a string");
        s.rule = j.at("rule").get<std::string>();
        if (s.rule != "alternate" && s.rule != "parity") throw ConfigError("'" + path + ".rule' must be alternate or parity");
      }
      if (j.contains("choices")) {
        const Json& c = j.at("choices");
        if (!c.is_array() || c.size() != 2) throw ConfigError("'" + path + ".choices' must list two strategy kinds");
        for (std::size_t i = 0; i < 2; ++i) {
          if (!c[i].is_string()) throw ConfigError("'" + path + ".choices' entries must be strings");
          s.choices[i] = strategy_kind_from_text(c[i].get<std::string>());
          if (s.choices[i] == StrategyKind::Adaptive) throw ConfigError("'" + path + ".choices' cannot nest adaptive");
        }
      }
    } else if (j.contains("rule") || j.contains("choices")) {
      throw ConfigError("'" + path + "' rule/choices only apply to adaptive strategies");
    }
    return s;
  } catch (const std::invalid_argument& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
}

Json strategy_to_json(const DeviceStrategy& s) {
  Json j;
  j["kind"] = strategy_kind_text(s.kind);
  if (s.kind == StrategyKind::Rotated || (s.kind == StrategyKind::Adaptive && s.angle != 0.0)) j["angle"] = s.angle;
  if (s.kind == StrategyKind::Adaptive) {
    j["rule"] = s.rule;
    j["choices"] = {strategy_kind_text(s.choices[0]), strategy_kind_text(s.choices[1])};
  }
  return j;
}

NetworkModel model_from_json(const Json& j, const std::string& path) {
  reject_unknown_keys(j, {"n", "target", "bell_noise", "strategies"}, path);
  const Json& jn = need(j, "n", path);
  if (!jn.is_number_integer() || jn.get<long>() < 1 || jn.get<long>() > 16)
    throw ConfigError("'" + path + ".n' must be an integer in 1..16");
  NetworkModel m;
  m.n = jn.get<int>();
  m.target = target_from_json(need(j, "target", path), m.n, path + ".target").density;
  const std::size_t res = static_cast<std::size_t>(2 * m.n - 1);
  if (!j.contains("bell_noise")) {
    m.bell_noise.assign(res, 0.0);
  } else if (j.at("bell_noise").is_number()) {
    m.bell_noise.assign(res, get_number(j.at("bell_noise"), path + ".bell_noise"));
  } else {
    m.bell_noise = get_numbers(j.at("bell_noise"), path + ".bell_noise");
    if (m.bell_noise.size() != res) throw ConfigError("'" + path + ".bell_noise' needs 2n-1 entries");
  }
  for (double p : m.bell_noise)
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("'" + path + ".bell_noise' entries must lie in [0,1]");
  if (!j.contains("strategies")) {
    m.strategies.assign(static_cast<std::size_t>(m.n), DeviceStrategy::ideal());
  } else {
    const Json& s = j.at("strategies");
    if (!s.is_array() || static_cast<int>(s.size()) != m.n) throw ConfigError("'" + path + ".strategies' needs n entries");
    for (std::size_t l = 0; l < s.size(); ++l)
      m.strategies.push_back(strategy_from_json(s[l], path + ".strategies[" + std::to_string(l) + "]"));
  }
  return m;
}

Json model_to_json(const NetworkModel& m) {
  Json j;
  j["n"] = m.n;
  Json re = Json::array(), im = Json::array();
  const Mat& d = m.target.matrix();
  for (long r = 0; r < d.rows(); ++r) {
    Json rr = Json::array(), ii = Json::array();
    for (long c = 0; c < d.cols(); ++c) {
      rr.push_back(d(r, c).real());
      ii.push_back(d(r, c).imag());
    }
    re.push_back(rr);
    im.push_back(ii);
  }
  j["target"] = {{"kind", "density"}, {"re", re}, {"im", im}};
  j["bell_noise"] = m.bell_noise;
  Json s = Json::array();
  for (const auto& st : m.strategies) s.push_back(strategy_to_json(st));
  j["strategies"] = s;
  return j;
}

Json counters_to_json(const CounterBank& b) {
  Json j;
  j["n_I"] = b.nI;
  j["e_I"] = b.eI;
  j["n_II"] = b.nII;
  j["e_II"] = b.eII;
  j["n_III"] = b.nIII;
  j["e_III"] = b.eIII;
  j["s_III"] = b.sIII;
  return j;
}

Json report_to_json(const CertificationReport& r) {
  Json j;
  j["n"] = r.n;
  j["variant"] = variant_text(r.variant);
  j["N"] = r.N;
  j["seed"] = r.seed;
  j["eps"] = r.eps;
  j["delta"] = r.delta;
  j["W"] = r.W;
  j["v_I"] = r.vI;
  j["v_II"] = r.vII;
  j["v_III"] = r.vIII;
  j["v_III_stderr"] = r.vIII_stderr;
  j["S"] = r.S;
  j["v_I_lk"] = r.vI_lk;
  j["v_II_link"] = r.vII_link;
  j["threshold_I"] = r.threshold_I;
  j["threshold_II"] = r.threshold_II;
  j["verdict"] = verdict_text(r.verdict);
  j["counters"] = counters_to_json(r.counters);
  return j;
}

void write_counters_csv(std::ostream& os, const CounterBank& b) {
  os << "index,l,k,i,j,n,e\n";
  std::size_t row = 0;
  for (int l = 0; l < b.n(); ++l)
    for (int k = 0; k < 3; ++k)
      for (int i = 0; i < 2; ++i)
        for (int jj = 0; jj < 2; ++jj) {
          const std::size_t idx = CounterBank::index_I(l, k, i, jj);
          os << row++ << ',' << l << ',' << k << ',' << i << ',' << jj << ',' << b.nI[idx] << ',' << format_double(b.eI[idx]) << '\n';
        }
  for (std::size_t l = 0; l < b.nII.size(); ++l)
    os << row++ << ',' << l << ",-1,-1,-1," << b.nII[l] << ',' << format_double(b.eII[l]) << '\n';
  os << row << ",-1,-1,-1,-1," << b.nIII << ',' << format_double(b.eIII) << '\n';
}

}  // namespace qnet
