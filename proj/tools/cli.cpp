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

#include "cli.hpp"

#include <omp.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "qnet/format.hpp"

namespace qnet::cli {

namespace fs = std::filesystem;

namespace {

double number_at(const Json& obj, const std::string& key, const std::string& path) {
  const Json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError("'" + path + "." + key + "' must be a number");
  return v.get<double>();
}

std::int64_t count_at(const Json& obj, const std::string& key, const std::string& path) {
  const Json& v = obj.at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw ConfigError("'" + path + "." + key + "' must be a nonnegative integer");
  return v.get<std::int64_t>();
}

std::string string_at(const Json& obj, const std::string& key, const std::string& path) {
  const Json& v = obj.at(key);
  if (!v.is_string()) throw ConfigError("'" + path + "." + key + "' must be a string");
  return v.get<std::string>();
}

Vec pure_state_from(const Json& j, int n, const std::string& path) {
  TargetSpec t = target_from_json(j, n, path);
  if (!t.pure) throw ConfigError("'" + path + "' must be a pure state");
  return *t.pure;
}

BasisDistribution distribution_from_json(const Json& j, int n, const std::string& path) {
  if (j.is_string()) {
    if (j.get<std::string>() != "uniform") throw ConfigError("'" + path + "' must be \"uniform\" or an object");
    return BasisDistribution::uniform(n);
  }
  reject_unknown_keys(j, {"marginals"}, path);
  if (!j.contains("marginals")) throw ConfigError("missing key '" + path + ".marginals'");
  const Json& m = j.at("marginals");
  if (!m.is_array() || static_cast<int>(m.size()) != n) throw ConfigError("'" + path + ".marginals' needs n rows");
  std::vector<std::array<double, 3>> rows;
  for (std::size_t l = 0; l < m.size(); ++l) {
    if (!m[l].is_array() || m[l].size() != 3) throw ConfigError("'" + path + ".marginals' rows need 3 entries");
    std::array<double, 3> r{};
    for (std::size_t p = 0; p < 3; ++p) {
      if (!m[l][p].is_number()) throw ConfigError("'" + path + ".marginals' entries must be numbers");
      r[p] = m[l][p].get<double>();
    }
    rows.push_back(r);
  }
  try {
    return BasisDistribution::product(rows);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
}

ProtocolSection protocol_from_json(const Json& j, int n, bool selftest) {
  const std::string path = "protocol";
  reject_unknown_keys(j, {"variant", "eps", "delta", "c", "c_I", "c_II", "N", "observable", "engine", "chunk_rounds",
                          "marginal_floor"},
                      path);
  ProtocolSection p;
  ProtocolConfig& c = p.config;
  try {
    if (j.contains("variant")) c.variant = variant_from_text(string_at(j, "variant", path));
    if (j.contains("engine")) {
      const std::string e = string_at(j, "engine", path);
      if (e == "full") c.engine = EngineKind::Full;
      else if (e == "factored") c.engine = EngineKind::Factored;
      else throw ConfigError("'protocol.engine' must be full or factored");
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError("'protocol': " + std::string(e.what()));
  }
  if (selftest && (j.contains("eps") || j.contains("observable")))
    throw ConfigError("'protocol.eps' and 'protocol.observable' are derived from 'selftest'");
  if (j.contains("eps")) c.eps = number_at(j, "eps", path);
  if (j.contains("delta")) c.delta = number_at(j, "delta", path);
  if (j.contains("c")) p.plan_c = number_at(j, "c", path);
  if (j.contains("c_I")) c.c_I = number_at(j, "c_I", path);
  if (j.contains("c_II")) c.c_II = number_at(j, "c_II", path);
  if (j.contains("marginal_floor")) c.marginal_floor = number_at(j, "marginal_floor", path);
  if (j.contains("chunk_rounds")) c.chunk_rounds = count_at(j, "chunk_rounds", path);
  if (j.contains("N")) {
    c.N = count_at(j, "N", path);
    p.has_N = true;
  }
  if (!(p.plan_c > 0.0)) throw ConfigError("'protocol.c' must be positive");
  if (!selftest) {
    c.spec = j.contains("observable") ? observable_from_json(j.at("observable"), n, "protocol.observable")
                                      : parity_spec(BasisDistribution::uniform(n));
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("'protocol': " + std::string(e.what()));
    }
  }
  return p;
}

SelfTestSection selftest_from_json(const Json& j, int n) {
  const std::string path = "selftest";
  reject_unknown_keys(j, {"eps_prime", "state", "gap", "sampled_m"}, path);
  SelfTestSection s;
  s.enabled = true;
  if (!j.contains("state")) throw ConfigError("missing key 'selftest.state'");
  s.psi = pure_state_from(j.at("state"), n, "selftest.state");
  if (j.contains("eps_prime")) s.eps_prime = number_at(j, "eps_prime", path);
  if (!(s.eps_prime > 0.0)) throw ConfigError("'selftest.eps_prime' must be positive");
  if (j.contains("gap")) s.options.gap = number_at(j, "gap", path);
  if (j.contains("sampled_m")) s.options.sampled_m = static_cast<int>(count_at(j, "sampled_m", path));
  return s;
}

void apply_protocol_to_selftest(const ProtocolSection& p, SelfTestSection& s) {
  s.options.c = p.plan_c;
  s.options.N = p.has_N ? p.config.N : 0;
  s.options.c_I = p.config.c_I;
  s.options.c_II = p.config.c_II;
  s.options.chunk_rounds = p.config.chunk_rounds;
  s.options.engine = p.config.engine;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + p.string() + "'");
  f << text;
}

fs::path out_dir(const std::string& out) {
  fs::path d = out.empty() ? fs::path(".") : fs::path(out);
  fs::create_directories(d);
  return d;
}

// Tables go to stdout and, when --out is set, to a file.
void emit_table(const std::string& text, const std::string& out, const std::string& name, std::ostream& os) {
  os << text;
  if (!out.empty()) write_text(out_dir(out) / name, text);
}

std::pair<int, int> parse_range(const std::string& s) {
  const auto dots = s.find("..");
  try {
    if (dots == std::string::npos) {
      const int v = std::stoi(s);
      return {v, v};
    }
    return {std::stoi(s.substr(0, dots)), std::stoi(s.substr(dots + 2))};
  } catch (const std::exception&) {
    throw ConfigError("range '" + s + "' must look like 2..8");
  }
}

std::vector<double> log_grid(double lo, double hi, int k) {
  std::vector<double> g;
  for (int i = 0; i < k; ++i) g.push_back(std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / (k - 1)));
  return g;
}

Json isometry_json(const IsometryPoint& p) {
  return {{"p", p.p}, {"chsh_deficit", p.chsh_deficit}, {"fidelity", p.fidelity}, {"distance", p.distance}};
}

struct Globals {
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out;
};

void apply_threads(int threads, bool adaptive) {
  if (adaptive) omp_set_num_threads(1);
  else if (threads > 0) omp_set_num_threads(threads);
}

int cmd_run(const Globals& g, const std::string& config_path, std::ostream& os) {
  RunConfig cfg = run_config_from_json(read_json_file(config_path));
  apply_threads(g.threads, cfg.model.adaptive());
  Json report;
  Verdict verdict;
  CounterBank counters;
  if (cfg.selftest.enabled) {
    apply_protocol_to_selftest(cfg.protocol, cfg.selftest);
    cfg.selftest.options.threads = g.threads;
    SelfTestResult r = run_state_selftest(cfg.selftest.psi, cfg.protocol.config.variant, cfg.selftest.eps_prime,
                                          cfg.protocol.config.delta, cfg.model, g.seed, cfg.selftest.options);
    report = report_to_json(r.report);
    report["selftest"] = {{"eps_prime", cfg.selftest.eps_prime},
                          {"gap", r.gap},
                          {"eps_underlying", r.eps_underlying},
                          {"omega_hat", r.omega_hat},
                          {"omega_threshold", r.omega_threshold}};
    report["verdict"] = verdict_text(r.verdict);
    verdict = r.verdict;
    counters = r.report.counters;
  } else {
    plan_protocol(cfg.protocol, cfg.model.n);
    cfg.protocol.config.threads = g.threads;
    CertificationReport r = run_protocol(cfg.model, cfg.protocol.config, g.seed);
    report = report_to_json(r);
    verdict = r.verdict;
    counters = r.counters;
  }
  const fs::path dir = out_dir(g.out);
  write_text(dir / "report.json", report.dump(2) + "\n");
  std::ostringstream csv;
  write_counters_csv(csv, counters);
  write_text(dir / "counters.csv", csv.str());
  os << verdict_text(verdict) << '\n';
  return verdict == Verdict::Certified ? kExitCertified : kExitFailed;
}

}  // namespace

ObservableSpec observable_from_json(const Json& j, int n, const std::string& path) {
  std::string kind;
  if (j.is_string()) {
    kind = j.get<std::string>();
  } else {
    require_object(j, path);
    if (!j.contains("kind")) throw ConfigError("missing key '" + path + ".kind'");
    kind = string_at(j, "kind", path);
  }
  const bool obj = j.is_object();
  try {
    if (kind == "parity") {
      if (obj) reject_unknown_keys(j, {"kind", "distribution"}, path);
      return parity_spec(obj && j.contains("distribution") ? distribution_from_json(j.at("distribution"), n, path + ".distribution")
                                                          : BasisDistribution::uniform(n));
    }
    if (kind == "braiding") {
      if (obj) reject_unknown_keys(j, {"kind"}, path);
      if (n != 2) throw ConfigError("'" + path + "' braiding observable needs n = 2");
      return braiding_spec();
    }
    if (kind == "constant") {
      if (!obj || !j.contains("value")) throw ConfigError("missing key '" + path + ".value'");
      reject_unknown_keys(j, {"kind", "value"}, path);
      return constant_spec(n, number_at(j, "value", path));
    }
    if (kind == "shadow_overlap" || kind == "random_basis") {
      if (!obj || !j.contains("state")) throw ConfigError("missing key '" + path + ".state'");
      reject_unknown_keys(j, {"kind", "state"}, path);
      const Vec psi = pure_state_from(j.at("state"), n, path + ".state");
      return kind == "shadow_overlap" ? shadow_overlap_spec(psi) : random_basis_spec(psi);
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
  throw ConfigError("'" + path + ".kind' has unknown value '" + kind + "'");
}

RunConfig run_config_from_json(const Json& j) {
  reject_unknown_keys(j, {"model", "protocol", "selftest"}, "config");
  if (!j.contains("model")) throw ConfigError("missing key 'config.model'");
  RunConfig c;
  c.model = model_from_json(j.at("model"), "model");
  const bool selftest = j.contains("selftest");
  c.protocol = protocol_from_json(j.contains("protocol") ? j.at("protocol") : Json::object(), c.model.n, selftest);
  if (selftest) c.selftest = selftest_from_json(j.at("selftest"), c.model.n);
  return c;
}

SweepFileConfig sweep_config_from_json(const Json& j) {
  reject_unknown_keys(j, {"kind", "grid", "reps", "model", "protocol", "selftest"}, "config");
  SweepFileConfig s;
  if (!j.contains("kind")) throw ConfigError("missing key 'config.kind'");
  s.kind = string_at(j, "kind", "config");
  if (s.kind != "completeness" && s.kind != "soundness") throw ConfigError("'config.kind' must be completeness or soundness");
  if (!j.contains("grid") || !j.at("grid").is_array() || j.at("grid").empty())
    throw ConfigError("'config.grid' must be a nonempty array of numbers");
  for (const auto& v : j.at("grid")) {
    if (!v.is_number()) throw ConfigError("'config.grid' must be a nonempty array of numbers");
    s.grid.push_back(v.get<double>());
  }
  if (j.contains("reps")) s.reps = static_cast<int>(count_at(j, "reps", "config"));
  if (s.reps < 1) throw ConfigError("'config.reps' must be positive");
  Json run = Json::object();
  for (const char* k : {"model", "protocol", "selftest"})
    if (j.contains(k)) run[k] = j.at(k);
  s.run = run_config_from_json(run);
  if (s.kind == "soundness" && !s.run.selftest.enabled) throw ConfigError("soundness sweeps need a 'selftest' section");
  return s;
}

void plan_protocol(ProtocolSection& p, int n) {
  if (p.has_N) return;
  PlanInputs in;
  in.W = p.config.spec.weight.bound;
  in.n = n;
  in.eps = p.config.eps;
  in.delta = p.config.delta;
  in.c = p.plan_c;
  p.config.N = plan_N(p.config.variant, in);
  p.has_N = true;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Simulation and certification toolkit for teleportation-based network self-testing"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Root seed (unsigned 64-bit)");
  app.add_option("--threads", g.threads, "Worker threads (0 = available parallelism)")->check(CLI::NonNegativeNumber);
  app.add_option("--out", g.out, "Output directory");

  std::string config_path;
  CLI::App* run = app.add_subcommand("run", "Run a certification protocol from a JSON config");
  run->add_option("config", config_path, "Config file")->required();

  std::string variant = "local";
  double W = 1.0, eps = 0.1, delta = 0.05, c = 1.0;
  int n = 1;
  CLI::App* plan = app.add_subcommand("plan", "Print the planned number of rounds");
  plan->add_option("--variant", variant, "local or shared");
  plan->add_option("--W", W, "Weight bound");
  plan->add_option("--n", n, "Number of parties");
  plan->add_option("--eps", eps, "Accuracy");
  plan->add_option("--delta", delta, "Failure probability");
  plan->add_option("--c", c, "Planner constant");

  std::string range = "2..4", mode = "LM";
  int trials = 5, sampled_m = 64;
  CLI::App* gap = app.add_subcommand("gap", "Spectral gap study over Haar states");
  gap->add_option("--n", range, "Party range, e.g. 2..8");
  gap->add_option("--trials", trials, "States per party count");
  gap->add_option("--mode", mode, "L (shadow overlap only) or LM (also the random-basis observable)");
  gap->add_option("--sampled-m", sampled_m, "Basis samples when the random-basis observable is not exact");

  int attack_n = 3;
  std::vector<int> flips;
  std::int64_t attack_N = 0;
  CLI::App* attack = app.add_subcommand("attack", "Transpose attack on braiding rounds");
  attack->add_option("--n", attack_n, "Number of parties");
  attack->add_option("--flip", flips, "Party using the transposed strategy (repeatable)");
  attack->add_option("--N", attack_N, "Rounds (0 = default)");

  std::string sweep_path;
  CLI::App* sweep = app.add_subcommand("sweep", "Completeness or soundness sweep from a JSON config");
  sweep->add_option("config", sweep_path, "Config file")->required();

  bool ideal = false, with_grid = false;
  double iso_p = 0.0, angle = 0.0;
  int grid_points = 12, extraction_n = 0;
  CLI::App* iso = app.add_subcommand("verify-isometry", "Swap isometry and extraction channel checks");
  iso->add_flag("--ideal", ideal, "Ideal pair and devices (p = 0)");
  iso->add_option("--p", iso_p, "Depolarizing parameter of the pair");
  iso->add_option("--angle", angle, "Rotation angle of the main party's settings");
  iso->add_flag("--grid", with_grid, "Also fit the trend over a log grid of p in [1e-4, 5e-2]");
  iso->add_option("--grid-points", grid_points, "Grid size for --grid");
  iso->add_option("--extraction-n", extraction_n, "Also verify the extraction channel for 1 or 2 parties");

  std::vector<std::string> argv_store;
  argv_store.push_back("qnet");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : kExitError;
  }

  try {
    if (*run) return cmd_run(g, config_path, out);
    if (*plan) {
      PlanInputs in;
      in.W = W;
      in.n = n;
      in.eps = eps;
      in.delta = delta;
      in.c = c;
      const Variant v = variant_from_text(variant);
      const std::int64_t N = plan_N(v, in);
      Json j = {{"variant", variant_text(v)},
                {"inputs", {{"W", W}, {"n", n}, {"eps", eps}, {"delta", delta}, {"c", c}}},
                {"N", N}};
      emit_table(j.dump() + "\n", g.out, "plan.json", out);
      return 0;
    }
    if (*gap) {
      apply_threads(g.threads, false);
      if (mode != "L" && mode != "LM") throw ConfigError("--mode must be L or LM");
      const auto [lo, hi] = parse_range(range);
      GapOptions opt;
      opt.with_M = mode == "LM";
      opt.sampled_m = sampled_m;
      std::ostringstream os;
      gap_study(lo, hi, trials, g.seed, opt).write_csv(os);
      emit_table(os.str(), g.out, "gap.csv", out);
      return 0;
    }
    if (*attack) {
      apply_threads(g.threads, false);
      const std::int64_t N = attack_N > 0 ? attack_N : attack_default_N();
      AttackResult r = transpose_attack_experiment(attack_n, flips, N, g.seed);
      std::ostringstream os;
      os << "N,seed";
      for (std::size_t l = 0; l < r.vII.size(); ++l) os << ",link_" << l;
      os << '\n' << r.N << ',' << r.seed;
      for (double v : r.vII) os << ',' << format_double(v);
      os << '\n';
      emit_table(os.str(), g.out, "attack.csv", out);
      return 0;
    }
    if (*sweep) {
      SweepFileConfig s = sweep_config_from_json(read_json_file(sweep_path));
      apply_threads(g.threads, s.run.model.adaptive());
      SweepConfig sc;
      sc.model = s.run.model;
      sc.reps = s.reps;
      sc.seed = g.seed;
      if (s.run.selftest.enabled) {
        apply_protocol_to_selftest(s.run.protocol, s.run.selftest);
        sc.selftest = true;
        sc.psi = s.run.selftest.psi;
        sc.eps_prime = s.run.selftest.eps_prime;
        sc.selftest_options = s.run.selftest.options;
        sc.selftest_options.threads = g.threads;
        sc.protocol = s.run.protocol.config;
      } else {
        plan_protocol(s.run.protocol, s.run.model.n);
        sc.protocol = s.run.protocol.config;
        sc.protocol.threads = g.threads;
      }
      SweepResult r = s.kind == "completeness" ? completeness_sweep(s.grid, sc) : soundness_sweep(s.grid, sc);
      std::ostringstream os;
      r.write_csv(os);
      emit_table(os.str(), g.out, "sweep.csv", out);
      return 0;
    }
    if (*iso) {
      const double p = ideal ? 0.0 : iso_p;
      const DeviceStrategy main = ideal || angle == 0.0 ? DeviceStrategy::ideal() : DeviceStrategy::rotated(angle);
      Json j = isometry_json(isometry_point(p, main, DeviceStrategy::ideal()));
      if (with_grid) {
        if (grid_points < 2) throw ConfigError("--grid-points must be at least 2");
        IsometryTrend t = isometry_trend(log_grid(1e-4, 5e-2, grid_points));
        Json pts = Json::array();
        for (const auto& pt : t.points) pts.push_back(isometry_json(pt));
        j["trend"] = {{"slope_distance", t.slope_distance}, {"slope_infidelity", t.slope_infidelity}, {"points", pts}};
      }
      if (extraction_n != 0) {
        if (extraction_n < 1 || extraction_n > 2) throw ConfigError("--extraction-n must be 1 or 2");
        Rng rng = derive_rng(g.seed, {0x65787472ull});
        NetworkModel m = NetworkModel::ideal(DensityOperator::from_pure(haar_random_state(extraction_n, rng)));
        std::fill(m.bell_noise.begin(), m.bell_noise.end(), p);
        if (!ideal && angle != 0.0) m.strategies[0] = DeviceStrategy::rotated(angle);
        ExtractionResult e = verify_extraction(m, parity_spec(BasisDistribution::uniform(extraction_n)));
        j["extraction"] = {{"n", extraction_n},
                           {"flag_mass", e.flag_mass},
                           {"deviation", e.deviation},
                           {"v3_exact", e.v3_exact},
                           {"channel_value", e.channel_value}};
      }
      emit_table(j.dump(2) + "\n", g.out, "isometry.json", out);
      return 0;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace qnet::cli
