#pragma once

// Experiment configuration: a flat key=value file whose keys mirror the
// ScenarioConfig fields, validated before anything runs.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "flowprint/alice.hpp"
#include "flowprint/error.hpp"
#include "flowprint/limits.hpp"
#include "flowprint/queuesim.hpp"

namespace flowprint {

struct ScenarioConfig {
  int scenario = 1;
  int setting = 0;              // 0: derived from the scenario
  double T = 0.0;
  double t1 = 0.0;              // > 0 together with t2: explicit phase split
  double t2 = 0.0;
  std::int64_t M = 0;           // flows observed by Alice (0: equal to m)
  std::int64_t m = 0;           // fingerprinted flows (0: from the limits)
  double q = -1.0;              // Bernoulli marking probability (scenario 6)
  std::vector<double> lambda;   // one value, or one per flow
  std::vector<double> mu;       // one value, or one per queue
  std::vector<double> lambda_interf{0.0};
  ServiceFamily service = ServiceFamily::kExponential;
  double shape = 1.0;
  double epsilon = 0.1;
  double zeta = 0.01;
  std::int64_t trials = 100;
  std::uint64_t seed = 1;
  double r = 1.0;               // slowdown multiplier (r, r')
  double r_dblprime = 1.0;      // codebook size = floor(r'' m)
  std::int64_t links = 0;       // flows simulated (0: all M)
  bool decode = true;
  bool detect = true;
  std::string sweep_var;        // r | r_prime | r_dblprime | shape | T | q
  std::vector<double> sweep_grid;
  std::vector<double> u_grid;   // thresholds in units of sqrt(expected count)

  // Resolved by resolve().
  PhasePlan plan;
  NetworkLimits limits;
  std::size_t codebook_size = 0;

  Scenario scenario_enum() const { return scenario_from_int(scenario); }
  double lambda_of(std::size_t i) const { return lambda.size() == 1 ? lambda[0] : lambda.at(i); }
  double lambda_min() const { return *std::min_element(lambda.begin(), lambda.end()); }
  bool bernoulli() const { return q >= 0.0; }

  QueueSpec queue(std::size_t i) const {
    QueueSpec s;
    s.service.mu = mu.size() == 1 ? mu[0] : mu.at(i);
    s.service.family = service;
    s.service.shape = shape;
    s.lambda_interf = lambda_interf.size() == 1 ? lambda_interf[0] : lambda_interf.at(i);
    return s;
  }

  std::vector<QueueSpec> queues() const {
    std::vector<QueueSpec> out;
    for (std::int64_t i = 0; i < M; ++i) out.push_back(queue(static_cast<std::size_t>(i)));
    return out;
  }

  /// Validate and fill in derived values (setting, m, M, plan, codebook
  /// size). Throws ConfigError naming the offending key.
  void resolve();
};

namespace detail {

inline void config_fail(const std::string& key, const std::string& why) {
  throw ConfigError(key + ": " + why);
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& key, std::string_view v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || p != end || !std::isfinite(out)) {
    config_fail(key, "not a number: '" + std::string(v) + "'");
  }
  return out;
}

inline std::int64_t parse_int(const std::string& key, std::string_view v) {
  std::int64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || p != end) config_fail(key, "not an integer: '" + std::string(v) + "'");
  return out;
}

inline std::vector<double> parse_list(const std::string& key, std::string_view v) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    const auto piece = trim(v.substr(start, comma == std::string_view::npos ? v.npos : comma - start));
    if (piece.empty()) config_fail(key, "empty list element");
    out.push_back(parse_double(key, piece));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline bool parse_bool(const std::string& key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  config_fail(key, "expected true/false");
  return false;
}

}  // namespace detail

/// Apply one key=value pair.
inline void set_config_key(ScenarioConfig& c, const std::string& key, const std::string& value) {
  using namespace detail;
  if (key == "scenario") c.scenario = static_cast<int>(parse_int(key, value));
  else if (key == "setting") c.setting = static_cast<int>(parse_int(key, value));
  else if (key == "T") c.T = parse_double(key, value);
  else if (key == "t1") c.t1 = parse_double(key, value);
  else if (key == "t2") c.t2 = parse_double(key, value);
  else if (key == "M") c.M = parse_int(key, value);
  else if (key == "m") c.m = parse_int(key, value);
  else if (key == "q") c.q = parse_double(key, value);
  else if (key == "lambda") c.lambda = parse_list(key, value);
  else if (key == "mu") c.mu = parse_list(key, value);
  else if (key == "lambda_interf") c.lambda_interf = parse_list(key, value);
  else if (key == "service") {
    if (value == "exponential") c.service = ServiceFamily::kExponential;
    else if (value == "weibull") c.service = ServiceFamily::kWeibull;
    else config_fail(key, "expected exponential or weibull");
  }
  else if (key == "shape") c.shape = parse_double(key, value);
  else if (key == "epsilon") c.epsilon = parse_double(key, value);
  else if (key == "zeta") c.zeta = parse_double(key, value);
  else if (key == "trials") c.trials = parse_int(key, value);
  else if (key == "seed") {
    const auto* end = value.data() + value.size();
    auto [p, ec] = std::from_chars(value.data(), end, c.seed);
    if (ec != std::errc{} || p != end) config_fail(key, "not an unsigned integer");
  }
  else if (key == "r" || key == "r_prime") c.r = parse_double(key, value);
  else if (key == "r_dblprime") c.r_dblprime = parse_double(key, value);
  else if (key == "links") c.links = parse_int(key, value);
  else if (key == "decode") c.decode = parse_bool(key, value);
  else if (key == "detect") c.detect = parse_bool(key, value);
  else if (key == "sweep_var") c.sweep_var = value;
  else if (key == "sweep_grid") c.sweep_grid = parse_list(key, value);
  else if (key == "u_grid") c.u_grid = parse_list(key, value);
  else config_fail(key, "unknown key");
}

/// Parse key=value lines; '#' starts a comment. Returns the config and the
/// set of keys seen (for required-key checks).
inline ScenarioConfig parse_config(std::istream& in, std::vector<std::string>* seen = nullptr) {
  ScenarioConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto text = detail::trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    }
    const auto key = detail::trim(std::string_view(text).substr(0, eq));
    const auto value = detail::trim(std::string_view(text).substr(eq + 1));
    set_config_key(c, key, value);
    if (seen) seen->push_back(key);
  }
  return c;
}

inline ScenarioConfig parse_config_string(const std::string& text,
                                          std::vector<std::string>* seen = nullptr) {
  std::istringstream in(text);
  return parse_config(in, seen);
}

inline ScenarioConfig load_config(const std::filesystem::path& path,
                                  std::vector<std::string>* seen = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  return parse_config(in, seen);
}

inline void ScenarioConfig::resolve() {
  using detail::config_fail;
  if (scenario < 1 || scenario > 6) config_fail("scenario", "must be in 1..6");
  const Scenario sc = scenario_enum();
  if (setting == 0) setting = setting_of(sc);
  if (setting != setting_of(sc)) {
    config_fail("setting", "scenario " + std::to_string(scenario) + " requires setting " +
                               std::to_string(setting_of(sc)));
  }
  if (lambda.empty()) config_fail("lambda", "missing required key");
  if (mu.empty()) config_fail("mu", "missing required key");
  const bool explicit_phases = t1 > 0.0 || t2 > 0.0;
  if (explicit_phases) {
    if (!(t1 > 0.0 && t2 > 0.0)) config_fail("t1", "t1 and t2 must be given together");
    if (T != 0.0 && std::abs(T - (t1 + t2)) > 1e-9 * T) config_fail("T", "T must equal t1 + t2");
    T = t1 + t2;
  }
  if (!(T > 0.0)) config_fail("T", "missing required key (or not positive)");
  if (!(epsilon > 0.0 && epsilon < 0.5)) config_fail("epsilon", "must lie in (0, 1/2)");
  if (!(zeta > 0.0 && zeta < 1.0)) config_fail("zeta", "must lie in (0, 1)");
  if (trials < 1) config_fail("trials", "must be >= 1");
  if (!(r >= 0.0)) config_fail("r", "must be >= 0");
  if (!(r_dblprime > 0.0)) config_fail("r_dblprime", "must be positive");
  for (double l : lambda) {
    if (!(l > 0.0)) config_fail("lambda", "rates must be positive");
  }
  if (setting == 2) {
    for (double li : lambda_interf) {
      if (li != 0.0) config_fail("lambda_interf", "setting 2 queues carry no cross traffic");
    }
  }
  if (bernoulli()) {
    if (sc != Scenario::k6) config_fail("q", "Bernoulli marking is only defined for scenario 6");
    if (q > 1.0) config_fail("q", "must lie in [0, 1]");
  }

  // Flow counts. Scenarios 1/3/5 fingerprint every flow.
  if (M == 0) {
    const auto longest = std::max({lambda.size(), mu.size(), lambda_interf.size()});
    if (longest > 1) M = static_cast<std::int64_t>(longest);
  }
  if (m == 0 && !bernoulli()) {
    // With M unknown the network is a single representative queue.
    const auto nq = static_cast<std::size_t>(std::max<std::int64_t>(M, 1));
    std::vector<QueueSpec> qs;
    std::vector<double> ls;
    for (std::size_t i = 0; i < nq; ++i) {
      try {
        qs.push_back(queue(i));
        ls.push_back(lambda_of(i));
      } catch (const std::out_of_range&) {
        config_fail("M", "per-flow lists must have one entry or M entries");
      }
    }
    NetworkLimits nl;
    try {
      nl = network_capacities(qs, ls);
    } catch (const Error& e) {
      config_fail("mu", e.what());
    }
    if (is_subset_scenario(sc)) {
      if (M == 0) config_fail("M", "missing required key (needed to derive m)");
      const double C = setting == 2 ? nl.C_dblprime : nl.C;
      m = max_flows_scenario2(T, C, M, epsilon, zeta).m;
    } else {
      const double C = sc == Scenario::k3 ? nl.C_prime : (setting == 2 ? nl.C_dblprime : nl.C);
      m = max_flows_scenario1(T, C, alpha_for(epsilon, zeta));
    }
    if (m < 1) config_fail("m", "no flow can be fingerprinted at this T");
  }
  if (bernoulli() && m == 0) m = std::max<std::int64_t>(1, std::llround(static_cast<double>(M) * q));
  if (M == 0) M = m;
  if (M < 1) config_fail("M", "must be >= 1");
  if (m < 1) config_fail("m", "must be >= 1");
  if (!is_subset_scenario(sc) && m != M) config_fail("m", "scenarios 1/3/5 fingerprint all flows: m must equal M");
  if (m > M) config_fail("m", "must not exceed M");
  if (lambda.size() != 1 && static_cast<std::int64_t>(lambda.size()) != M) {
    config_fail("lambda", "need one rate or M rates");
  }
  if (mu.size() != 1 && static_cast<std::int64_t>(mu.size()) != M) config_fail("mu", "need one rate or M rates");
  if (lambda_interf.size() != 1 && static_cast<std::int64_t>(lambda_interf.size()) != M) {
    config_fail("lambda_interf", "need one rate or M rates");
  }
  if (links == 0) links = M;
  if (links < 1 || links > M) config_fail("links", "must lie in 1..M");
  if (service == ServiceFamily::kWeibull && !(shape > 0.0)) config_fail("shape", "must be positive");

  for (std::int64_t i = 0; i < M; ++i) {
    queue(static_cast<std::size_t>(i)).check_stable(lambda_of(static_cast<std::size_t>(i)),
                                                   static_cast<std::size_t>(i));
  }
  limits = network_capacities(queues(), lambda);

  const auto base = bernoulli() ? M : m;
  codebook_size = static_cast<std::size_t>(std::floor(r_dblprime * static_cast<double>(base)));
  if (codebook_size < 1) config_fail("r_dblprime", "codebook would be empty");
  if (!bernoulli() && codebook_size < static_cast<std::size_t>(std::min(m, links))) {
    config_fail("r_dblprime", "codebook smaller than the number of fingerprinted links");
  }

  const auto um = static_cast<std::size_t>(m);
  const auto uM = static_cast<std::size_t>(M);
  try {
    plan = explicit_phases
               ? plan_phases_explicit(sc, t1, t2, um, uM, lambda_min(), epsilon, zeta)
               : plan_phases(sc, T, um, uM, lambda_min(), epsilon, zeta);
    for (std::int64_t i = 0; i < M; ++i) {
      const double li = lambda_of(static_cast<std::size_t>(i));
      if (!(r * slowdown_for(plan, li) < li)) {
        throw InfeasiblePlanError("r * delta >= lambda for flow " + std::to_string(i + 1));
      }
    }
  } catch (const Error& e) {
    config_fail("T", std::string("infeasible phase plan: ") + e.what());
  }

  if (!u_grid.empty()) {
    for (double u : u_grid) {
      if (!(u >= 0.0)) config_fail("u_grid", "thresholds must be >= 0");
    }
  }
  if (!sweep_var.empty()) {
    static const char* kVars[] = {"r", "r_prime", "r_dblprime", "shape", "T", "q"};
    if (std::find(std::begin(kVars), std::end(kVars), sweep_var) == std::end(kVars)) {
      config_fail("sweep_var", "unknown sweep variable '" + sweep_var + "'");
    }
  }
}

}  // namespace flowprint
