#pragma once

// Closed-form limits: timing-channel capacities, the number of traceable
// flows, and the reliability / invisibility bounds.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "flowprint/alice.hpp"
#include "flowprint/error.hpp"
#include "flowprint/queuesim.hpp"
#include "flowprint/specfun.hpp"

namespace flowprint {

/// lambda * ln((mu - lambda') / lambda), nats/second.
inline double capacity_shared(double lambda, double mu, double lambda_interf) {
  detail::require(lambda > 0.0 && mu > 0.0 && lambda_interf >= 0.0,
                  "capacity_shared: rates must be positive");
  detail::require(lambda + lambda_interf < mu, "capacity_shared: queue is unstable");
  return lambda * std::log((mu - lambda_interf) / lambda);
}

struct NetworkLimits {
  double C = 0.0;             // lambda * ln(min mu' / lambda), lambda = max rate
  double C_prime = 0.0;       // lambda_min * min_i ln(mu'_i / lambda_i)
  double C_dblprime = 0.0;    // C with the cross traffic removed
  std::vector<double> effective_mu;
};

/// One rate per queue, or a single rate shared by all queues. Unequal rates
/// use the largest one in C (the binding queue for a common rate).
inline NetworkLimits network_capacities(std::span<const QueueSpec> queues,
                                        std::span<const double> lambdas) {
  detail::require(!queues.empty(), "network_capacities: no queues");
  detail::require(lambdas.size() == 1 || lambdas.size() == queues.size(),
                  "network_capacities: need one rate or one per queue");
  auto rate = [&](std::size_t i) { return lambdas.size() == 1 ? lambdas[0] : lambdas[i]; };

  NetworkLimits out;
  double min_mu_eff = std::numeric_limits<double>::infinity();
  double min_mu = std::numeric_limits<double>::infinity();
  double min_log = std::numeric_limits<double>::infinity();
  double lambda_min = std::numeric_limits<double>::infinity();
  double lambda_max = 0.0;
  for (std::size_t i = 0; i < queues.size(); ++i) {
    const double li = rate(i);
    detail::require(li > 0.0, "network_capacities: rates must be positive");
    queues[i].check_stable(li, i);
    out.effective_mu.push_back(queues[i].effective_mu());
    min_mu_eff = std::min(min_mu_eff, queues[i].effective_mu());
    min_mu = std::min(min_mu, queues[i].mu());
    min_log = std::min(min_log, std::log(queues[i].effective_mu() / li));
    lambda_min = std::min(lambda_min, li);
    lambda_max = std::max(lambda_max, li);
  }
  out.C = lambda_max * std::log(min_mu_eff / lambda_max);
  out.C_prime = lambda_min * min_log;
  out.C_dblprime = lambda_max * std::log(min_mu / lambda_max);
  return out;
}

/// (1 + m alpha) ln m < T C.
inline bool scenario1_feasible(std::int64_t m, double T, double C, double alpha) {
  const auto md = static_cast<double>(m);
  return (1.0 + md * alpha) * std::log(md) < T * C;
}

struct Scenario1Flows {
  double formula = 0.0;      // 1/2 min{(TC/W(TC) - 1)/alpha, TC/W(TC)}
  std::int64_t formula_m = 0;
  std::int64_t scan_m = 0;   // largest m meeting the feasibility inequality
  std::int64_t m = 0;        // returned value
  std::string warning;
};

/// Closed form floored and clamped to >= 1, cross-checked against the
/// feasibility inequality. If the closed form breaks the inequality the
/// largest feasible m is returned instead, with a warning.
inline Scenario1Flows scenario1_flow_count(double T, double C, double alpha) {
  detail::require(T > 0.0 && C > 0.0 && alpha > 0.0,
                  "max_flows_scenario1: T, C and alpha must be positive");
  Scenario1Flows r;
  const double tc = T * C;
  if (tc <= std::numbers::e) {
    r.warning = "TC <= e: no feasible flows";
    return r;
  }
  const double x = tc / lambert_w(tc);
  r.formula = 0.5 * std::min((x - 1.0) / alpha, x);
  r.formula_m = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(r.formula)));

  // The left side is increasing for m >= 1 and m = 1 always holds.
  std::int64_t lo = 1;
  std::int64_t hi = 2;
  while (scenario1_feasible(hi, T, C, alpha)) {
    lo = hi;
    hi *= 2;
  }
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    (scenario1_feasible(mid, T, C, alpha) ? lo : hi) = mid;
  }
  r.scan_m = lo;

  if (scenario1_feasible(r.formula_m, T, C, alpha)) {
    r.m = r.formula_m;
  } else {
    r.m = r.scan_m;
    r.warning = "closed form violates (1 + m alpha) ln m < TC; using feasibility scan";
  }
  return r;
}

inline std::int64_t max_flows_scenario1(double T, double C, double alpha) {
  return scenario1_flow_count(T, C, alpha).m;
}

/// m <= exp(TC / (1 + alpha' / ln(1 + eps^2 M / (2 m^2)))).
inline bool scenario2_feasible(std::int64_t m, double T, double C, std::int64_t M,
                               double alpha_prime, double epsilon) {
  const double md = static_cast<double>(m);
  const double L = std::log1p(epsilon * epsilon * static_cast<double>(M) / (2.0 * md * md));
  return std::log(md) <= T * C / (1.0 + alpha_prime / L);
}

struct Scenario2Flows {
  std::int64_t m = 0;
  std::string regime;
};

/// Largest m <= M satisfying the feasibility inequality (bisection; the
/// right side shrinks as m grows), labelled with its asymptotic regime.
inline Scenario2Flows max_flows_scenario2(double T, double C, std::int64_t M, double epsilon,
                                          double zeta) {
  detail::require(T > 0.0 && C > 0.0 && M >= 1, "max_flows_scenario2: bad arguments");
  const double ap = alpha_for(epsilon, zeta) * epsilon * epsilon;
  Scenario2Flows r;
  if (!scenario2_feasible(1, T, C, M, ap, epsilon)) {
    r.regime = "none";
    return r;
  }
  std::int64_t lo = 1;
  std::int64_t hi = M + 1;
  if (scenario2_feasible(M, T, C, M, ap, epsilon)) {
    lo = M;
  } else {
    hi = M;
    while (hi - lo > 1) {
      const std::int64_t mid = lo + (hi - lo) / 2;
      (scenario2_feasible(mid, T, C, M, ap, epsilon) ? lo : hi) = mid;
    }
  }
  r.m = lo;
  if (r.m == M) {
    r.regime = "M";
  } else if (std::log(static_cast<double>(M)) <= 2.0 * T * C) {
    r.regime = "o(min{sqrt(M), e^{TC1}})";
  } else {
    r.regime = "Theta(e^{TC2})";
  }
  return r;
}

/// floor(min{M q, exp(TC'' / (1 + alpha' / ln(1 + eps^2 / (2 M q^2))))}).
inline std::int64_t max_flows_bernoulli(double T, double C_dblprime, std::int64_t M, double q,
                                        double epsilon, double zeta) {
  detail::require(T > 0.0 && C_dblprime > 0.0 && M >= 1, "max_flows_bernoulli: bad arguments");
  detail::require(q >= 0.0 && q <= 1.0, "max_flows_bernoulli: q must lie in [0, 1]");
  if (q == 0.0) return 0;
  const double ap = alpha_for(epsilon, zeta) * epsilon * epsilon;
  const double Md = static_cast<double>(M);
  const double L = std::log1p(epsilon * epsilon / (2.0 * Md * q * q));
  const double m = std::exp(T * C_dblprime / (1.0 + ap / L));
  return static_cast<std::int64_t>(std::floor(std::min(Md * q, m)));
}

/// 1 - erf(eps sqrt(alpha / 8)).
inline double pf1_bound(double epsilon, double alpha) {
  detail::require(epsilon > 0.0 && alpha > 0.0, "pf1_bound: arguments must be positive");
  return std::clamp(1.0 - erf(epsilon * std::sqrt(alpha / 8.0)), 0.0, 1.0);
}

/// Same bound written with the phase lengths of an all-flows plan:
/// 1 - erf((eps / 2) sqrt(T1 / (2 m T2))).
inline double pf1_bound_phases(double epsilon, std::size_t m, double t1, double t2) {
  detail::require(epsilon > 0.0 && m >= 1 && t1 > 0.0 && t2 > 0.0,
                  "pf1_bound_phases: arguments must be positive");
  return 1.0 - erf(0.5 * epsilon * std::sqrt(t1 / (2.0 * static_cast<double>(m) * t2)));
}

/// Subset-plan underflow bound in its phase form,
/// 1 - erf(sqrt(T1 ln(1 + eps^2 M / (2 m^2)) / (8 T2))).
inline double pf1_bound_subset_phases(double epsilon, std::size_t M, std::size_t m, double t1,
                                      double t2) {
  detail::require(epsilon > 0.0 && m >= 1 && m <= M && t1 > 0.0 && t2 > 0.0,
                  "pf1_bound_subset_phases: bad arguments");
  const double L = detail::subset_log_term(epsilon, M, m);
  return 1.0 - erf(std::sqrt(t1 * L / (8.0 * t2)));
}

/// Subset-plan underflow bound in its alpha' form, 1 - erf(sqrt(alpha' / 8)).
inline double pf1_bound_subset(double alpha_prime) {
  detail::require(alpha_prime > 0.0, "pf1_bound_subset: alpha' must be positive");
  return 1.0 - erf(std::sqrt(alpha_prime / 8.0));
}

/// max(0, 1/2 - sqrt(kl / 8)).
inline double pe_lower_bound(double kl) {
  detail::require(std::isfinite(kl) && kl >= 0.0, "pe_lower_bound: kl must be >= 0");
  return std::max(0.0, 0.5 - std::sqrt(kl / 8.0));
}

/// M p^2 (exp(delta^2 T1 / lambda) - 1), p = m / M.
inline double kl_bound_scenario2(std::int64_t M, std::int64_t m, double lambda, double t1,
                                 double delta) {
  detail::require(M >= 1 && m >= 0 && m <= M && lambda > 0.0 && t1 > 0.0 && delta >= 0.0,
                  "kl_bound_scenario2: bad arguments");
  const double p = static_cast<double>(m) / static_cast<double>(M);
  return static_cast<double>(M) * p * p * std::expm1(delta * delta * t1 / lambda);
}

/// 2 min(P(H1), 1 - P(H1)) * P_e.
inline double pe_prior_adjusted(double pe_equal_priors, double p_h1) {
  detail::require(pe_equal_priors >= 0.0 && pe_equal_priors <= 1.0 && p_h1 >= 0.0 &&
                      p_h1 <= 1.0,
                  "pe_prior_adjusted: probabilities must lie in [0, 1]");
  return 2.0 * std::min(p_h1, 1.0 - p_h1) * pe_equal_priors;
}

}  // namespace flowprint
