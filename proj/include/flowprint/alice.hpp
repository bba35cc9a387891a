#pragma once

// The fingerprinter. Phase 1 dilates each flow's timeline so its rate drops
// from lambda to lambda - delta and the surplus accumulates in a buffer;
// phase 2 releases buffered packets at t1 + codeword offsets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowprint/codebook.hpp"
#include "flowprint/error.hpp"
#include "flowprint/specfun.hpp"
#include "flowprint/stochastic.hpp"

namespace flowprint {

enum class Scenario : int { k1 = 1, k2, k3, k4, k5, k6 };

inline Scenario scenario_from_int(int s) {
  if (s < 1 || s > 6) throw ConfigError("scenario must be in 1..6, got " + std::to_string(s));
  return static_cast<Scenario>(s);
}

inline int to_int(Scenario s) noexcept { return static_cast<int>(s); }

/// Scenarios 2, 4 and 6 fingerprint a subset of the observed flows and use
/// the logarithmic phase split.
inline bool is_subset_scenario(Scenario s) noexcept { return to_int(s) % 2 == 0; }

/// 1 = queues shared with interfering traffic, 2 = main flow only.
inline int setting_of(Scenario s) noexcept { return to_int(s) >= 5 ? 2 : 1; }

/// Scenarios 5 and 6 are decoded by the likelihood-ratio threshold rule.
inline bool uses_threshold_decoder(Scenario s) noexcept { return setting_of(s) == 2; }

struct PhasePlan {
  double T = 0.0;
  double t1 = 0.0;
  double t2 = 0.0;
  double delta = 0.0;      // rate reduction at lambda_ref
  double alpha = 0.0;
  double alpha_prime = 0.0;
  Scenario scenario = Scenario::k1;
  double lambda_ref = 0.0;  // rate the plan (and delta) was computed for

  void validate() const {
    if (!(t1 > 0.0) || !(t2 > 0.0) || !std::isfinite(t1) || !std::isfinite(t2)) {
      throw InfeasiblePlanError("phase plan: T1 and T2 must be positive");
    }
    if (!(delta >= 0.0) || !(delta < lambda_ref)) {
      throw InfeasiblePlanError("phase plan: need 0 <= delta < lambda");
    }
  }
};

/// alpha = (8 / eps^2) * erfinv(1 - zeta)^2; the underflow bound at this
/// alpha is exactly zeta.
inline double alpha_for(double epsilon, double zeta) {
  detail::require(epsilon > 0.0 && epsilon < 0.5, "alpha_for: epsilon must lie in (0, 1/2)");
  detail::require(zeta > 0.0 && zeta < 1.0, "alpha_for: zeta must lie in (0, 1)");
  const double e = erf_inv(1.0 - zeta);
  return 8.0 / (epsilon * epsilon) * e * e;
}

namespace detail {

inline double subset_log_term(double epsilon, std::size_t M, std::size_t m) {
  const double md = static_cast<double>(m);
  return std::log1p(epsilon * epsilon * static_cast<double>(M) / (2.0 * md * md));
}

}  // namespace detail

inline PhasePlan plan_phases(Scenario scenario, double T, std::size_t m, std::size_t M,
                             double lambda, double epsilon, double zeta) {
  detail::require(std::isfinite(T) && T > 0.0, "plan_phases: T must be positive");
  detail::require(m >= 1 && m <= M, "plan_phases: need 1 <= m <= M");
  detail::require(std::isfinite(lambda) && lambda > 0.0, "plan_phases: lambda must be positive");

  PhasePlan p;
  p.T = T;
  p.scenario = scenario;
  p.lambda_ref = lambda;
  p.alpha = alpha_for(epsilon, zeta);
  p.alpha_prime = p.alpha * epsilon * epsilon;
  const double md = static_cast<double>(m);

  if (!is_subset_scenario(scenario)) {
    const double ma = md * p.alpha;
    p.t1 = T * ma / (1.0 + ma);
    p.t2 = T / (1.0 + ma);
    p.delta = epsilon * std::sqrt(2.0 * lambda / (md * p.t1));
  } else {
    const double L = detail::subset_log_term(epsilon, M, m);
    p.t1 = T * p.alpha_prime / (L + p.alpha_prime);
    p.t2 = T - p.t1;
    p.delta = std::sqrt(lambda / p.t1 * L);
  }
  if (!(p.t2 > 0.0)) throw InfeasiblePlanError("phase plan: T2 is not positive");
  if (!(p.delta < lambda)) {
    throw InfeasiblePlanError("phase plan: slowdown delta >= lambda (T too short)");
  }
  return p;
}

/// A plan with hand-picked phase lengths; delta follows the scenario's rule
/// evaluated at the given T1.
inline PhasePlan plan_phases_explicit(Scenario scenario, double t1, double t2, std::size_t m,
                                      std::size_t M, double lambda, double epsilon,
                                      double zeta) {
  detail::require(t1 > 0.0 && t2 > 0.0, "plan_phases_explicit: phases must be positive");
  detail::require(m >= 1 && m <= M, "plan_phases_explicit: need 1 <= m <= M");
  detail::require(lambda > 0.0, "plan_phases_explicit: lambda must be positive");
  PhasePlan p;
  p.T = t1 + t2;
  p.t1 = t1;
  p.t2 = t2;
  p.scenario = scenario;
  p.lambda_ref = lambda;
  p.alpha = alpha_for(epsilon, zeta);
  p.alpha_prime = p.alpha * epsilon * epsilon;
  if (!is_subset_scenario(scenario)) {
    p.delta = epsilon * std::sqrt(2.0 * lambda / (static_cast<double>(m) * t1));
  } else {
    p.delta = std::sqrt(lambda / t1 * detail::subset_log_term(epsilon, M, m));
  }
  p.validate();
  return p;
}

/// Rate reduction for a flow of rate lambda_i: delta scales with the square
/// root of the rate, so every flow sees the same KL budget.
inline double slowdown_for(const PhasePlan& plan, double lambda_i) {
  detail::require(lambda_i > 0.0 && plan.lambda_ref > 0.0, "slowdown_for: rates must be positive");
  const double d = plan.delta * std::sqrt(lambda_i / plan.lambda_ref);
  if (!(d < lambda_i)) {
    throw InfeasiblePlanError("slowdown for flow rate " + std::to_string(lambda_i) +
                              " is not below the rate");
  }
  return d;
}

struct SlowResult {
  PacketTrain released;
  std::vector<double> backlog;  // arrival times still buffered at t1, FIFO order
};

/// Phase 1. A packet arriving at tau is sent at tau * lambda / (lambda - delta)
/// if that instant is within [0, t1]; later arrivals stay buffered.
inline SlowResult slow_flow(const PacketTrain& train, double lambda, double delta, double t1) {
  detail::require(lambda > 0.0 && delta >= 0.0 && delta < lambda,
                  "slow_flow: need 0 <= delta < lambda");
  detail::require(t1 > 0.0, "slow_flow: t1 must be positive");
  const double stretch = lambda / (lambda - delta);
  const double cutoff = t1 * (lambda - delta) / lambda;
  SlowResult r;
  r.released.flow_id = train.flow_id;
  for (double tau : train.timestamps) {
    detail::require(tau <= t1, "slow_flow: arrival after t1 given to phase 1");
    if (tau <= cutoff) {
      r.released.timestamps.push_back(std::min(tau * stretch, t1));
    } else {
      r.backlog.push_back(tau);
    }
  }
  return r;
}

struct EmbedResult {
  PacketTrain output;                  // phase-2 departures from Alice
  bool underflow = false;
  std::size_t fingerprint_packets = 0; // packets released on codeword instants
  std::vector<double> remaining;       // arrivals still buffered at the end
};

inline double release_instant(double t1, double offset) noexcept { return t1 + offset; }

/// Phase 2. Packet k leaves at t1 + offset_k, taken from the FIFO of
/// buffered and newly arrived packets. If the FIFO is empty at a release
/// instant the codeword is abandoned and later arrivals pass through.
inline EmbedResult embed_fingerprint(std::span<const double> backlog,
                                     const PacketTrain& phase2_arrivals, const Fingerprint& fp,
                                     double t1) {
  EmbedResult r;
  r.output.flow_id = phase2_arrivals.flow_id;
  const auto& arr = phase2_arrivals.timestamps;
  std::size_t next_arrival = 0;
  std::size_t queued = backlog.size();  // packets present but not yet sent
  std::size_t backlog_sent = 0;

  for (double off : fp.offsets) {
    const double at = release_instant(t1, off);
    while (next_arrival < arr.size() && arr[next_arrival] <= at) {
      ++next_arrival;
      ++queued;
    }
    if (queued == 0) {
      r.underflow = true;
      break;
    }
    --queued;
    if (backlog_sent < backlog.size()) ++backlog_sent;
    r.output.timestamps.push_back(at);
    ++r.fingerprint_packets;
  }

  if (r.underflow) {
    // Buffer was empty, so every unsent packet is still to arrive.
    for (std::size_t i = next_arrival; i < arr.size(); ++i) r.output.timestamps.push_back(arr[i]);
    return r;
  }
  // Unsent packets: leftover backlog, then phase-2 arrivals in order.
  for (std::size_t i = backlog_sent; i < backlog.size(); ++i) r.remaining.push_back(backlog[i]);
  const std::size_t arrivals_sent = r.fingerprint_packets - backlog_sent;
  for (std::size_t i = arrivals_sent; i < arr.size(); ++i) r.remaining.push_back(arr[i]);
  return r;
}

enum class SelectionMode { kAll, kSubset, kBernoulli };

struct FlowAssignment {
  std::int64_t flow_id = 0;  // 1-based
  std::optional<std::uint64_t> fingerprint;
  double lambda = 0.0;
};

/// Which flows carry a fingerprint, and which codeword each gets.
///   kAll:       every one of the M flows (requires M <= codebook size)
///   kSubset:    flows 1..m
///   kBernoulli: each flow independently with probability q; flows past
///               codebook exhaustion stay unmarked
/// Codewords are drawn uniformly without replacement from the codebook.
inline std::vector<FlowAssignment> select_flows(SelectionMode mode, std::span<const double> lambdas,
                                                std::size_t m, double q,
                                                std::size_t codebook_size, RngState rng) {
  const std::size_t M = lambdas.size();
  detail::require(M >= 1, "select_flows: need at least one flow");
  Rng gen(rng);
  std::vector<std::uint64_t> pool(codebook_size);
  for (std::size_t i = 0; i < codebook_size; ++i) pool[i] = i + 1;
  std::size_t drawn = 0;
  auto draw_index = [&]() -> std::optional<std::uint64_t> {
    if (drawn == pool.size()) return std::nullopt;
    std::uniform_int_distribution<std::size_t> pick(drawn, pool.size() - 1);
    std::swap(pool[drawn], pool[pick(gen)]);
    return pool[drawn++];
  };

  std::vector<FlowAssignment> out(M);
  for (std::size_t i = 0; i < M; ++i) {
    out[i].flow_id = static_cast<std::int64_t>(i + 1);
    out[i].lambda = lambdas[i];
  }
  switch (mode) {
    case SelectionMode::kAll:
      if (M > codebook_size) throw DomainError("select_flows: more flows than codewords");
      for (auto& a : out) a.fingerprint = draw_index();
      break;
    case SelectionMode::kSubset:
      if (m > M) throw DomainError("select_flows: m exceeds the number of flows");
      if (m > codebook_size) throw DomainError("select_flows: m exceeds codebook size");
      for (std::size_t i = 0; i < m; ++i) out[i].fingerprint = draw_index();
      break;
    case SelectionMode::kBernoulli:
      detail::require(q >= 0.0 && q <= 1.0, "select_flows: q must lie in [0, 1]");
      for (auto& a : out) {
        if (gen.uniform() < q) a.fingerprint = draw_index();
      }
      break;
  }
  return out;
}

/// After T, drain the buffer at rate delta: insertion times are a
/// Poisson(delta) process starting at `start`, truncated at `backlog` packets.
inline PacketTrain unwind(std::size_t backlog, double delta, RngState rng, double start = 0.0) {
  detail::require(delta > 0.0, "unwind: delta must be positive");
  PacketTrain out;
  out.timestamps.reserve(backlog);
  Rng gen(rng);
  double t = start;
  for (std::size_t i = 0; i < backlog; ++i) {
    double next = t + gen.exponential(delta);
    if (!(next > t)) next = std::nextafter(t, INFINITY);
    t = next;
    out.timestamps.push_back(t);
  }
  return out;
}

}  // namespace flowprint
