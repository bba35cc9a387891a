#pragma once

// The warden: counts phase-1 packets over the watched links and flags a
// slowdown when the total falls short of its mean by more than U.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "flowprint/error.hpp"
#include "flowprint/stochastic.hpp"

namespace flowprint {

enum class Hypothesis { kH0, kH1 };

struct DetectorConfig {
  double U = 0.0;            // packets
  double lambda = 0.0;
  double t1 = 0.0;           // watched window is [0, t1]
  std::size_t flows_watched = 1;

  double expected_count() const noexcept {
    return lambda * t1 * static_cast<double>(flows_watched);
  }
};

/// S = packets observed in [0, t1] across all watched flows.
inline std::int64_t count_statistic(std::span<const PacketTrain> flows, double t1) {
  std::int64_t s = 0;
  for (const auto& f : flows) s += static_cast<std::int64_t>(count_until(f.timestamps, t1));
  return s;
}

inline Hypothesis decide(std::int64_t S, const DetectorConfig& cfg) {
  detail::require(cfg.U >= 0.0, "count_detect: U must be >= 0");
  return static_cast<double>(S) < cfg.expected_count() - cfg.U ? Hypothesis::kH1
                                                               : Hypothesis::kH0;
}

inline Hypothesis count_detect(std::span<const PacketTrain> flows, const DetectorConfig& cfg) {
  return decide(count_statistic(flows, cfg.t1), cfg);
}

struct RocPoint {
  double U = 0.0;
  double p_fa = 0.0;
  double p_md = 0.0;
  double p_e = 0.0;
};

/// Empirical error rates of the count detector per threshold, from the
/// per-trial statistics under each hypothesis.
inline std::vector<RocPoint> roc_sweep(std::span<const std::int64_t> h0_counts,
                                       std::span<const std::int64_t> h1_counts,
                                       double expected_count, std::span<const double> u_grid) {
  if (h0_counts.empty() || h1_counts.empty()) throw DomainError("roc_sweep: no trials");
  std::vector<std::int64_t> h0(h0_counts.begin(), h0_counts.end());
  std::vector<std::int64_t> h1(h1_counts.begin(), h1_counts.end());
  std::sort(h0.begin(), h0.end());
  std::sort(h1.begin(), h1.end());
  const auto n0 = static_cast<double>(h0.size());
  const auto n1 = static_cast<double>(h1.size());

  std::vector<RocPoint> out;
  out.reserve(u_grid.size());
  for (double U : u_grid) {
    detail::require(U >= 0.0, "roc_sweep: U must be >= 0");
    const double cut = expected_count - U;
    // Trials with S < cut decide H1.
    auto below = [cut](const std::vector<std::int64_t>& v) {
      return static_cast<double>(
          std::partition_point(v.begin(), v.end(),
                               [cut](std::int64_t s) { return static_cast<double>(s) < cut; }) -
          v.begin());
    };
    RocPoint p;
    p.U = U;
    p.p_fa = below(h0) / n0;
    p.p_md = 1.0 - below(h1) / n1;
    p.p_e = 0.5 * (p.p_fa + p.p_md);
    out.push_back(p);
  }
  return out;
}

/// Thresholds in units of sigma = sqrt(expected count): 0..4 in steps of
/// 0.02, then geometrically out to 100.
inline std::vector<double> default_u_grid_sigma() {
  std::vector<double> g;
  for (int i = 0; i <= 200; ++i) g.push_back(0.02 * i);
  for (double u = 4.5; u < 100.0; u *= 1.25) g.push_back(u);
  g.push_back(100.0);
  return g;
}

}  // namespace flowprint
