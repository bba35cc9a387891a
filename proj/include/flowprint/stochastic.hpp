#pragma once

// Seeded sampling: a counter-derived random stream per (seed, stream_id),
// Poisson counts and processes, and service-time laws with a fixed mean.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "flowprint/error.hpp"

namespace flowprint {

/// Timestamps (seconds from the flow origin) of one packet flow.
struct PacketTrain {
  std::int64_t flow_id = 0;
  std::vector<double> timestamps;

  std::size_t size() const noexcept { return timestamps.size(); }
  bool empty() const noexcept { return timestamps.empty(); }

  /// Strictly increasing, finite, nonnegative.
  bool valid() const noexcept {
    for (std::size_t i = 0; i < timestamps.size(); ++i) {
      const double t = timestamps[i];
      if (!std::isfinite(t) || t < 0.0) return false;
      if (i > 0 && !(timestamps[i - 1] < t)) return false;
    }
    return true;
  }

  bool operator==(const PacketTrain&) const = default;
};

/// Identifies one independent random stream.
struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;

  bool operator==(const RngState&) const = default;
};

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b) noexcept {
  std::uint64_t s = a ^ (b * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL);
  return splitmix64(s);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
  return (x << k) | (x >> (64 - k));
}

}  // namespace detail

/// Derive a child stream id from a parent id and a path of counters, e.g.
/// derive_stream(base, trial, flow, purpose). Pure function of its inputs,
/// so trials can be evaluated in any order.
template <class... Ids>
constexpr std::uint64_t derive_stream(std::uint64_t parent, Ids... ids) noexcept {
  std::uint64_t h = detail::mix64(parent, 0x243F6A8885A308D3ULL);
  ((h = detail::mix64(h, static_cast<std::uint64_t>(ids))), ...);
  return h;
}

/// xoshiro256** seeded from (seed, stream_id) through splitmix64. Models
/// UniformRandomBitGenerator so it also drives <random> distributions.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(RngState state) noexcept {
    std::uint64_t sm = detail::mix64(state.seed, state.stream_id);
    for (auto& word : s_) word = detail::splitmix64(sm);
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    const std::uint64_t result = detail::rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = detail::rotl(s_[3], 45);
    return result;
  }

  /// Uniform on [0, 1).
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  /// Uniform on the open interval (0, 1).
  double uniform_open() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  double exponential(double rate) noexcept {
    return -std::log(uniform_open()) / rate;
  }

 private:
  std::array<std::uint64_t, 4> s_{};
};

inline std::int64_t sample_poisson_count(double rate, double horizon, Rng& rng) {
  detail::require(std::isfinite(rate) && std::isfinite(horizon) && rate > 0.0 &&
                      horizon > 0.0,
                  "sample_poisson_count: rate and horizon must be positive");
  std::poisson_distribution<std::int64_t> dist(rate * horizon);
  return dist(rng);
}

inline std::int64_t sample_poisson_count(double rate, double horizon, RngState state) {
  Rng rng(state);
  return sample_poisson_count(rate, horizon, rng);
}

/// Poisson process on (0, horizon): draw N ~ Poisson(rate * horizon), place
/// N points uniformly, sort. Exact duplicates are re-drawn so the train is
/// strictly increasing.
inline PacketTrain sample_poisson_process(double rate, double horizon, Rng& rng) {
  const auto n = sample_poisson_count(rate, horizon, rng);
  PacketTrain train;
  auto& ts = train.timestamps;
  ts.resize(static_cast<std::size_t>(n));
  for (auto& t : ts) t = rng.uniform_open() * horizon;
  std::sort(ts.begin(), ts.end());
  for (;;) {
    auto dup = std::adjacent_find(ts.begin(), ts.end());
    if (dup == ts.end()) break;
    *dup = rng.uniform_open() * horizon;
    std::sort(ts.begin(), ts.end());
  }
  return train;
}

inline PacketTrain sample_poisson_process(double rate, double horizon, RngState state) {
  Rng rng(state);
  return sample_poisson_process(rate, horizon, rng);
}

enum class ServiceFamily { kExponential, kWeibull };

/// Service-time law with mean exactly 1/mu. A Weibull law of shape k uses
/// scale 1 / (mu * Gamma(1 + 1/k)).
struct ServiceSpec {
  double mu = 1.0;
  ServiceFamily family = ServiceFamily::kExponential;
  double shape = 1.0;  // Weibull only

  static ServiceSpec exponential(double mu) { return {mu, ServiceFamily::kExponential, 1.0}; }
  static ServiceSpec weibull(double mu, double shape) {
    return {mu, ServiceFamily::kWeibull, shape};
  }

  void validate() const {
    detail::require(std::isfinite(mu) && mu > 0.0, "ServiceSpec: mu must be positive");
    if (family == ServiceFamily::kWeibull) {
      detail::require(std::isfinite(shape) && shape > 0.0,
                      "ServiceSpec: Weibull shape must be positive");
    }
  }

  double weibull_scale() const { return 1.0 / (mu * std::tgamma(1.0 + 1.0 / shape)); }

  std::string name() const {
    if (family == ServiceFamily::kExponential) return "exponential";
    char buf[48];
    std::snprintf(buf, sizeof buf, "weibull:%g", shape);
    return buf;
  }

  bool operator==(const ServiceSpec&) const = default;
};

inline double sample_service(const ServiceSpec& spec, Rng& rng) {
  spec.validate();
  if (spec.family == ServiceFamily::kExponential) return rng.exponential(spec.mu);
  return spec.weibull_scale() * std::pow(-std::log(rng.uniform_open()), 1.0 / spec.shape);
}

/// Draws service times from a ServiceSpec with the scale precomputed.
class ServiceSampler {
 public:
  explicit ServiceSampler(const ServiceSpec& spec) : spec_(spec) {
    spec_.validate();
    if (spec_.family == ServiceFamily::kWeibull) {
      scale_ = spec_.weibull_scale();
      inv_shape_ = 1.0 / spec_.shape;
    }
  }

  double operator()(Rng& rng) const {
    if (spec_.family == ServiceFamily::kExponential) return rng.exponential(spec_.mu);
    return scale_ * std::pow(-std::log(rng.uniform_open()), inv_shape_);
  }

  const ServiceSpec& spec() const noexcept { return spec_; }

 private:
  ServiceSpec spec_;
  double scale_ = 0.0;
  double inv_shape_ = 1.0;
};

/// Number of timestamps <= t in a sorted train.
inline std::size_t count_until(std::span<const double> sorted, double t) {
  return static_cast<std::size_t>(std::upper_bound(sorted.begin(), sorted.end(), t) -
                                  sorted.begin());
}

}  // namespace flowprint
