#pragma once

// Scalar special functions used across the library: erf and its inverse,
// the principal branch of Lambert-W, the Poisson pmf, and the KL divergence
// between two Poisson packet counts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

#include "flowprint/error.hpp"

namespace flowprint {

inline constexpr double kInvE = 0.36787944117144232159552377016146;

inline double erf(double x) {
  detail::require(std::isfinite(x), "erf: argument must be finite");
  return std::erf(x);
}

/// Inverse of erf on (-1, 1). Bisection to a narrow bracket, then Newton
/// polish; above 0.5 the residual is taken against erfc so that arguments
/// close to 1 keep full relative precision.
inline double erf_inv(double p) {
  detail::require(std::isfinite(p) && std::abs(p) < 1.0,
                  "erf_inv: argument must lie in (-1, 1)");
  if (p == 0.0) return 0.0;
  const double q = std::abs(p);
  const bool upper = q > 0.5;
  const double tail = 1.0 - q;  // exact for q >= 0.5
  auto residual = [&](double x) {
    return upper ? tail - std::erfc(x) : std::erf(x) - q;
  };

  double lo = 0.0;
  double hi = 6.0;  // erfc(6) < 2.2e-17, below the smallest representable tail
  while (hi - lo > 1e-6) {
    const double mid = 0.5 * (lo + hi);
    if (residual(mid) < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 8; ++it) {
    const double slope = std::numbers::inv_sqrtpi * 2.0 * std::exp(-x * x);
    const double step = residual(x) / slope;
    double next = x - step;
    if (next < lo || next > hi) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-16 * std::max(1.0, x)) {
      x = next;
      break;
    }
    x = next;
  }
  return p < 0.0 ? -x : x;
}

/// Principal branch W0 of the Lambert-W function, x >= -1/e.
inline double lambert_w(double x) {
  detail::require(std::isfinite(x), "lambert_w: argument must be finite");
  // Allow arguments that are -1/e up to rounding.
  if (x < -kInvE) {
    if (x < -kInvE * (1.0 + 4.0 * std::numeric_limits<double>::epsilon())) {
      throw DomainError("lambert_w: argument below -1/e");
    }
    return -1.0;
  }
  if (x == 0.0) return 0.0;
  if (x == -kInvE) return -1.0;

  constexpr int kMaxIter = 50;
  constexpr double kTol = 4.0 * std::numeric_limits<double>::epsilon();

  if (x > std::numbers::e) {
    // Halley on g(w) = w + ln w - ln x; avoids exp overflow for large x.
    const double lx = std::log(x);
    const double llx = std::log(lx);
    double w = lx - llx + llx / lx;
    for (int it = 0; it < kMaxIter; ++it) {
      const double g = w + std::log(w) - lx;
      const double g1 = 1.0 + 1.0 / w;
      const double g2 = -1.0 / (w * w);
      const double next = w - g * g1 / (g1 * g1 - 0.5 * g * g2);
      if (std::abs(next - w) <= kTol * std::abs(next)) return next;
      w = next;
    }
    throw DomainError("lambert_w: Halley iteration did not converge");
  }

  double w;
  if (x < -0.32) {
    // Branch-point series in p = sqrt(2(ex + 1)).
    const double p = std::sqrt(std::max(0.0, 2.0 * (std::numbers::e * x + 1.0)));
    w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p;
  } else if (std::abs(x) < 0.05) {
    w = x * (1.0 - x * (1.0 - 1.5 * x));
  } else {
    w = std::log1p(x);
  }
  for (int it = 0; it < kMaxIter; ++it) {
    const double ew = std::exp(w);
    const double f = w * ew - x;
    const double wp1 = w + 1.0;
    if (wp1 == 0.0) return w;
    const double denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
    const double next = w - f / denom;
    if (std::abs(next - w) <= kTol * std::max(1.0, std::abs(next))) return next;
    w = next;
  }
  throw DomainError("lambert_w: Halley iteration did not converge");
}

/// ln P(N = k) for N ~ Poisson(mean).
inline double poisson_log_pmf(std::int64_t k, double mean) {
  detail::require(k >= 0 && std::isfinite(mean) && mean >= 0.0,
                  "poisson_log_pmf: need k >= 0 and finite mean >= 0");
  if (mean == 0.0) {
    return k == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  }
  const auto kd = static_cast<double>(k);
  return kd * std::log(mean) - mean - std::lgamma(kd + 1.0);
}

/// D(Poisson(lambda1 t) || Poisson(lambda0 t)) in nats:
///   (lambda0 - lambda1) t - lambda1 t ln(lambda0 / lambda1).
/// Evaluated as lambda1 t (r - log1p(r)), r = (lambda0 - lambda1) / lambda1,
/// which stays accurate when the rates nearly coincide.
inline double kl_poisson_counts(double lambda1, double lambda0, double t) {
  detail::require(std::isfinite(lambda1) && std::isfinite(lambda0) &&
                      std::isfinite(t) && lambda1 > 0.0 && lambda0 > 0.0 &&
                      t > 0.0,
                  "kl_poisson_counts: rates and time must be positive");
  const double r = (lambda0 - lambda1) / lambda1;
  return std::max(0.0, lambda1 * t * (r - std::log1p(r)));
}

}  // namespace flowprint
