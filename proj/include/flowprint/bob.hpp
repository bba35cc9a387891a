#pragma once

// Fingerprint extraction. Two decoders: minimum total implied service over
// the surviving codewords, and a likelihood-ratio test against the
// Poisson departure law of an unmarked flow.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "flowprint/alice.hpp"
#include "flowprint/codebook.hpp"
#include "flowprint/error.hpp"
#include "flowprint/queuesim.hpp"

namespace flowprint {

enum class Verdict { kDecoded, kNotFingerprinted, kAmbiguous };

struct DecodeResult {
  Verdict verdict = Verdict::kNotFingerprinted;
  std::uint64_t index = 0;  // meaningful only when decoded
  double score = 0.0;

  bool decoded() const noexcept { return verdict == Verdict::kDecoded; }
};

namespace detail {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Release instants of codeword fp for a flow of rate lambda_i.
inline std::vector<double> candidate_arrivals(const Codebook& cb, const Fingerprint& fp,
                                              double t1, double lambda_i) {
  const auto scaled = scale_fingerprint(fp, cb.rate, lambda_i);
  std::vector<double> a(scaled.offsets.size());
  for (std::size_t k = 0; k < a.size(); ++k) a[k] = release_instant(t1, scaled.offsets[k]);
  return a;
}

}  // namespace detail

/// Sum of implied services s_k = d_k - max(a_k, d_{k-1}); NaN when the
/// counts differ or any s_k < 0.
inline double implied_service_sum(std::span<const double> departures,
                                  std::span<const double> arrivals) {
  if (departures.size() != arrivals.size()) return std::numeric_limits<double>::quiet_NaN();
  double prev = detail::kNegInf;
  double sum = 0.0;
  for (std::size_t k = 0; k < departures.size(); ++k) {
    const double s = departures[k] - std::max(arrivals[k], prev);
    if (s < 0.0) return std::numeric_limits<double>::quiet_NaN();
    sum += s;
    prev = departures[k];
  }
  return sum;
}

/// Eliminate codewords with the wrong packet count or a negative implied
/// service; the survivor with the smallest total service wins. Exact ties
/// are ambiguous. `observed` holds the departures of the phase-2 packets.
inline DecodeResult ml_decode(const PacketTrain& observed, const Codebook& cb,
                              const PhasePlan& plan, double lambda_i) {
  if (cb.fingerprints.empty()) throw DomainError("ml_decode: empty codebook");
  DecodeResult best;
  best.score = std::numeric_limits<double>::infinity();
  bool any = false;
  for (const auto& fp : cb.fingerprints) {
    if (fp.size() != observed.size()) continue;
    const auto a = detail::candidate_arrivals(cb, fp, plan.t1, lambda_i);
    const double s = implied_service_sum(observed.timestamps, a);
    if (std::isnan(s)) continue;
    if (!any || s < best.score) {
      best = {Verdict::kDecoded, fp.index, s};
      any = true;
    } else if (s == best.score) {
      best.verdict = Verdict::kAmbiguous;
    }
  }
  if (!any) return {Verdict::kNotFingerprinted, 0, std::numeric_limits<double>::infinity()};
  if (best.verdict == Verdict::kAmbiguous) best.index = 0;
  return best;
}

/// ln of the departure-gap density given the arrival gaps:
///   ln e_{mu-lambda}(y_0) + sum_k ln e_mu(y_k - w_k)
/// with e_r(t) = r exp(-r t). -inf when any argument is negative.
inline double likelihood_conditional(std::span<const double> y_bar,
                                     std::span<const double> x_bar, double mu, double lambda) {
  detail::require(y_bar.size() == x_bar.size() + 1,
                  "likelihood_conditional: need |y| = |x| + 1");
  detail::require(lambda > 0.0 && lambda < mu, "likelihood_conditional: need 0 < lambda < mu");
  const double r0 = mu - lambda;
  if (y_bar[0] < 0.0) return detail::kNegInf;
  double ll = std::log(r0) - r0 * y_bar[0];
  const auto w = waiting_times(x_bar, y_bar);
  const double lmu = std::log(mu);
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double s = y_bar[k + 1] - w[k];
    if (s < 0.0) return detail::kNegInf;
    ll += lmu - mu * s;
  }
  return ll;
}

/// ln P(y): departures of a stationary M/M/1 fed by Poisson(lambda) are
/// Poisson(lambda), so every gap is exponential(lambda).
inline double marginal_density(std::span<const double> y_bar, double mu, double lambda) {
  detail::require(lambda > 0.0 && lambda < mu, "marginal_density: need 0 < lambda < mu");
  const double ll = std::log(lambda);
  double out = 0.0;
  for (double y : y_bar) {
    if (y < 0.0) return detail::kNegInf;
    out += ll - lambda * y;
  }
  return out;
}

inline double decision_threshold(double mu, double lambda) {
  detail::require(lambda > 0.0 && lambda < mu, "decision_threshold: need 0 < lambda < mu");
  return std::log(mu / lambda);
}

/// ln P(y | W) - ln P(y) for one codeword. The marginal gaps are anchored at
/// t1; the conditional's first gap is the first packet's sojourn. -inf on a
/// count mismatch or an impossible departure.
inline double log_likelihood_ratio(const PacketTrain& observed, const Codebook& cb,
                                   const Fingerprint& fp, double mu, double lambda, double t1) {
  const auto& d = observed.timestamps;
  if (fp.size() != d.size() || d.empty()) return detail::kNegInf;
  const auto a = detail::candidate_arrivals(cb, fp, t1, lambda);
  std::vector<double> y(d.size());
  std::vector<double> x(d.size() - 1);
  y[0] = d[0] - a[0];
  for (std::size_t k = 1; k < d.size(); ++k) {
    y[k] = d[k] - d[k - 1];
    x[k - 1] = a[k] - a[k - 1];
  }
  const double cond = likelihood_conditional(y, x, mu, lambda);
  if (cond == detail::kNegInf) return cond;
  y[0] = d[0] - t1;
  return cond - marginal_density(y, mu, lambda);
}

/// Decide for the unique codeword whose likelihood ratio P(y|W)/P(y) exceeds
/// beta = ln(mu / lambda); none → not fingerprinted, several → ambiguous.
/// The score is the largest log ratio seen.
inline DecodeResult threshold_decode(const PacketTrain& observed, const Codebook& cb, double mu,
                                     double lambda, const PhasePlan& plan) {
  if (cb.fingerprints.empty()) throw DomainError("threshold_decode: empty codebook");
  const double log_beta = std::log(decision_threshold(mu, lambda));
  DecodeResult r{Verdict::kNotFingerprinted, 0, detail::kNegInf};
  int above = 0;
  for (const auto& fp : cb.fingerprints) {
    const double lr = log_likelihood_ratio(observed, cb, fp, mu, lambda, plan.t1);
    if (lr > r.score) r.score = lr;
    if (lr > log_beta) {
      ++above;
      r.index = fp.index;
    }
  }
  if (above == 1) {
    r.verdict = Verdict::kDecoded;
  } else if (above > 1) {
    r.verdict = Verdict::kAmbiguous;
    r.index = 0;
  } else {
    r.index = 0;
  }
  return r;
}

}  // namespace flowprint
