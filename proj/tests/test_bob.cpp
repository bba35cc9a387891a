#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "flowprint/bob.hpp"
#include "flowprint/queuesim.hpp"
#include "test_support.hpp"

using namespace flowprint;

namespace {

PhasePlan plan_at(double t1, double t2, double lambda) {
  PhasePlan p;
  p.t1 = t1;
  p.t2 = t2;
  p.T = t1 + t2;
  p.lambda_ref = lambda;
  return p;
}

PacketTrain shifted(const Fingerprint& fp, double t1) {
  PacketTrain out{1, {}};
  for (double o : fp.offsets) out.timestamps.push_back(t1 + o);
  return out;
}

/// n codeword offsets with exponential(rate) gaps.
Fingerprint fixed_length_codeword(std::size_t n, double rate, RngState s) {
  Rng rng(s);
  Fingerprint fp{1, {}};
  double t = 0.0;
  for (std::size_t k = 0; k < n; ++k) fp.offsets.push_back(t += rng.exponential(rate));
  return fp;
}

}  // namespace

TEST(MlDecode, ExactMatch) {
  Codebook cb{2.0, 5.0, {Fingerprint{1, {1.0}}, Fingerprint{2, {0.5, 1.5, 2.5}}, Fingerprint{3, {1.0, 2.0}}}};
  const auto r = ml_decode(shifted(cb.at(2), 10.0), cb, plan_at(10.0, 5.0, 2.0), 2.0);
  EXPECT_TRUE(r.decoded());
  EXPECT_EQ(r.index, 2u);
  EXPECT_EQ(r.score, 0.0);
}

TEST(MlDecode, NegativeServiceEliminates) {
  Codebook cb{2.0, 5.0, {Fingerprint{1, {1.0, 2.0}}, Fingerprint{2, {0.5, 1.2}}}};
  // Departures (11.1, 12.2): codeword 1 implies services (0.1, 0.2); codeword 2 (0.6, 1.0).
  auto r = ml_decode(PacketTrain{1, {11.1, 12.2}}, cb, plan_at(10.0, 5.0, 2.0), 2.0);
  EXPECT_EQ(r.index, 1u);
  // Departure 10.8 precedes codeword 1's first release.
  r = ml_decode(PacketTrain{1, {10.8, 12.2}}, cb, plan_at(10.0, 5.0, 2.0), 2.0);
  EXPECT_EQ(r.index, 2u);
}

TEST(MlDecode, CountMismatchIsNotFingerprinted) {
  Codebook cb{2.0, 5.0, {Fingerprint{1, {1.0, 2.0}}, Fingerprint{2, {0.5, 1.5, 2.5}}}};
  const auto r = ml_decode(PacketTrain{1, {11.0}}, cb, plan_at(10.0, 5.0, 2.0), 2.0);
  EXPECT_EQ(r.verdict, Verdict::kNotFingerprinted);
}

TEST(MlDecode, TieIsAmbiguous) {
  Codebook cb{2.0, 5.0, {Fingerprint{1, {1.0}}, Fingerprint{2, {1.0}}}};
  const auto r = ml_decode(PacketTrain{1, {11.5}}, cb, plan_at(10.0, 5.0, 2.0), 2.0);
  EXPECT_EQ(r.verdict, Verdict::kAmbiguous);
}

TEST(MlDecode, EmptyCodebookThrows) {
  EXPECT_THROW(ml_decode(PacketTrain{}, Codebook{}, plan_at(1.0, 1.0, 1.0), 1.0), DomainError);
}

TEST(MlDecode, ScaledCodewordForFasterFlow) {
  Codebook cb{2.0, 5.0, {Fingerprint{1, {1.0, 2.0}}, Fingerprint{2, {2.0, 4.0}}}};
  // Flow at rate 4: codeword 2 scales to offsets (1, 2).
  const auto r = ml_decode(PacketTrain{1, {11.0, 12.0}}, cb, plan_at(10.0, 5.0, 2.0), 4.0);
  EXPECT_EQ(r.index, 2u);
}

TEST(MlDecode, TrueCodewordReproducesServices) {
  const auto cb = generate_codebook(8, 5.0, 20.0, RngState{1, 1});
  Rng svc(RngState{2, 1});
  for (const auto& fp : cb.fingerprints) {
    std::vector<double> services;
    const auto d = simulate_queue_with(shifted(fp, 100.0), std::span<const double>{}, [&] {
                     services.push_back(svc.exponential(25.0));
                     return services.back();
                   }).main_departures;
    double total = 0.0;
    for (double s : services) total += s;
    const auto a = detail::candidate_arrivals(cb, fp, 100.0, 5.0);
    EXPECT_NEAR(implied_service_sum(d.timestamps, a), total, 1e-9);
    const auto r = ml_decode(d, cb, plan_at(100.0, 20.0, 5.0), 5.0);
    EXPECT_TRUE(r.decoded());
    EXPECT_LE(r.score, total + 1e-9);
  }
}

TEST(ImpliedServices, NanOnViolation) {
  EXPECT_TRUE(std::isnan(implied_service_sum(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0})));
  EXPECT_TRUE(std::isnan(implied_service_sum(std::vector<double>{0.5}, std::vector<double>{1.0})));
  EXPECT_NEAR(implied_service_sum(std::vector<double>{1.5, 2.0}, std::vector<double>{1.0, 1.2}), 1.0, 1e-15);
}

TEST(Likelihood, SinglePacket) {
  const double ll = likelihood_conditional(std::vector<double>{0.3}, std::vector<double>{}, 5.0, 2.0);
  EXPECT_NEAR(ll, std::log(3.0) - 3.0 * 0.3, 1e-15);
}

TEST(Likelihood, TwoGapsByHand) {
  const double mu = 5.0, lam = 2.0;
  const std::vector<double> x{0.5, 0.3};
  const std::vector<double> y{0.2, 0.7, 0.4};
  // w1 = max(0, 0.5 - 0.2) = 0.3, w2 = max(0, 0.8 - 0.9) = 0
  const double expected = std::log(mu - lam) - (mu - lam) * 0.2 + std::log(mu) - mu * (0.7 - 0.3) +
                          std::log(mu) - mu * 0.4;
  EXPECT_NEAR(likelihood_conditional(y, x, mu, lam), expected, 1e-14);
}

TEST(Likelihood, ImpossibleDepartureIsMinusInfinity) {
  // w1 = 0.9 > y1 = 0.5
  const double ll = likelihood_conditional(std::vector<double>{0.1, 0.5}, std::vector<double>{1.0}, 5.0, 2.0);
  EXPECT_EQ(ll, -std::numeric_limits<double>::infinity());
  EXPECT_THROW(likelihood_conditional(std::vector<double>{0.1}, std::vector<double>{1.0}, 5.0, 2.0), DomainError);
}

TEST(Marginal, SingleGapIsExponential) {
  const double lam = 2.0, mu = 5.0;
  EXPECT_NEAR(marginal_density(std::vector<double>{0.7}, mu, lam), std::log(lam) - lam * 0.7, 1e-15);
  const double total = testsupport::simpson(
      [&](double y) { return std::exp(marginal_density(std::vector<double>{y}, mu, lam)); }, 0.0, 30.0);
  EXPECT_NEAR(total, 1.0, 1e-6);
}

// The second departure gap, integrated over the first packet's sojourn and the
// arrival gap in the defining construction, has the closed-form density.
TEST(Marginal, SecondGapMatchesQuadrature) {
  const double lam = 2.0, mu = 5.0;
  for (double y1 : {0.1, 0.4, 1.0, 2.5}) {
    auto inner = [&](double y0) {
      // e_lambda(x) e_mu(y1 - max(0, x - y0)), support x <= y0 + y1
      auto f = [&](double x) {
        const double s = y1 - std::max(0.0, x - y0);
        return lam * std::exp(-lam * x) * mu * std::exp(-mu * s);
      };
      return testsupport::simpson(f, 0.0, y0, 200) + testsupport::simpson(f, y0, y0 + y1, 200);
    };
    const double p = testsupport::simpson(
        [&](double y0) { return (mu - lam) * std::exp(-(mu - lam) * y0) * inner(y0); }, 0.0, 12.0, 600);
    const double closed = std::exp(marginal_density(std::vector<double>{y1}, mu, lam));
    EXPECT_NEAR(p, closed, 0.01 * closed) << y1;
  }
}

TEST(Marginal, MonteCarloNormalization) {
  const double lam = 2.0, mu = 5.0;
  Rng rng(RngState{3, 1});
  const int n = 200000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    std::vector<double> y(3);
    double log_g = 0.0;
    for (auto& v : y) {
      v = rng.exponential(1.0);
      log_g += -v;
    }
    sum += std::exp(marginal_density(y, mu, lam) - log_g);
  }
  EXPECT_NEAR(sum / n, 1.0, 0.05);
}

TEST(Threshold, BetaValue) {
  EXPECT_NEAR(decision_threshold(5.5, 5.485), 0.00273099851123166619, 1e-15);
  EXPECT_THROW(decision_threshold(5.0, 5.0), DomainError);
}

TEST(Threshold, PerPacketRatioConcentrates) {
  const double mu = 25.0, lam = 20.0;
  const double target = std::log(mu / lam);
  std::vector<double> err, spread;
  for (std::size_t n : {10u, 50u, 200u}) {
    std::vector<double> v;
    for (std::uint64_t t = 0; t < 300; ++t) {
      Codebook cb{lam, 1.0, {fixed_length_codeword(n, lam, RngState{4, t})}};
      cb.t2 = cb.fingerprints[0].offsets.back() + 1.0;
      QueueSpec q{ServiceSpec::exponential(mu), 0.0};
      const auto d = simulate_queue(shifted(cb.fingerprints[0], 5.0), q, 5.0 + cb.t2, RngState{5, t});
      v.push_back(log_likelihood_ratio(d.main_departures, cb, cb.fingerprints[0], mu, lam, 5.0) /
                  static_cast<double>(n));
    }
    const double m = testsupport::mean(v);
    double var = 0.0;
    for (double x : v) var += (x - m) * (x - m);
    spread.push_back(std::sqrt(var / (v.size() - 1)));
    err.push_back(std::abs(m - target));
  }
  EXPECT_LT(spread[2], spread[1]);
  EXPECT_LT(spread[1], spread[0]);
  EXPECT_LT(err[2], err[0]);
  EXPECT_LT(err[2], 3.0 * spread[2] / std::sqrt(300.0) + 0.01);
}

TEST(Threshold, DecodesTrueCodewordAndRejectsPlainFlows) {
  const double mu = 20.0, lam = 7.36, t1 = 10.0, t2 = 20.0;
  QueueSpec q{ServiceSpec::exponential(mu), 0.0};
  const auto plan = plan_at(t1, t2, lam);
  int correct = 0, false_prints = 0;
  const int trials = 200;
  for (std::uint64_t t = 0; t < trials; ++t) {
    const auto cb = generate_codebook(5, lam, t2, RngState{6, t});
    const auto& fp = cb.at(1 + t % 5);
    const auto d = simulate_queue(shifted(fp, t1), q, t1 + t2, RngState{7, t}).main_departures;
    const auto r = threshold_decode(d, cb, mu, lam, plan);
    correct += r.decoded() && r.index == fp.index;

    PacketTrain plain{1, {}};
    for (double x : sample_poisson_process(lam, t2, RngState{8, t}).timestamps) plain.timestamps.push_back(t1 + x);
    const auto dp = simulate_queue(plain, q, t1 + t2, RngState{9, t}).main_departures;
    false_prints += threshold_decode(dp, cb, mu, lam, plan).decoded();
  }
  EXPECT_GE(correct, 0.9 * trials);
  EXPECT_LE(false_prints, 0.1 * trials);
}
