#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "flowprint/queuesim.hpp"
#include "test_support.hpp"

using namespace flowprint;

namespace {

QueueResult run_with_services(const std::vector<double>& arrivals, const std::vector<double>& services) {
  std::size_t k = 0;
  return simulate_queue_with(PacketTrain{1, arrivals}, std::span<const double>{},
                             [&] { return services[k++]; });
}

}  // namespace

TEST(Fifo, HandExample) {
  const auto r = run_with_services({0.0, 1.0, 1.5}, {0.3, 0.8, 0.2});
  ASSERT_EQ(r.main_departures.size(), 3u);
  EXPECT_NEAR(r.main_departures.timestamps[0], 0.3, 1e-15);
  EXPECT_NEAR(r.main_departures.timestamps[1], 1.8, 1e-15);
  EXPECT_NEAR(r.main_departures.timestamps[2], 2.0, 1e-15);
  EXPECT_EQ(fifo_departures(std::vector<double>{0.0, 1.0, 1.5}, std::vector<double>{0.3, 0.8, 0.2}),
            r.main_departures.timestamps);
}

TEST(Fifo, ZeroServiceIsIdentity) {
  const auto a = sample_poisson_process(3.0, 10.0, RngState{1, 1}).timestamps;
  const auto r = simulate_queue_with(PacketTrain{1, a}, std::span<const double>{}, [] { return 0.0; });
  EXPECT_EQ(r.main_departures.timestamps, a);
}

TEST(Fifo, LengthMismatchThrows) {
  EXPECT_THROW(fifo_departures(std::vector<double>{1.0}, std::vector<double>{}), DomainError);
}

TEST(SimulateQueue, ReconstructionIdentityOnTranscript) {
  QueueSpec spec{ServiceSpec::exponential(20.0), 5.0};
  for (std::uint64_t t = 0; t < 20; ++t) {
    const auto main = sample_poisson_process(7.36, 200.0, RngState{2, t});
    const auto r = simulate_queue(main, spec, 200.0, RngState{3, t});
    double prev = -1e300;
    std::size_t mains = 0;
    for (const auto& e : r.transcript.entries) {
      const double d = std::max(e.arrival, prev) + e.service;
      ASSERT_NEAR(e.departure, d, 1e-9);
      ASSERT_GE(e.departure, prev);  // FIFO
      ASSERT_NEAR(e.wait, std::max(e.arrival, prev) - e.arrival, 1e-9);
      prev = e.departure;
      if (e.main) {
        ASSERT_EQ(r.main_departures.timestamps[mains], e.departure);
        ASSERT_EQ(main.timestamps[mains], e.arrival);
        ++mains;
      }
    }
    EXPECT_EQ(mains, main.size());
    EXPECT_GT(r.transcript.entries.size(), main.size());
  }
}

TEST(SimulateQueue, Deterministic) {
  QueueSpec spec{ServiceSpec::exponential(10.0), 2.0};
  const auto main = sample_poisson_process(3.0, 50.0, RngState{4, 1});
  EXPECT_EQ(simulate_queue(main, spec, 50.0, RngState{5, 1}).main_departures,
            simulate_queue(main, spec, 50.0, RngState{5, 1}).main_departures);
}

TEST(SimulateQueue, BurkeDeparturesArePoisson) {
  QueueSpec spec{ServiceSpec::exponential(20.0), 0.0};
  const auto main = sample_poisson_process(5.0, 2400.0, RngState{6, 1});
  ASSERT_GT(main.size(), 11001u);
  const auto d = simulate_queue(main, spec, 2400.0, RngState{7, 1}).main_departures.timestamps;
  std::vector<double> gaps;
  for (std::size_t j = 1001; j <= 11000; ++j) gaps.push_back(d[j] - d[j - 1]);
  const double ks = testsupport::ks_statistic(gaps, [](double x) { return testsupport::exp_cdf(5.0, x); });
  EXPECT_LT(ks, testsupport::ks_critical_001(10000));
}

TEST(SimulateQueue, LittlesLaw) {
  const double lam = 6.0, lam_i = 4.0, mu = 15.0;
  QueueSpec spec{ServiceSpec::exponential(mu), lam_i};
  const double horizon = 20000.0;
  const auto main = sample_poisson_process(lam, horizon, RngState{8, 1});
  const auto r = simulate_queue(main, spec, horizon, RngState{9, 1});

  // Time-average number in system from the event sweep.
  std::vector<std::pair<double, int>> events;
  double sojourn = 0.0;
  for (const auto& e : r.transcript.entries) {
    events.emplace_back(e.arrival, +1);
    events.emplace_back(e.departure, -1);
    sojourn += e.departure - e.arrival;
  }
  std::sort(events.begin(), events.end());
  double area = 0.0, last = 0.0;
  int n = 0;
  for (const auto& [t, step] : events) {
    area += n * (t - last);
    last = t;
    n += step;
  }
  const double L = area / last;
  const double W = sojourn / static_cast<double>(r.transcript.entries.size());
  EXPECT_NEAR(L, (lam + lam_i) * W, 0.1 * L);
  EXPECT_NEAR(W, 1.0 / (mu - lam - lam_i), 0.1 * W);
}

TEST(SimulateQueue, Utilization) {
  const double lam = 5.0, lam_i = 4.0, mu = 15.0;
  QueueSpec spec{ServiceSpec::exponential(mu), lam_i};
  const double horizon = 2000.0;
  std::vector<double> busy;
  for (std::uint64_t rep = 0; rep < 30; ++rep) {
    const auto main = sample_poisson_process(lam, horizon, RngState{10, rep});
    const auto r = simulate_queue(main, spec, horizon, RngState{11, rep});
    double b = 0.0;
    for (const auto& e : r.transcript.entries) {
      const double start = e.arrival + e.wait;
      b += std::max(0.0, std::min(e.departure, horizon) - std::min(start, horizon));
    }
    busy.push_back(b / horizon);
  }
  const double m = testsupport::mean(busy);
  double var = 0.0;
  for (double x : busy) var += (x - m) * (x - m);
  const double se = std::sqrt(var / (busy.size() - 1) / busy.size());
  EXPECT_NEAR(m, (lam + lam_i) / mu, 3.0 * se + 1e-3);
}

TEST(SimulateQueue, TranscriptCsv) {
  const auto r = run_with_services({0.0, 1.0}, {0.5, 0.5});
  std::ostringstream out;
  r.transcript.write_csv(out);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "arrival,tag,service,departure,wait");
  EXPECT_NE(out.str().find("main"), std::string::npos);
}

TEST(QueueSpec, UnstableQueueNamed) {
  QueueSpec spec{ServiceSpec::exponential(10.0), 4.0};
  EXPECT_NO_THROW(spec.check_stable(5.0, 2));
  try {
    spec.check_stable(6.0, 3);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("queue 3"), std::string::npos);
  }
  EXPECT_DOUBLE_EQ(spec.effective_mu(), 6.0);
}

TEST(WaitingTimes, Example) {
  const auto w = waiting_times(std::vector<double>{1.0, 1.0}, std::vector<double>{0.2, 1.1, 1.0});
  ASSERT_EQ(w.size(), 2u);
  EXPECT_NEAR(w[0], 0.8, 1e-15);
  EXPECT_NEAR(w[1], 0.7, 1e-15);
}

TEST(WaitingTimes, AlignedIsZero) {
  const auto w = waiting_times(std::vector<double>{1.0, 2.0, 0.5}, std::vector<double>{1.0, 2.0, 0.5, 3.0});
  for (double x : w) EXPECT_EQ(x, 0.0);
}

TEST(WaitingTimes, GrowsWhenArrivalsAreSparse) {
  const auto w = waiting_times(std::vector<double>{10.0, 10.0, 10.0}, std::vector<double>{0.1, 0.1, 0.1, 0.1});
  for (std::size_t k = 0; k < w.size(); ++k) {
    EXPECT_GT(w[k], 0.0);
    if (k > 0) EXPECT_GT(w[k], w[k - 1]);
  }
}

TEST(WaitingTimes, LengthMismatchThrows) {
  EXPECT_THROW(waiting_times(std::vector<double>{1.0}, std::vector<double>{1.0}), DomainError);
}
