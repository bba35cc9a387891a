#pragma once

// Single-server FIFO queue with optional Poisson cross traffic.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "flowprint/error.hpp"
#include "flowprint/stochastic.hpp"

namespace flowprint {

struct QueueSpec {
  ServiceSpec service;        // service.mu is the server rate
  double lambda_interf = 0.0; // cross traffic; 0 in Setting 2

  double mu() const noexcept { return service.mu; }
  /// Service rate left to the main flow.
  double effective_mu() const noexcept { return service.mu - lambda_interf; }

  /// Throws ConfigError naming the queue unless lambda + lambda' < mu.
  void check_stable(double lambda_main, std::size_t queue_index = 0) const {
    const std::string who = "queue " + std::to_string(queue_index);
    try {
      service.validate();
    } catch (const DomainError& e) {
      throw ConfigError(who + ": " + e.what());
    }
    if (!(lambda_interf >= 0.0) || !std::isfinite(lambda_interf)) {
      throw ConfigError(who + ": interfering rate must be >= 0");
    }
    if (!(lambda_main + lambda_interf < service.mu)) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s is unstable: lambda + lambda' = %g >= mu = %g",
                    who.c_str(), lambda_main + lambda_interf, service.mu);
      throw ConfigError(buf);
    }
  }
};

struct QueueTranscript {
  struct Entry {
    double arrival = 0.0;
    bool main = true;
    double service = 0.0;
    double departure = 0.0;
    double wait = 0.0;  // time spent queued before service starts
  };
  std::vector<Entry> entries;  // merged arrival order == departure order

  void write_csv(std::ostream& out) const {
    out << "arrival,tag,service,departure,wait\n";
    char buf[128];
    for (const auto& e : entries) {
      std::snprintf(buf, sizeof buf, "%.17g,%s,%.17g,%.17g,%.17g\n", e.arrival,
                    e.main ? "main" : "interf", e.service, e.departure, e.wait);
      out << buf;
    }
  }
};

struct QueueResult {
  PacketTrain main_departures;
  QueueTranscript transcript;
};

/// d_j = max(a_j, d_{j-1}) + s_j for arrivals already in FIFO order.
inline std::vector<double> fifo_departures(std::span<const double> arrivals,
                                           std::span<const double> services) {
  detail::require(arrivals.size() == services.size(),
                  "fifo_departures: arrivals and services differ in length");
  std::vector<double> d(arrivals.size());
  double prev = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < arrivals.size(); ++j) {
    prev = std::max(arrivals[j], prev) + services[j];
    d[j] = prev;
  }
  return d;
}

/// Core simulation with an arbitrary service source: `next_service()` is
/// called once per packet in merged order.
template <class ServiceSource>
QueueResult simulate_queue_with(const PacketTrain& main, std::span<const double> interfering,
                                ServiceSource&& next_service) {
  const auto& a = main.timestamps;
  QueueResult r;
  r.main_departures.flow_id = main.flow_id;
  r.main_departures.timestamps.reserve(a.size());
  auto& entries = r.transcript.entries;
  entries.reserve(a.size() + interfering.size());

  std::size_t i = 0;
  std::size_t k = 0;
  double prev = -std::numeric_limits<double>::infinity();
  while (i < a.size() || k < interfering.size()) {
    // Ties go to the main flow.
    const bool take_main = k == interfering.size() || (i < a.size() && a[i] <= interfering[k]);
    const double t = take_main ? a[i++] : interfering[k++];
    const double s = next_service();
    const double start = std::max(t, prev);
    prev = start + s;
    entries.push_back({t, take_main, s, prev, start - t});
    if (take_main) r.main_departures.timestamps.push_back(prev);
  }
  return r;
}

/// Main flow plus Poisson(lambda') cross traffic on [0, horizon], services
/// from spec.service. Streams: derive(stream_id, 1) for cross traffic,
/// derive(stream_id, 2) for services.
inline QueueResult simulate_queue(const PacketTrain& main, const QueueSpec& spec, double horizon,
                                  RngState rng) {
  spec.service.validate();
  detail::require(horizon > 0.0, "simulate_queue: horizon must be positive");
  std::vector<double> interf;
  if (spec.lambda_interf > 0.0) {
    interf = sample_poisson_process(spec.lambda_interf, horizon,
                                    RngState{rng.seed, derive_stream(rng.stream_id, 1)})
                 .timestamps;
  }
  Rng service_rng(RngState{rng.seed, derive_stream(rng.stream_id, 2)});
  ServiceSampler sampler(spec.service);
  return simulate_queue_with(main, interf, [&] { return sampler(service_rng); });
}

/// w_k = max(0, sum_{i=1..k} x_i - sum_{i=0..k-1} y_i), k = 1..n, where
/// x has n entries and y has n+1 (y_0 first).
inline std::vector<double> waiting_times(std::span<const double> x_bar,
                                         std::span<const double> y_bar) {
  detail::require(y_bar.size() == x_bar.size() + 1,
                  "waiting_times: need |y| = |x| + 1");
  std::vector<double> w(x_bar.size());
  double sx = 0.0;
  double sy = 0.0;
  for (std::size_t k = 0; k < x_bar.size(); ++k) {
    sx += x_bar[k];
    sy += y_bar[k];
    w[k] = std::max(0.0, sx - sy);
  }
  return w;
}

}  // namespace flowprint
