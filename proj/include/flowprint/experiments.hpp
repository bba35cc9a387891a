#pragma once

// Monte Carlo orchestration: one trial runs Alice on every simulated flow,
// Willie on the phase-1 counts, and (optionally) the queues and Bob.
// Trials are independent and reduced in index order, so the output does
// not depend on the number of workers.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "flowprint/alice.hpp"
#include "flowprint/bob.hpp"
#include "flowprint/codebook.hpp"
#include "flowprint/config.hpp"
#include "flowprint/limits.hpp"
#include "flowprint/queuesim.hpp"
#include "flowprint/stochastic.hpp"
#include "flowprint/willie.hpp"

namespace flowprint {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Wilson score interval for k successes in n trials (95% by default).
inline Interval wilson_interval(std::int64_t k, std::int64_t n, double z = 1.959963984540054) {
  if (n <= 0) return {0.0, 1.0};
  const double nd = static_cast<double>(n);
  const double p = static_cast<double>(k) / nd;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nd;
  const double centre = (p + z2 / (2.0 * nd)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nd + z2 / (4.0 * nd * nd)) / denom;
  return {k == 0 ? 0.0 : std::max(0.0, centre - half), k == n ? 1.0 : std::min(1.0, centre + half)};
}

struct Estimate {
  std::int64_t hits = 0;
  std::int64_t n = 0;

  double value() const noexcept {
    return n > 0 ? static_cast<double>(hits) / static_cast<double>(n) : 0.0;
  }
  Interval ci() const { return wilson_interval(hits, n); }

  void add(const Estimate& o) noexcept {
    hits += o.hits;
    n += o.n;
  }
};

/// Outcome of one trial, summed over its flows.
struct TrialRecord {
  Estimate underflow;      // over fingerprinted flows
  Estimate decode_error;   // over fingerprinted flows without underflow
  Estimate false_print;    // over never-fingerprinted flows Bob inspects
  Estimate correct;        // over all fingerprinted flows
  std::int64_t h0_count = 0;
  std::int64_t h1_count = 0;
};

struct Metrics {
  Estimate p_f1;
  Estimate p_f2;
  Estimate p_f3;
  Estimate p_correct;
  std::vector<std::int64_t> h0_counts;
  std::vector<std::int64_t> h1_counts;
  double expected_count = 0.0;  // Willie's mean count under H0
  std::vector<RocPoint> roc;
  RocPoint best;                // minimum P_e over the U grid
  double pf1_bound = 0.0;
  double pe_lower_bound = 0.5;  // from the phase-1 KL divergence
  std::int64_t trials = 0;
  std::uint64_t seed = 0;
};

namespace detail {

enum : std::uint64_t { kCodebookStream = 1, kSelectStream, kArrivalStream, kQueueStream };

inline std::uint64_t stream(std::int64_t trial, std::uint64_t purpose, std::int64_t flow = 0) {
  return derive_stream(0, static_cast<std::uint64_t>(trial), purpose,
                       static_cast<std::uint64_t>(flow));
}

inline void audit(bool ok, const std::string& what, std::int64_t trial, std::size_t flow) {
  if (!ok) {
    throw AuditError("trial " + std::to_string(trial) + " flow " + std::to_string(flow + 1) +
                     ": " + what);
  }
}

/// Run fn(i) for i in [0, n) on `workers` threads; rethrows the first error.
template <class Fn>
void parallel_for(std::int64_t n, unsigned workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      const auto i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::jthread> pool;
  const auto count = std::min<std::int64_t>(workers, n);
  for (std::int64_t w = 0; w < count; ++w) pool.emplace_back(body);
  pool.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

/// One trial of a resolved configuration.
inline TrialRecord run_trial(const ScenarioConfig& cfg, std::int64_t trial) {
  const auto sc = cfg.scenario_enum();
  const auto& plan = cfg.plan;
  const double t1 = plan.t1;
  const double T = plan.T;
  const std::uint64_t seed = cfg.seed;

  const auto cb = generate_codebook(cfg.codebook_size, cfg.lambda_min(), plan.t2,
                                    RngState{seed, detail::stream(trial, detail::kCodebookStream)});
  // Only the simulated links take part in the selection.
  std::vector<double> lambdas(static_cast<std::size_t>(cfg.links));
  for (std::size_t i = 0; i < lambdas.size(); ++i) lambdas[i] = cfg.lambda_of(i);
  const auto mode = cfg.bernoulli() ? SelectionMode::kBernoulli
                    : is_subset_scenario(sc) ? SelectionMode::kSubset
                                             : SelectionMode::kAll;
  const auto assignment =
      select_flows(mode, lambdas, static_cast<std::size_t>(std::min(cfg.m, cfg.links)), std::max(0.0, cfg.q),
                   cb.size(), RngState{seed, detail::stream(trial, detail::kSelectStream)});

  TrialRecord rec;
  for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.links); ++i) {
    const auto flow = static_cast<std::int64_t>(i);
    const double li = lambdas[i];
    auto arrivals =
        sample_poisson_process(li, T, RngState{seed, detail::stream(trial, detail::kArrivalStream, flow)});
    arrivals.flow_id = flow + 1;
    const auto& at = arrivals.timestamps;
    const std::size_t n_phase1 = count_until(at, t1);
    rec.h0_count += static_cast<std::int64_t>(n_phase1);

    const auto& fp_index = assignment[i].fingerprint;
    PacketTrain out;
    out.flow_id = arrivals.flow_id;
    std::size_t n_released = 0;
    EmbedResult emb;
    if (fp_index) {
      const double delta = cfg.r * slowdown_for(plan, li);
      PacketTrain p1{arrivals.flow_id, {at.begin(), at.begin() + static_cast<std::ptrdiff_t>(n_phase1)}};
      PacketTrain p2{arrivals.flow_id, {at.begin() + static_cast<std::ptrdiff_t>(n_phase1), at.end()}};
      auto slow = slow_flow(p1, li, delta, t1);
      const auto fp = scale_fingerprint(cb.at(*fp_index), cb.rate, li);
      emb = embed_fingerprint(slow.backlog, p2, fp, t1);
      n_released = slow.released.size();
      out.timestamps = std::move(slow.released.timestamps);
      out.timestamps.insert(out.timestamps.end(), emb.output.timestamps.begin(),
                            emb.output.timestamps.end());

      detail::audit(out.size() + emb.remaining.size() == at.size(), "packet conservation", trial, i);
      for (std::size_t k = 0; k < out.size(); ++k) {
        detail::audit(out.timestamps[k] >= at[k], "packet released before it arrived", trial, i);
      }
      detail::audit(out.valid(), "output train not strictly increasing", trial, i);

      rec.underflow.n += 1;
      rec.correct.n += 1;
      if (emb.underflow) rec.underflow.hits += 1;
    } else {
      out.timestamps = at;
    }
    rec.h1_count += static_cast<std::int64_t>(count_until(out.timestamps, t1));

    if (!cfg.decode) continue;
    const bool inspects_unmarked = uses_threshold_decoder(sc) && !fp_index;
    if (fp_index && emb.underflow) continue;
    if (!fp_index && !inspects_unmarked) continue;

    const auto queue = cfg.queue(i);
    const auto q = simulate_queue(out, queue, T,
                                  RngState{seed, detail::stream(trial, detail::kQueueStream, flow)});
    const auto& dep = q.main_departures.timestamps;
    const std::size_t first = fp_index ? n_released : n_phase1;
    const std::size_t last = fp_index ? n_released + emb.fingerprint_packets : dep.size();
    PacketTrain observed{arrivals.flow_id,
                         {dep.begin() + static_cast<std::ptrdiff_t>(first),
                          dep.begin() + static_cast<std::ptrdiff_t>(last)}};
    const auto result = uses_threshold_decoder(sc)
                            ? threshold_decode(observed, cb, queue.mu(), li, plan)
                            : ml_decode(observed, cb, plan, li);
    if (fp_index) {
      const bool ok = result.decoded() && result.index == *fp_index;
      rec.decode_error.n += 1;
      if (!ok) rec.decode_error.hits += 1;
      if (ok) rec.correct.hits += 1;
    } else {
      rec.false_print.n += 1;
      if (result.verdict != Verdict::kNotFingerprinted) rec.false_print.hits += 1;
    }
  }
  return rec;
}

/// U grid in packets for a resolved configuration.
inline std::vector<double> u_grid_packets(const ScenarioConfig& cfg, double expected_count) {
  const auto sigma_grid = cfg.u_grid.empty() ? default_u_grid_sigma() : cfg.u_grid;
  const double sigma = std::sqrt(expected_count);
  std::vector<double> out;
  out.reserve(sigma_grid.size());
  for (double u : sigma_grid) out.push_back(u * sigma);
  return out;
}

inline Metrics run_scenario(ScenarioConfig cfg, unsigned workers = 1) {
  cfg.resolve();
  std::vector<TrialRecord> records(static_cast<std::size_t>(cfg.trials));
  detail::parallel_for(cfg.trials, workers, [&](std::int64_t t) {
    records[static_cast<std::size_t>(t)] = run_trial(cfg, t);
  });

  Metrics m;
  m.trials = cfg.trials;
  m.seed = cfg.seed;
  for (const auto& r : records) {
    m.p_f1.add(r.underflow);
    m.p_f2.add(r.decode_error);
    m.p_f3.add(r.false_print);
    m.p_correct.add(r.correct);
    m.h0_counts.push_back(r.h0_count);
    m.h1_counts.push_back(r.h1_count);
  }

  const auto& plan = cfg.plan;
  double kl = 0.0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.links); ++i) {
    const double li = cfg.lambda_of(i);
    m.expected_count += li * plan.t1;
  }
  // Willie's divergence over the watched flows that Alice slows down.
  const auto watched_marked =
      cfg.bernoulli() ? static_cast<double>(cfg.links) * cfg.q
                      : static_cast<double>(std::min<std::int64_t>(cfg.links, cfg.m));
  if (cfg.r > 0.0 && watched_marked > 0.0) {
    const double li = cfg.lambda_min();
    kl = watched_marked * kl_poisson_counts(li - cfg.r * slowdown_for(plan, li), li, plan.t1);
  }
  m.pe_lower_bound = pe_lower_bound(kl);
  m.pf1_bound = pf1_bound(cfg.epsilon, plan.alpha);

  if (cfg.detect) {
    m.roc = roc_sweep(m.h0_counts, m.h1_counts, m.expected_count,
                      u_grid_packets(cfg, m.expected_count));
    m.best = *std::min_element(m.roc.begin(), m.roc.end(),
                               [](const RocPoint& a, const RocPoint& b) { return a.p_e < b.p_e; });
  }
  return m;
}

/// Set one sweep variable on a configuration.
inline void apply_sweep_value(ScenarioConfig& cfg, const std::string& var, double v) {
  if (var == "r" || var == "r_prime") {
    cfg.r = v;
  } else if (var == "r_dblprime") {
    cfg.r_dblprime = v;
  } else if (var == "shape") {
    cfg.service = ServiceFamily::kWeibull;
    cfg.shape = v;
  } else if (var == "T") {
    cfg.T = v;
    cfg.t1 = cfg.t2 = 0.0;
  } else if (var == "q") {
    cfg.q = v;
  } else {
    throw ConfigError("sweep_var: unknown sweep variable '" + var + "'");
  }
}

struct SweepPoint {
  double value = 0.0;
  ScenarioConfig cfg;
  Metrics metrics;
};

/// Seed of grid point `index` under master seed `seed`.
inline std::uint64_t sweep_point_seed(std::uint64_t seed, std::size_t index) {
  return derive_stream(seed, 0x53574545ULL, index);
}

inline std::vector<SweepPoint> sweep(const ScenarioConfig& base, std::span<const double> grid,
                                     unsigned workers = 1) {
  if (grid.empty()) throw ConfigError("sweep_grid: must not be empty");
  if (base.sweep_var.empty()) throw ConfigError("sweep_var: missing required key");
  // Resolve every point before any trial runs.
  std::vector<SweepPoint> points;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    SweepPoint p;
    p.value = grid[k];
    p.cfg = base;
    apply_sweep_value(p.cfg, base.sweep_var, grid[k]);
    p.cfg.seed = sweep_point_seed(base.seed, k);
    p.cfg.resolve();
    points.push_back(std::move(p));
  }
  for (auto& p : points) p.metrics = run_scenario(p.cfg, workers);
  return points;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

/// Shortest round-trip decimal form.
inline std::string format_number(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline void write_metrics_header(std::ostream& out) {
  out << "sweep_var,sweep_value,metric,estimate,ci_low,ci_high,n_trials,seed\n";
}

/// Rows for one run. Estimates with no observations are omitted; analytic
/// bounds carry n_trials = 0 and a degenerate interval.
inline void write_metrics_rows(std::ostream& out, const std::string& var, double value,
                               const Metrics& m) {
  const std::string prefix = (var.empty() ? "none" : var) + "," + format_number(value) + ",";
  auto row = [&](const char* name, double est, double lo, double hi, std::int64_t n) {
    out << prefix << name << ',' << format_number(est) << ',' << format_number(lo) << ','
        << format_number(hi) << ',' << n << ',' << m.seed << '\n';
  };
  auto est_row = [&](const char* name, const Estimate& e) {
    if (e.n == 0) return;
    const auto ci = e.ci();
    row(name, e.value(), ci.lo, ci.hi, e.n);
  };
  est_row("p_f1", m.p_f1);
  est_row("p_f2", m.p_f2);
  est_row("p_f3", m.p_f3);
  est_row("p_correct", m.p_correct);
  if (!m.roc.empty()) {
    const auto n0 = static_cast<std::int64_t>(m.h0_counts.size());
    const auto n1 = static_cast<std::int64_t>(m.h1_counts.size());
    const Estimate fa{std::llround(m.best.p_fa * static_cast<double>(n0)), n0};
    const Estimate md{std::llround(m.best.p_md * static_cast<double>(n1)), n1};
    const auto cfa = fa.ci();
    const auto cmd = md.ci();
    row("p_fa", m.best.p_fa, cfa.lo, cfa.hi, n0);
    row("p_md", m.best.p_md, cmd.lo, cmd.hi, n1);
    row("p_e", m.best.p_e, 0.5 * (cfa.lo + cmd.lo), 0.5 * (cfa.hi + cmd.hi), n0 + n1);
    row("u_best", m.best.U, m.best.U, m.best.U, 0);
  }
  row("pf1_bound", m.pf1_bound, m.pf1_bound, m.pf1_bound, 0);
  row("pe_lower_bound", m.pe_lower_bound, m.pe_lower_bound, m.pe_lower_bound, 0);
}

inline void write_roc_csv(std::ostream& out, const Metrics& m) {
  out << "U,p_fa,p_md,p_e,n_trials_h0,n_trials_h1\n";
  for (const auto& p : m.roc) {
    out << format_number(p.U) << ',' << format_number(p.p_fa) << ',' << format_number(p.p_md)
        << ',' << format_number(p.p_e) << ',' << m.h0_counts.size() << ','
        << m.h1_counts.size() << '\n';
  }
}

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Minimal SVG line chart; axes span the data range.
inline void write_svg_chart(std::ostream& out, const std::string& title, const std::string& xlabel,
                            const std::string& ylabel, std::span<const Series> series) {
  constexpr double W = 640, H = 420, L = 70, R = 20, Tp = 40, B = 60;
  double x0 = INFINITY, x1 = -INFINITY, y0 = 0.0, y1 = 1.0;
  for (const auto& s : series) {
    for (double v : s.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : s.y) y1 = std::max(y1, v);
  }
  if (!(x1 > x0)) x0 -= 0.5, x1 += 0.5;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - Tp - B); };
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title
      << "</text>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << Tp << "\" x2=\"" << L << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4.0;
    const double yv = y0 + (y1 - y0) * k / 4.0;
    out << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">"
        << format_number(std::round(xv * 1000) / 1000) << "</text>\n";
    out << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">"
        << format_number(std::round(yv * 1000) / 1000) << "</text>\n";
  }
  out << "<text x=\"" << W / 2 << "\" y=\"" << H - 18 << "\" text-anchor=\"middle\">" << xlabel
      << "</text>\n";
  out << "<text x=\"16\" y=\"" << H / 2 << "\" transform=\"rotate(-90 16 " << H / 2
      << ")\" text-anchor=\"middle\">" << ylabel << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % std::size(kColors)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < series[s].x.size(); ++k) {
      out << px(series[s].x[k]) << ',' << py(series[s].y[k]) << ' ';
    }
    out << "\"/>\n";
    out << "<text x=\"" << W - R - 4 << "\" y=\"" << Tp + 14 * (s + 1)
        << "\" text-anchor=\"end\" fill=\"" << color << "\">" << series[s].name << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace flowprint
