#pragma once

// Command-line front end. Subcommands: limits, codebook, run, sweep, roc.
// Exit codes: 0 success, 1 invalid input, 2 runtime or audit failure.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "flowprint/codebook.hpp"
#include "flowprint/config.hpp"
#include "flowprint/error.hpp"
#include "flowprint/experiments.hpp"
#include "flowprint/limits.hpp"

namespace flowprint {

struct CliOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> trials;
  std::string out_dir;
  unsigned workers = 1;
  std::string format = "csv";
  // codebook
  std::string load_path;
  std::optional<std::int64_t> m;
  std::optional<double> rate;
  std::optional<double> t2;
};

namespace detail {

inline ScenarioConfig config_from(const CliOptions& o) {
  if (o.config_path.empty()) throw ConfigError("--config: missing required option");
  auto cfg = load_config(o.config_path);
  if (o.seed) cfg.seed = *o.seed;
  if (o.trials) cfg.trials = *o.trials;
  return cfg;
}

inline std::filesystem::path out_dir(const CliOptions& o) {
  std::filesystem::path dir = o.out_dir.empty() ? "." : o.out_dir;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + p.string());
  return f;
}

inline bool want_svg(const CliOptions& o) {
  if (o.format == "csv") return false;
  if (o.format == "csv+svg") return true;
  throw ConfigError("--format: expected csv or csv+svg");
}

inline void cmd_limits(const CliOptions& o, std::ostream& out) {
  auto cfg = config_from(o);
  cfg.resolve();
  const auto& p = cfg.plan;
  const auto& nl = cfg.limits;
  const double C = cfg.scenario == 3 ? nl.C_prime : (cfg.setting == 2 ? nl.C_dblprime : nl.C);
  const auto s1 = scenario1_flow_count(p.T, C, p.alpha);

  struct Row {
    const char* key;
    std::string value;
  };
  std::vector<Row> rows = {
      {"C", format_number(nl.C)},
      {"C_prime", format_number(nl.C_prime)},
      {"C_dblprime", format_number(nl.C_dblprime)},
      {"alpha", format_number(p.alpha)},
      {"alpha_prime", format_number(p.alpha_prime)},
      {"T", format_number(p.T)},
      {"T1", format_number(p.t1)},
      {"T2", format_number(p.t2)},
      {"delta", format_number(p.delta)},
      {"m", std::to_string(cfg.m)},
      {"M", std::to_string(cfg.M)},
      {"m_formula", format_number(s1.formula)},
      {"m_formula_floor", std::to_string(s1.formula_m)},
      {"m_scan", std::to_string(s1.scan_m)},
      {"pf1_bound", format_number(pf1_bound(cfg.epsilon, p.alpha))},
  };
  if (is_subset_scenario(cfg.scenario_enum())) {
    const auto s2 = max_flows_scenario2(p.T, C, cfg.M, cfg.epsilon, cfg.zeta);
    rows.push_back({"m_subset", std::to_string(s2.m)});
    rows.push_back({"m_subset_regime", s2.regime});
  }

  for (const auto& r : rows) {
    out << r.key << std::string(18 - std::string(r.key).size(), ' ') << r.value << '\n';
  }
  if (!s1.warning.empty()) out << "warning: " << s1.warning << '\n';
  out << '\n';
  std::string header, values;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    header += (i ? "," : "") + std::string(rows[i].key);
    values += (i ? "," : "") + rows[i].value;
  }
  out << header << '\n' << values << '\n';
  if (!o.out_dir.empty()) {
    auto f = open_out(out_dir(o) / "limits.csv");
    f << header << '\n' << values << '\n';
  }
}

inline void print_codebook_summary(const Codebook& cb, std::ostream& out) {
  std::size_t total = 0;
  for (const auto& fp : cb.fingerprints) total += fp.size();
  out << "m " << cb.size() << "\nrate " << format_number(cb.rate) << "\nT2 "
      << format_number(cb.t2) << "\nmean_count "
      << format_number(static_cast<double>(total) / static_cast<double>(cb.size())) << '\n';
}

inline void cmd_codebook(const CliOptions& o, std::ostream& out) {
  if (!o.load_path.empty()) {
    print_codebook_summary(load_codebook(o.load_path), out);
    return;
  }
  std::int64_t m = 0;
  double rate = 0.0;
  double t2 = 0.0;
  std::uint64_t seed = o.seed.value_or(1);
  if (!o.config_path.empty()) {
    auto cfg = config_from(o);
    cfg.resolve();
    m = static_cast<std::int64_t>(cfg.codebook_size);
    rate = cfg.lambda_min();
    t2 = cfg.plan.t2;
    seed = cfg.seed;
  }
  if (o.m) m = *o.m;
  if (o.rate) rate = *o.rate;
  if (o.t2) t2 = *o.t2;
  if (m < 1) throw ValidationError("m: codebook size must be >= 1");
  if (!(rate > 0.0)) throw ValidationError("rate: must be positive (give --config or --rate)");
  if (!(t2 > 0.0)) throw ValidationError("t2: must be positive (give --config or --t2)");
  const auto cb = generate_codebook(static_cast<std::size_t>(m), rate, t2, RngState{seed, 0});
  const auto dir = out_dir(o);
  save_codebook(cb, dir / "codebook.bin");
  {
    auto f = open_out(dir / "codebook.txt");
    export_codebook_text(cb, f);
  }
  print_codebook_summary(cb, out);
}

inline void emit_run(const CliOptions& o, const ScenarioConfig& cfg, const Metrics& m,
                     bool roc_files, std::ostream& out) {
  const auto dir = out_dir(o);
  {
    auto f = open_out(dir / "metrics.csv");
    write_metrics_header(f);
    write_metrics_rows(f, cfg.sweep_var, 0.0, m);
  }
  if (roc_files && !m.roc.empty()) {
    auto f = open_out(dir / "roc.csv");
    write_roc_csv(f, m);
    if (want_svg(o)) {
      Series s{"ROC", {}, {}};
      for (const auto& p : m.roc) {
        s.x.push_back(p.p_fa);
        s.y.push_back(1.0 - p.p_md);
      }
      Series diag{"chance", {0.0, 1.0}, {0.0, 1.0}};
      const Series both[] = {s, diag};
      auto g = open_out(dir / "roc.svg");
      write_svg_chart(g, "Willie ROC", "P_FA", "1 - P_MD", both);
    }
  }
  write_metrics_header(out);
  write_metrics_rows(out, cfg.sweep_var, 0.0, m);
}

inline void cmd_run(const CliOptions& o, std::ostream& out, bool roc) {
  auto cfg = config_from(o);
  want_svg(o);
  cfg.resolve();
  const auto m = run_scenario(cfg, o.workers);
  emit_run(o, cfg, m, roc || cfg.detect, out);
}

inline void cmd_sweep(const CliOptions& o, std::ostream& out) {
  auto cfg = config_from(o);
  const bool svg = want_svg(o);
  if (cfg.sweep_grid.empty()) throw ConfigError("sweep_grid: missing required key");
  const auto points = sweep(cfg, cfg.sweep_grid, o.workers);
  const auto dir = out_dir(o);
  auto f = open_out(dir / "metrics.csv");
  write_metrics_header(f);
  write_metrics_header(out);
  for (const auto& p : points) {
    write_metrics_rows(f, cfg.sweep_var, p.value, p.metrics);
    write_metrics_rows(out, cfg.sweep_var, p.value, p.metrics);
  }
  if (svg) {
    std::vector<Series> series;
    auto add = [&](const char* name, auto pick) {
      Series s{name, {}, {}};
      for (const auto& p : points) {
        const Estimate& e = pick(p.metrics);
        if (e.n == 0) continue;
        s.x.push_back(p.value);
        s.y.push_back(e.value());
      }
      if (!s.x.empty()) series.push_back(std::move(s));
    };
    add("P_f1", [](const Metrics& m) -> const Estimate& { return m.p_f1; });
    add("P_f2", [](const Metrics& m) -> const Estimate& { return m.p_f2; });
    add("P_f3", [](const Metrics& m) -> const Estimate& { return m.p_f3; });
    auto g = open_out(dir / "sweep.svg");
    write_svg_chart(g, "Failure probabilities", cfg.sweep_var, "probability", series);
  }
}

}  // namespace detail

/// Parse argv and dispatch; never throws.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Invisible flow fingerprinting laboratory"};
  app.require_subcommand(1);
  CliOptions o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "key=value experiment file");
    sub->add_option("--seed", o.seed, "override the master seed");
    sub->add_option("--trials", o.trials, "override the trial count");
    sub->add_option("--out", o.out_dir, "output directory");
    sub->add_option("--workers", o.workers, "worker threads (results do not depend on it)");
    sub->add_option("--format", o.format, "csv or csv+svg");
  };
  auto* limits = app.add_subcommand("limits", "closed-form limits for a configuration");
  auto* codebook = app.add_subcommand("codebook", "generate, save and summarize a codebook");
  auto* run = app.add_subcommand("run", "run one experiment");
  auto* sweep_cmd = app.add_subcommand("sweep", "run an experiment over sweep_grid");
  auto* roc = app.add_subcommand("roc", "run Willie's detector and write the ROC");
  for (auto* s : {limits, codebook, run, sweep_cmd, roc}) add_common(s);
  codebook->add_option("--load", o.load_path, "summarize an existing codebook file");
  codebook->add_option("--m", o.m, "number of codewords");
  codebook->add_option("--rate", o.rate, "codeword rate, packets/second");
  codebook->add_option("--t2", o.t2, "codeword horizon, seconds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (*limits) detail::cmd_limits(o, out);
    else if (*codebook) detail::cmd_codebook(o, out);
    else if (*run) detail::cmd_run(o, out, false);
    else if (*sweep_cmd) detail::cmd_sweep(o, out);
    else if (*roc) detail::cmd_run(o, out, true);
    return 0;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const InfeasiblePlanError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace flowprint
