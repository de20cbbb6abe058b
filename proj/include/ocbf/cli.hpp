#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "ocbf/io.hpp"
#include "ocbf/simulator.hpp"

namespace ocbf {

inline std::string default_out_dir() {
  if (const char* env = std::getenv("OCBF_OUT_DIR")) return env;
  return "out";
}

namespace detail {

inline std::string trace_file_name(ControlMode mode, int run) {
  std::ostringstream name;
  name << "trace_" << (mode == ControlMode::kTimeDriven ? "time" : "event")
       << "_" << std::setfill('0') << std::setw(3) << run << ".csv";
  return name.str();
}

}  // namespace detail

// Exit status: 0 success, 1 usage/config problem, 2 failed run. A failed run
// leaves no summary behind — partial batches are not reported.
inline int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Merging control zone simulation: time-driven vs event-triggered "
               "barrier-constrained tracking"};
  std::string config_path;
  std::string mode_flag;
  std::optional<double> alpha, s_x, s_v;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> min_mode;
  int runs = 1;
  bool noise = false;
  std::string out_dir = default_out_dir();

  app.add_option("-c,--config", config_path, "run configuration file")->required();
  app.add_option("--mode", mode_flag, "time | event | both (default: config value)")
      ->check(CLI::IsMember({"time", "event", "both"}));
  app.add_option("--alpha", alpha, "time/energy weight in [0,1)");
  app.add_option("--s-x", s_x, "position trigger half-width [m]");
  app.add_option("--s-v", s_v, "speed trigger half-width [m/s]");
  app.add_option("--seed", seed, "base RNG seed (run i uses seed+i)");
  app.add_option("--runs", runs, "number of seeded runs")->check(CLI::PositiveNumber);
  app.add_flag("--noise", noise, "enable plant disturbances");
  app.add_option("--min-mode", min_mode, "component | joint box minimization")
      ->check(CLI::IsMember({"component", "joint"}));
  app.add_option("--out", out_dir, "output directory (env OCBF_OUT_DIR)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() != 0) std::cerr << app.help() << "\n";
    return app.exit(e);
  }

  SimConfig base;
  try {
    base = to_sim_config(load_config_file(config_path));
  } catch (const std::exception& ex) {
    std::cerr << "config error: " << ex.what() << "\n";
    return 1;
  }
  if (alpha) base.alpha = *alpha;
  if (s_x) base.s.s_x = *s_x;
  if (s_v) base.s.s_v = *s_v;
  if (seed) base.rng_seed = *seed;
  if (noise && !base.noise) base.noise = NoiseConfig{};
  if (min_mode) {
    base.min_mode = *min_mode == "joint" ? MinMode::kJoint : MinMode::kComponentwise;
  }
  try {
    validate(base);
  } catch (const std::exception& ex) {
    std::cerr << "config error: " << ex.what() << "\n";
    return 1;
  }

  std::vector<ControlMode> modes;
  const std::string m =
      mode_flag.empty()
          ? (base.mode == ControlMode::kTimeDriven ? "time" : "event")
          : mode_flag;
  if (m == "both") {
    modes = {ControlMode::kTimeDriven, ControlMode::kEventTriggered};
  } else {
    modes = {m == "time" ? ControlMode::kTimeDriven : ControlMode::kEventTriggered};
  }

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    std::cerr << "cannot create output directory " << out_dir << ": "
              << ec.message() << "\n";
    return 1;
  }

  std::vector<RunSummaryRow> rows;
  std::vector<std::pair<RunSummaryRow, RunSummaryRow>> pairs;
  try {
    for (int i = 0; i < runs; ++i) {
      std::optional<RunSummaryRow> time_row, event_row;
      for (const ControlMode mode : modes) {
        SimConfig cfg = base;
        cfg.mode = mode;
        cfg.rng_seed = base.rng_seed + static_cast<std::uint64_t>(i);
        const RunResult r = run_simulation(cfg);
        if (cfg.record_traces) {
          const fs::path p = fs::path(out_dir) / detail::trace_file_name(mode, i);
          std::ofstream tf(p);
          if (!tf) throw std::runtime_error("cannot write " + p.string());
          write_traces(tf, r.traces);
        }
        const RunSummaryRow row = make_summary_row(i, cfg, r);
        rows.push_back(row);
        (mode == ControlMode::kTimeDriven ? time_row : event_row) = row;
      }
      if (time_row && event_row) pairs.emplace_back(*time_row, *event_row);
    }
  } catch (const std::exception& ex) {
    std::cerr << "run failed: " << ex.what() << " (no summary written)\n";
    return 2;
  }

  {
    std::ofstream sc(fs::path(out_dir) / "summary.csv");
    write_summary_csv(sc, rows);
    std::ofstream sj(fs::path(out_dir) / "summary.json");
    sj << summary_json(rows).dump(2) << "\n";
  }
  if (!pairs.empty()) {
    std::ofstream cmp(fs::path(out_dir) / "comparison.txt");
    write_comparison(cmp, pairs);
  }
  std::cout << rows.size() << " run(s) written to " << out_dir << "\n";
  return 0;
}

}  // namespace ocbf
