#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ocbf/cli.hpp"
#include "ocbf/io.hpp"
#include "ocbf/metrics.hpp"
#include "ocbf/simulator.hpp"

using namespace ocbf;
namespace fs = std::filesystem;

namespace {

TEST(FuelModel, CruisePolynomialExamples) {
  FuelParams fp;
  EXPECT_NEAR(fuel_rate(0.0, 0.0, fp), 0.1569, 1e-12);
  // 0.1569 + 0.49 - 0.2966 + 0.478 at 20 m/s.
  EXPECT_NEAR(fuel_rate(20.0, 0.0, fp), 0.8283, 1e-4);
  // Deceleration adds nothing.
  EXPECT_EQ(fuel_rate(20.0, -3.0, fp), fuel_rate(20.0, 0.0, fp));
  // Acceleration adds the affine term.
  const double accel = (0.07224 + 0.09681 * 20.0 + 0.001075 * 400.0) * 2.0;
  EXPECT_NEAR(fuel_rate(20.0, 2.0, fp), fuel_rate(20.0, 0.0, fp) + accel, 1e-12);
}

TEST(Objective, ConvexCombinationExamples) {
  ConstraintParams p;
  EXPECT_EQ(objective_value(25.0, 0.0, 0.0, p), 0.0);
  // 0.25 * 15.44 + 0.75 * 13.34 / (0.5 * 5.886^2).
  EXPECT_NEAR(objective_value(15.44, 13.34, 0.25, p), 4.4376, 1e-3);
  EXPECT_THROW(objective_value(10.0, 1.0, 1.0, p), std::domain_error);
  EXPECT_THROW(objective_value(10.0, 1.0, -0.1, p), std::domain_error);
  // Near alpha = 1 the travel-time term dominates.
  const double hi = objective_value(100.0, 1.0, 0.999, p);
  EXPECT_NEAR(hi, 0.999 * 100.0, 0.01);
}

TEST(Aggregate, PerVehicleMeansAndWorstMargins) {
  ConstraintParams p;
  std::vector<CavRunRecord> recs(2);
  recs[0] = {1, Lane::kMain, 0.0, 20.0, 0.0, 16.5, 3.0, 5.0};
  recs[1] = {2, Lane::kMerge, 4.0, 30.0, 2.0, 17.1, 1.5, 0.25};
  const auto m = aggregate(recs, 0.25, p);
  EXPECT_EQ(m.cav_count, 2);
  EXPECT_NEAR(m.avg_travel_time, 0.5 * (20.0 + 26.0), 1e-12);
  EXPECT_NEAR(m.avg_half_u2, 1.0, 1e-12);
  EXPECT_NEAR(m.avg_fuel, 16.8, 1e-12);
  EXPECT_EQ(m.min_b1, 1.5);
  EXPECT_EQ(m.min_b2, 0.25);
  const double want_obj = 0.5 * (objective_value(20.0, 0.0, 0.25, p) +
                                 objective_value(26.0, 2.0, 0.25, p));
  EXPECT_NEAR(m.avg_objective, want_obj, 1e-12);

  EXPECT_THROW(aggregate({}, 0.25, p), std::invalid_argument);
}

TEST(Doubles, ShortestFormRoundTrips) {
  for (double x : {0.0, -0.0, 1.0, -5.886, 0.1, 1e-300, 3.1415926535897931,
                   400.0, 1.7976931348623157e308}) {
    EXPECT_EQ(parse_double(format_double(x)), x);
  }
  EXPECT_TRUE(std::isnan(parse_double("nan")));
  EXPECT_EQ(parse_double("inf"), std::numeric_limits<double>::infinity());
  EXPECT_EQ(parse_double("-inf"), -std::numeric_limits<double>::infinity());
  EXPECT_THROW(parse_double("12x"), std::runtime_error);
  EXPECT_THROW(parse_double(""), std::runtime_error);
}

TEST(ConfigText, ParsesSectionsCommentsAndWhitespace) {
  const auto m = parse_config_text(
      "# top comment\n[run]\n  mode = event \n; another\ndt=0.05\n\n"
      "[bounds]\ns_x = 2\n");
  ASSERT_TRUE(m.count("run"));
  EXPECT_EQ(m.at("run").at("mode"), "event");
  EXPECT_EQ(m.at("run").at("dt"), "0.05");
  EXPECT_EQ(m.at("bounds").at("s_x"), "2");

  EXPECT_THROW(parse_config_text("key = 1\n"), std::runtime_error);  // no section
  EXPECT_THROW(parse_config_text("[run\nx = 1\n"), std::runtime_error);
  EXPECT_THROW(parse_config_text("[run]\n= 1\n"), std::runtime_error);
}

TEST(ConfigText, RoundTripsThroughSerialization) {
  SimConfig c;
  c.mode = ControlMode::kEventTriggered;
  c.alpha = 0.4;
  c.beta_override = 5.0;
  c.dt = 0.1;
  c.s = {1.5, 0.25};
  c.arrival_rate = 0.3;
  c.noise = NoiseConfig{-1.0, 1.0, -0.1, 0.1};
  c.cav_count = 12;
  c.rng_seed = 99;
  c.min_mode = MinMode::kJoint;
  c.resolve_on_notify = false;
  c.params.phi = 1.7;
  c.fuel.w0 = 0.2;

  const std::string text = write_config_text(sim_config_to_map(c));
  const SimConfig back = to_sim_config(parse_config_text(text));
  EXPECT_EQ(write_config_text(sim_config_to_map(back)), text);
  EXPECT_EQ(back.mode, ControlMode::kEventTriggered);
  ASSERT_TRUE(back.beta_override.has_value());
  EXPECT_EQ(*back.beta_override, 5.0);
  ASSERT_TRUE(back.noise.has_value());
  EXPECT_EQ(back.noise->w2_hi, 0.1);
  EXPECT_EQ(back.s.s_x, 1.5);
  EXPECT_EQ(back.min_mode, MinMode::kJoint);
  EXPECT_FALSE(back.resolve_on_notify);
  EXPECT_EQ(back.params.phi, 1.7);
  EXPECT_EQ(back.fuel.w0, 0.2);

  // A default config also survives, with no beta key and noise disabled.
  const SimConfig d;
  const auto dm = sim_config_to_map(d);
  EXPECT_EQ(dm.at("run").count("beta"), 0u);
  EXPECT_EQ(dm.at("noise").at("enabled"), "false");
  const SimConfig dback = to_sim_config(parse_config_text(write_config_text(dm)));
  EXPECT_FALSE(dback.beta_override.has_value());
  EXPECT_FALSE(dback.noise.has_value());
}

TEST(ConfigText, RejectsUnknownKeysAndSections) {
  EXPECT_THROW(to_sim_config(parse_config_text("[run]\nmystery = 1\n")),
               std::runtime_error);
  EXPECT_THROW(to_sim_config(parse_config_text("[nope]\nx = 1\n")),
               std::runtime_error);
  EXPECT_THROW(to_sim_config(parse_config_text("[run]\nmode = sometimes\n")),
               std::runtime_error);
  EXPECT_THROW(to_sim_config(parse_config_text("[run]\ncav_count = 2.5\n")),
               std::runtime_error);
}

TEST(Traces, WriteReadRoundTripIsExact) {
  std::vector<TraceSample> ts(3);
  ts[0] = {0.05, 1, 0.9000000000000001, 18.0, -1.25, 14.0, 22.5, 12.0, 18.0,
           QpStatus::kOptimal};
  ts[1] = {0.1, 2, 1.8, 17.5, 0.0,
           std::numeric_limits<double>::quiet_NaN(),
           std::numeric_limits<double>::quiet_NaN(), 12.5, 17.5,
           QpStatus::kInfeasible};
  ts[2] = {0.15, 1, 2.7, 18.1, 4.905, 13.9, 22.4, 11.9, 18.1,
           QpStatus::kOptimal};

  std::stringstream ss;
  write_traces(ss, ts);
  const auto back = read_traces(ss);
  ASSERT_EQ(back.size(), ts.size());
  for (size_t i = 0; i < ts.size(); ++i) {
    EXPECT_EQ(back[i].t, ts[i].t);
    EXPECT_EQ(back[i].id, ts[i].id);
    EXPECT_EQ(back[i].x, ts[i].x);
    EXPECT_EQ(back[i].v, ts[i].v);
    EXPECT_EQ(back[i].u, ts[i].u);
    EXPECT_EQ(std::isnan(back[i].b1), std::isnan(ts[i].b1));
    if (!std::isnan(ts[i].b1)) EXPECT_EQ(back[i].b1, ts[i].b1);
    EXPECT_EQ(back[i].b3, ts[i].b3);
    EXPECT_EQ(back[i].status, ts[i].status);
  }

  std::stringstream bad("not,a,header\n");
  EXPECT_THROW(read_traces(bad), std::runtime_error);
  std::stringstream short_row(std::string(kTraceHeader) + "\n1,2,3\n");
  EXPECT_THROW(read_traces(short_row), std::runtime_error);
}

TEST(Summary, CsvAndJsonCarryEveryRun) {
  RunSummaryRow a;
  a.run = 0;
  a.seed = 7;
  a.mode = ControlMode::kTimeDriven;
  a.m.cav_count = 3;
  a.m.avg_travel_time = 21.5;
  a.m.qp_solved = 1200;
  RunSummaryRow b = a;
  b.mode = ControlMode::kEventTriggered;
  b.m.qp_solved = 400;

  std::ostringstream csv;
  write_summary_csv(csv, {a, b});
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, kSummaryHeader);
  int rows = 0;
  while (std::getline(lines, line)) {
    if (!line.empty()) ++rows;
  }
  EXPECT_EQ(rows, 2);

  const auto j = summary_json({a, b});
  ASSERT_EQ(j.at("runs").size(), 2u);
  EXPECT_EQ(j.at("runs")[0].at("mode"), "time");
  EXPECT_EQ(j.at("runs")[1].at("mode"), "event");
  EXPECT_EQ(j.at("aggregate").at("time").at("total_qp_solved"), 1200);
  EXPECT_EQ(j.at("aggregate").at("event").at("total_qp_solved"), 400);
  // min_b1 defaults to +inf, which JSON spells as null.
  EXPECT_TRUE(j.at("runs")[0].at("min_b1").is_null());

  std::ostringstream cmp;
  write_comparison(cmp, {{a, b}});
  const std::string s = cmp.str();
  EXPECT_NE(s.find("total QP load"), std::string::npos);
  EXPECT_NE(s.find("33.3"), std::string::npos);  // 400/1200
}

// The numbers in a summary must be recomputable from the published traces:
// travel times exactly, the energy integral from the zero-order-hold record.
TEST(Summary, RecomputableFromTraces) {
  SimConfig cfg;
  cfg.mode = ControlMode::kTimeDriven;
  cfg.scripted_arrivals = {{0.0, Lane::kMain, 18.0}, {3.0, Lane::kMerge, 16.0}};
  cfg.cav_count = 2;
  const auto r = run_simulation(cfg);
  ASSERT_EQ(r.records.size(), 2u);
  ASSERT_EQ(r.clamp_events, 0u);
  ASSERT_TRUE(r.all_qps_optimal);

  for (const auto& rec : r.records) {
    double first_t = -1.0, last_t = 0.0, half_u2 = 0.0;
    double prev_t = 0.0, prev_u = 0.0;
    bool seen = false;
    for (const auto& s : r.traces) {
      if (s.id != rec.id) continue;
      if (!seen) {
        first_t = s.t;
        seen = true;
      } else {
        half_u2 += 0.5 * prev_u * prev_u * (s.t - prev_t);
      }
      prev_t = s.t;
      prev_u = s.u;
      last_t = s.t;
    }
    ASSERT_TRUE(seen);
    EXPECT_NEAR(first_t, rec.t0, 1e-9);
    EXPECT_NEAR(last_t, rec.tf, 1e-9);
    const double scale = std::max(rec.half_u2_integral, 1.0);
    EXPECT_NEAR(half_u2, rec.half_u2_integral, 1e-6 * scale);
  }
  // Counters reported by the run match the trace rows exactly.
  std::uint64_t infeasible_rows = 0;
  for (const auto& s : r.traces) {
    if (s.status == QpStatus::kInfeasible) ++infeasible_rows;
  }
  EXPECT_EQ(infeasible_rows, 0u);
  EXPECT_EQ(r.metrics.qp_infeasible, 0u);
}

class CliDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ocbf_cli_" + std::to_string(::testing::UnitTest::GetInstance()
                                             ->random_seed()) +
            "_" + std::to_string(counter_++));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write_config(const std::string& body) {
    const auto path = dir_ / "run.cfg";
    std::ofstream out(path);
    out << body;
    return path.string();
  }

  int run_cli(std::vector<std::string> args) {
    std::vector<const char*> argv{"ocbf_sim"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli_main(static_cast<int>(argv.size()), argv.data());
  }

  fs::path dir_;
  static int counter_;
};
int CliDir::counter_ = 0;

TEST_F(CliDir, PairedRunsProduceAllArtifacts) {
  const auto cfg = write_config(
      "[run]\ncav_count = 3\n[arrivals]\nrate = 0.5\n");
  const auto out = (dir_ / "out").string();
  ASSERT_EQ(run_cli({"-c", cfg, "--mode", "both", "--runs", "2", "--seed", "5",
                     "--out", out}),
            0);
  EXPECT_TRUE(fs::exists(fs::path(out) / "summary.csv"));
  EXPECT_TRUE(fs::exists(fs::path(out) / "summary.json"));
  EXPECT_TRUE(fs::exists(fs::path(out) / "comparison.txt"));
  EXPECT_TRUE(fs::exists(fs::path(out) / "trace_time_000.csv"));
  EXPECT_TRUE(fs::exists(fs::path(out) / "trace_event_001.csv"));

  // Traces parse back and the summary carries 4 rows (2 runs x 2 modes).
  std::ifstream tr(fs::path(out) / "trace_time_000.csv");
  EXPECT_GT(read_traces(tr).size(), 10u);
  std::ifstream sj(fs::path(out) / "summary.json");
  const auto j = nlohmann::json::parse(sj);
  EXPECT_EQ(j.at("runs").size(), 4u);
}

TEST_F(CliDir, MissingConfigFlagFails) {
  EXPECT_NE(run_cli({"--mode", "time"}), 0);
}

TEST_F(CliDir, BadConfigContentsFail) {
  const auto cfg = write_config("[run]\nmystery = 1\n");
  EXPECT_EQ(run_cli({"-c", cfg, "--out", (dir_ / "o1").string()}), 1);
  const auto cfg2 = write_config("[run]\ndt = -1\n");
  EXPECT_EQ(run_cli({"-c", cfg2, "--out", (dir_ / "o2").string()}), 1);
  EXPECT_EQ(run_cli({"-c", (dir_ / "absent.cfg").string(),
                     "--out", (dir_ / "o3").string()}),
            1);
}

TEST_F(CliDir, AbortedRunWritesNoSummary) {
  // The watchdog fires long before the three CAVs can finish.
  const auto cfg = write_config(
      "[run]\ncav_count = 3\nmax_time = 1\n[arrivals]\nrate = 0.5\n");
  const auto out = (dir_ / "out").string();
  EXPECT_EQ(run_cli({"-c", cfg, "--mode", "time", "--out", out}), 2);
  EXPECT_FALSE(fs::exists(fs::path(out) / "summary.csv"));
}

}  // namespace
