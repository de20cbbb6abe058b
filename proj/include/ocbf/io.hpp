#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "ocbf/metrics.hpp"
#include "ocbf/simulator.hpp"

namespace ocbf {

// Shortest round-tripping decimal form; "nan"/"inf" spelled out.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0.0 ? "inf" : "-inf";
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double out = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  const auto res = std::from_chars(first, last, out);
  if (res.ec != std::errc{} || res.ptr != last) {
    throw std::runtime_error("not a number: '" + s + "'");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Key-value configuration: [section] headers, `key = value` lines, # or ;
// comments. Sections and keys are kept sorted so serialization is canonical.
// ---------------------------------------------------------------------------

using ConfigMap = std::map<std::string, std::map<std::string, std::string>>;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

inline ConfigMap parse_config_text(const std::string& text) {
  ConfigMap out;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) {
        throw std::runtime_error("config line " + std::to_string(lineno) +
                                 ": malformed section header");
      }
      section = detail::trim(t.substr(1, t.size() - 2));
      out[section];
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos || section.empty()) {
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": expected `key = value` inside a section");
    }
    const std::string key = detail::trim(t.substr(0, eq));
    if (key.empty()) {
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": empty key");
    }
    out[section][key] = detail::trim(t.substr(eq + 1));
  }
  return out;
}

inline std::string write_config_text(const ConfigMap& m) {
  std::ostringstream out;
  bool first = true;
  for (const auto& [section, kv] : m) {
    if (!first) out << "\n";
    first = false;
    out << "[" << section << "]\n";
    for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
  }
  return out.str();
}

inline ConfigMap load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

// ---------------------------------------------------------------------------
// SimConfig <-> ConfigMap. Scripted arrivals are an in-process testing hook
// and deliberately have no file representation.
// ---------------------------------------------------------------------------

inline ConfigMap sim_config_to_map(const SimConfig& c) {
  ConfigMap m;
  auto& run = m["run"];
  run["mode"] = c.mode == ControlMode::kTimeDriven ? "time" : "event";
  run["alpha"] = format_double(c.alpha);
  if (c.beta_override) run["beta"] = format_double(*c.beta_override);
  run["dt"] = format_double(c.dt);
  run["sensor_hz"] = std::to_string(c.sensor_hz);
  run["audit_hz"] = std::to_string(c.audit_hz);
  run["cav_count"] = std::to_string(c.cav_count);
  run["seed"] = std::to_string(c.rng_seed);
  run["min_mode"] = c.min_mode == MinMode::kComponentwise ? "component" : "joint";
  run["clf_enabled"] = c.clf_enabled ? "true" : "false";
  run["resolve_on_notify"] = c.resolve_on_notify ? "true" : "false";
  run["event_horizon"] = format_double(c.event_horizon);
  run["max_time"] = format_double(c.max_time);
  run["record_traces"] = c.record_traces ? "true" : "false";
  auto& bounds = m["bounds"];
  bounds["s_x"] = format_double(c.s.s_x);
  bounds["s_v"] = format_double(c.s.s_v);
  auto& arr = m["arrivals"];
  arr["rate"] = format_double(c.arrival_rate);
  arr["v0_min"] = format_double(c.v0_min);
  arr["v0_max"] = format_double(c.v0_max);
  auto& noise = m["noise"];
  const NoiseConfig nc = c.noise.value_or(NoiseConfig{});
  noise["enabled"] = c.noise ? "true" : "false";
  noise["w1_lo"] = format_double(nc.w1_lo);
  noise["w1_hi"] = format_double(nc.w1_hi);
  noise["w2_lo"] = format_double(nc.w2_lo);
  noise["w2_hi"] = format_double(nc.w2_hi);
  m["geometry"]["cz_length"] = format_double(c.geometry.cz_length);
  auto& cp = m["constraints"];
  cp["phi"] = format_double(c.params.phi);
  cp["delta"] = format_double(c.params.delta);
  cp["v_min"] = format_double(c.params.v_min);
  cp["v_max"] = format_double(c.params.v_max);
  cp["u_min"] = format_double(c.params.u_min);
  cp["u_max"] = format_double(c.params.u_max);
  cp["k1"] = format_double(c.params.k1);
  cp["k2"] = format_double(c.params.k2);
  cp["k3"] = format_double(c.params.k3);
  cp["k4"] = format_double(c.params.k4);
  cp["eps"] = format_double(c.params.eps);
  cp["lambda"] = format_double(c.params.lambda);
  auto& fp = m["fuel"];
  fp["w0"] = format_double(c.fuel.w0);
  fp["w1"] = format_double(c.fuel.w1);
  fp["w2"] = format_double(c.fuel.w2);
  fp["w3"] = format_double(c.fuel.w3);
  fp["r0"] = format_double(c.fuel.r0);
  fp["r1"] = format_double(c.fuel.r1);
  fp["r2"] = format_double(c.fuel.r2);
  return m;
}

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::runtime_error("config: bad boolean for " + key + ": '" + v + "'");
}

inline int parse_int(const std::string& key, const std::string& v) {
  const double d = parse_double(v);
  const int i = static_cast<int>(d);
  if (d != static_cast<double>(i)) {
    throw std::runtime_error("config: expected integer for " + key);
  }
  return i;
}

}  // namespace detail

inline SimConfig to_sim_config(const ConfigMap& m) {
  SimConfig c;
  bool noise_enabled = false;
  NoiseConfig nc;
  for (const auto& [section, kv] : m) {
    for (const auto& [key, v] : kv) {
      const std::string full = section + "." + key;
      auto bad = [&full]() {
        throw std::runtime_error("config: unknown key " + full);
      };
      if (section == "run") {
        if (key == "mode") {
          if (v == "time") {
            c.mode = ControlMode::kTimeDriven;
          } else if (v == "event") {
            c.mode = ControlMode::kEventTriggered;
          } else {
            throw std::runtime_error("config: run.mode must be time or event");
          }
        } else if (key == "alpha") {
          c.alpha = parse_double(v);
        } else if (key == "beta") {
          c.beta_override = parse_double(v);
        } else if (key == "dt") {
          c.dt = parse_double(v);
        } else if (key == "sensor_hz") {
          c.sensor_hz = detail::parse_int(full, v);
        } else if (key == "audit_hz") {
          c.audit_hz = detail::parse_int(full, v);
        } else if (key == "cav_count") {
          c.cav_count = detail::parse_int(full, v);
        } else if (key == "seed") {
          c.rng_seed = static_cast<std::uint64_t>(parse_double(v));
        } else if (key == "min_mode") {
          if (v == "component") {
            c.min_mode = MinMode::kComponentwise;
          } else if (v == "joint") {
            c.min_mode = MinMode::kJoint;
          } else {
            throw std::runtime_error("config: run.min_mode must be component or joint");
          }
        } else if (key == "clf_enabled") {
          c.clf_enabled = detail::parse_bool(full, v);
        } else if (key == "resolve_on_notify") {
          c.resolve_on_notify = detail::parse_bool(full, v);
        } else if (key == "event_horizon") {
          c.event_horizon = parse_double(v);
        } else if (key == "max_time") {
          c.max_time = parse_double(v);
        } else if (key == "record_traces") {
          c.record_traces = detail::parse_bool(full, v);
        } else {
          bad();
        }
      } else if (section == "bounds") {
        if (key == "s_x") {
          c.s.s_x = parse_double(v);
        } else if (key == "s_v") {
          c.s.s_v = parse_double(v);
        } else {
          bad();
        }
      } else if (section == "arrivals") {
        if (key == "rate") {
          c.arrival_rate = parse_double(v);
        } else if (key == "v0_min") {
          c.v0_min = parse_double(v);
        } else if (key == "v0_max") {
          c.v0_max = parse_double(v);
        } else {
          bad();
        }
      } else if (section == "noise") {
        if (key == "enabled") {
          noise_enabled = detail::parse_bool(full, v);
        } else if (key == "w1_lo") {
          nc.w1_lo = parse_double(v);
        } else if (key == "w1_hi") {
          nc.w1_hi = parse_double(v);
        } else if (key == "w2_lo") {
          nc.w2_lo = parse_double(v);
        } else if (key == "w2_hi") {
          nc.w2_hi = parse_double(v);
        } else {
          bad();
        }
      } else if (section == "geometry") {
        if (key == "cz_length") {
          c.geometry.cz_length = parse_double(v);
        } else {
          bad();
        }
      } else if (section == "constraints") {
        if (key == "phi") {
          c.params.phi = parse_double(v);
        } else if (key == "delta") {
          c.params.delta = parse_double(v);
        } else if (key == "v_min") {
          c.params.v_min = parse_double(v);
        } else if (key == "v_max") {
          c.params.v_max = parse_double(v);
        } else if (key == "u_min") {
          c.params.u_min = parse_double(v);
        } else if (key == "u_max") {
          c.params.u_max = parse_double(v);
        } else if (key == "k1") {
          c.params.k1 = parse_double(v);
        } else if (key == "k2") {
          c.params.k2 = parse_double(v);
        } else if (key == "k3") {
          c.params.k3 = parse_double(v);
        } else if (key == "k4") {
          c.params.k4 = parse_double(v);
        } else if (key == "eps") {
          c.params.eps = parse_double(v);
        } else if (key == "lambda") {
          c.params.lambda = parse_double(v);
        } else {
          bad();
        }
      } else if (section == "fuel") {
        if (key == "w0") {
          c.fuel.w0 = parse_double(v);
        } else if (key == "w1") {
          c.fuel.w1 = parse_double(v);
        } else if (key == "w2") {
          c.fuel.w2 = parse_double(v);
        } else if (key == "w3") {
          c.fuel.w3 = parse_double(v);
        } else if (key == "r0") {
          c.fuel.r0 = parse_double(v);
        } else if (key == "r1") {
          c.fuel.r1 = parse_double(v);
        } else if (key == "r2") {
          c.fuel.r2 = parse_double(v);
        } else {
          bad();
        }
      } else {
        throw std::runtime_error("config: unknown section [" + section + "]");
      }
    }
  }
  if (noise_enabled) c.noise = nc;
  return c;
}

// ---------------------------------------------------------------------------
// Trace files: one row per control update plus a closing row at exit.
// ---------------------------------------------------------------------------

inline constexpr const char* kTraceHeader = "t,id,x,v,u,b1,b2,b3,b4,status";

inline void write_traces(std::ostream& out, const std::vector<TraceSample>& ts) {
  out << kTraceHeader << "\n";
  for (const auto& s : ts) {
    out << format_double(s.t) << ',' << s.id << ',' << format_double(s.x) << ','
        << format_double(s.v) << ',' << format_double(s.u) << ','
        << format_double(s.b1) << ',' << format_double(s.b2) << ','
        << format_double(s.b3) << ',' << format_double(s.b4) << ','
        << (s.status == QpStatus::kOptimal ? "optimal" : "infeasible") << "\n";
  }
}

inline std::vector<TraceSample> read_traces(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kTraceHeader) {
    throw std::runtime_error("trace file: bad or missing header");
  }
  std::vector<TraceSample> out;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> f;
    std::string cell;
    std::istringstream row(line);
    while (std::getline(row, cell, ',')) f.push_back(cell);
    if (f.size() != 10) throw std::runtime_error("trace file: bad row: " + line);
    TraceSample s;
    s.t = parse_double(f[0]);
    s.id = detail::parse_int("trace.id", f[1]);
    s.x = parse_double(f[2]);
    s.v = parse_double(f[3]);
    s.u = parse_double(f[4]);
    s.b1 = parse_double(f[5]);
    s.b2 = parse_double(f[6]);
    s.b3 = parse_double(f[7]);
    s.b4 = parse_double(f[8]);
    if (f[9] == "optimal") {
      s.status = QpStatus::kOptimal;
    } else if (f[9] == "infeasible") {
      s.status = QpStatus::kInfeasible;
    } else {
      throw std::runtime_error("trace file: bad status: " + f[9]);
    }
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Summaries: one row per run, written as delimited text and as JSON.
// ---------------------------------------------------------------------------

struct RunSummaryRow {
  int run = 0;
  std::uint64_t seed = 0;
  ControlMode mode = ControlMode::kTimeDriven;
  RunMetrics m;
  std::uint64_t deferrals = 0;
  std::uint64_t clamp_events = 0;
};

inline RunSummaryRow make_summary_row(int run, const SimConfig& cfg,
                                      const RunResult& r) {
  RunSummaryRow row;
  row.run = run;
  row.seed = cfg.rng_seed;
  row.mode = cfg.mode;
  row.m = r.metrics;
  row.deferrals = r.deferrals;
  row.clamp_events = r.clamp_events;
  return row;
}

inline constexpr const char* kSummaryHeader =
    "run,seed,mode,cavs,avg_travel_time,avg_half_u2,avg_fuel,avg_objective,"
    "min_b1,min_b2,qp_solved,qp_infeasible,messages,deferrals,clamp_events";

inline void write_summary_csv(std::ostream& out,
                              const std::vector<RunSummaryRow>& rows) {
  out << kSummaryHeader << "\n";
  for (const auto& r : rows) {
    out << r.run << ',' << r.seed << ','
        << (r.mode == ControlMode::kTimeDriven ? "time" : "event") << ','
        << r.m.cav_count << ',' << format_double(r.m.avg_travel_time) << ','
        << format_double(r.m.avg_half_u2) << ',' << format_double(r.m.avg_fuel)
        << ',' << format_double(r.m.avg_objective) << ','
        << format_double(r.m.min_b1) << ',' << format_double(r.m.min_b2) << ','
        << r.m.qp_solved << ',' << r.m.qp_infeasible << ',' << r.m.messages
        << ',' << r.deferrals << ',' << r.clamp_events << "\n";
  }
}

namespace detail {

inline nlohmann::json json_num(double x) {
  if (std::isfinite(x)) return x;
  return nullptr;  // JSON has no inf/nan
}

}  // namespace detail

inline nlohmann::json summary_json(const std::vector<RunSummaryRow>& rows) {
  nlohmann::json j;
  j["runs"] = nlohmann::json::array();
  std::map<std::string, std::vector<const RunSummaryRow*>> by_mode;
  for (const auto& r : rows) {
    nlohmann::json e;
    e["run"] = r.run;
    e["seed"] = r.seed;
    const std::string mode = r.mode == ControlMode::kTimeDriven ? "time" : "event";
    e["mode"] = mode;
    e["cavs"] = r.m.cav_count;
    e["avg_travel_time"] = detail::json_num(r.m.avg_travel_time);
    e["avg_half_u2"] = detail::json_num(r.m.avg_half_u2);
    e["avg_fuel"] = detail::json_num(r.m.avg_fuel);
    e["avg_objective"] = detail::json_num(r.m.avg_objective);
    e["min_b1"] = detail::json_num(r.m.min_b1);
    e["min_b2"] = detail::json_num(r.m.min_b2);
    e["qp_solved"] = r.m.qp_solved;
    e["qp_infeasible"] = r.m.qp_infeasible;
    e["messages"] = r.m.messages;
    e["deferrals"] = r.deferrals;
    e["clamp_events"] = r.clamp_events;
    j["runs"].push_back(e);
    by_mode[mode].push_back(&r);
  }
  j["aggregate"] = nlohmann::json::object();
  for (const auto& [mode, rs] : by_mode) {
    double tt = 0.0, fuel = 0.0, hu2 = 0.0, obj = 0.0;
    std::uint64_t qs = 0, qi = 0, msg = 0;
    for (const auto* r : rs) {
      tt += r->m.avg_travel_time;
      fuel += r->m.avg_fuel;
      hu2 += r->m.avg_half_u2;
      obj += r->m.avg_objective;
      qs += r->m.qp_solved;
      qi += r->m.qp_infeasible;
      msg += r->m.messages;
    }
    const double n = static_cast<double>(rs.size());
    nlohmann::json a;
    a["runs"] = rs.size();
    a["mean_travel_time"] = tt / n;
    a["mean_half_u2"] = hu2 / n;
    a["mean_fuel"] = fuel / n;
    a["mean_objective"] = obj / n;
    a["total_qp_solved"] = qs;
    a["total_qp_infeasible"] = qi;
    a["total_messages"] = msg;
    j["aggregate"][mode] = a;
  }
  return j;
}

// Paired time/event report in the style of a computation-load table. Energy
// and fuel are both printed and left unordered on purpose: the two metrics
// can rank the modes differently.
inline void write_comparison(
    std::ostream& out,
    const std::vector<std::pair<RunSummaryRow, RunSummaryRow>>& pairs) {
  out << "paired runs: time-driven vs event-triggered\n";
  out << "seed  qp_time qp_event load%  inf_time inf_event  tt_time  tt_event "
         " fuel_time fuel_event  halfu2_time halfu2_event  msgs_event\n";
  std::uint64_t qs_t = 0, qs_e = 0, qi_t = 0, qi_e = 0;
  for (const auto& [td, ev] : pairs) {
    qs_t += td.m.qp_solved;
    qs_e += ev.m.qp_solved;
    qi_t += td.m.qp_infeasible;
    qi_e += ev.m.qp_infeasible;
    const double load = td.m.qp_solved == 0
                            ? 0.0
                            : 100.0 * static_cast<double>(ev.m.qp_solved) /
                                  static_cast<double>(td.m.qp_solved);
    out << td.seed << "  " << td.m.qp_solved << " " << ev.m.qp_solved << " "
        << format_double(load) << "  " << td.m.qp_infeasible << " "
        << ev.m.qp_infeasible << "  " << format_double(td.m.avg_travel_time)
        << " " << format_double(ev.m.avg_travel_time) << "  "
        << format_double(td.m.avg_fuel) << " " << format_double(ev.m.avg_fuel)
        << "  " << format_double(td.m.avg_half_u2) << " "
        << format_double(ev.m.avg_half_u2) << "  " << ev.m.messages << "\n";
  }
  if (!pairs.empty() && qs_t > 0) {
    out << "total QP load (event/time): "
        << format_double(100.0 * static_cast<double>(qs_e) /
                         static_cast<double>(qs_t))
        << "%\n";
    out << "total infeasible cases: time " << qi_t << ", event " << qi_e << "\n";
  }
}

}  // namespace ocbf
