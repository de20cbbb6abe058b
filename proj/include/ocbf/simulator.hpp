#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <stdexcept>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ocbf/cbf.hpp"
#include "ocbf/coordinator.hpp"
#include "ocbf/core.hpp"
#include "ocbf/event.hpp"
#include "ocbf/metrics.hpp"
#include "ocbf/qp.hpp"
#include "ocbf/random.hpp"
#include "ocbf/reference.hpp"

namespace ocbf {

enum class ControlMode : std::uint8_t { kTimeDriven, kEventTriggered };

// Additive plant disturbances: x' = v + w1, v' = u + w2, each uniform and
// piecewise constant over a sensor period.
struct NoiseConfig {
  double w1_lo = -2.0;
  double w1_hi = 2.0;
  double w2_lo = -0.2;
  double w2_hi = 0.2;
};

struct Arrival {
  double t = 0.0;
  Lane lane = Lane::kMain;
  double v0 = 0.0;
};

struct SimConfig {
  ControlMode mode = ControlMode::kTimeDriven;
  double alpha = 0.25;                  // time/energy weight, also sets beta
  std::optional<double> beta_override;  // direct planner weight, bypassing alpha
  double dt = 0.05;                     // [s] time-driven update period
  int sensor_hz = 20;
  int audit_hz = 100;                   // noise-free safety audit rate
  BoundVector s{2.0, 0.5};
  double arrival_rate = 0.1;            // [CAV/s] per origin
  double v0_min = 15.0;
  double v0_max = 20.0;
  std::optional<NoiseConfig> noise;
  int cav_count = 20;                   // run ends when this many CAVs exited
  std::uint64_t rng_seed = 1;
  MinMode min_mode = MinMode::kComponentwise;
  bool clf_enabled = true;
  // Event mode: notified CAVs re-solve unconditionally when set; otherwise
  // they first check their stored robust rows against the fresh boxes.
  bool resolve_on_notify = true;
  double event_horizon = 60.0;          // [s] own-trigger search cap
  double max_time = 3600.0;             // [s] watchdog
  bool record_traces = true;
  std::vector<Arrival> scripted_arrivals;  // overrides the Poisson process
  Geometry geometry{};
  ConstraintParams params{};
  FuelParams fuel{};
};

struct TraceSample {
  double t = 0.0;
  int id = 0;
  double x = 0.0;
  double v = 0.0;
  double u = 0.0;
  double b1 = std::numeric_limits<double>::quiet_NaN();
  double b2 = std::numeric_limits<double>::quiet_NaN();
  double b3 = 0.0;
  double b4 = 0.0;
  QpStatus status = QpStatus::kOptimal;
};

struct RunResult {
  RunMetrics metrics;
  std::vector<CavRunRecord> records;  // exit order
  std::vector<TraceSample> traces;    // one sample per control update
  // Worst b_1..b_4 seen by the audit over the whole run.
  std::array<double, 4> audit_min_b{
      std::numeric_limits<double>::infinity(),
      std::numeric_limits<double>::infinity(),
      std::numeric_limits<double>::infinity(),
      std::numeric_limits<double>::infinity()};
  std::uint64_t clamp_events = 0;
  std::uint64_t deferrals = 0;
  std::uint64_t planner_fallbacks = 0;
  bool all_qps_optimal = true;
};

inline void validate(const SimConfig& c) {
  auto fail = [](const char* what) { throw std::invalid_argument(what); };
  if (!(c.dt > 0.0)) fail("SimConfig: dt must be positive");
  if (!(c.arrival_rate > 0.0)) fail("SimConfig: arrival_rate must be positive");
  if (!(c.alpha >= 0.0 && c.alpha < 1.0)) fail("SimConfig: alpha outside [0, 1)");
  if (c.v0_min > c.v0_max || c.v0_min < c.params.v_min || c.v0_max > c.params.v_max) {
    fail("SimConfig: v0 range outside [v_min, v_max]");
  }
  if (c.cav_count < 1 && c.scripted_arrivals.empty()) fail("SimConfig: cav_count < 1");
  if (c.sensor_hz <= 0 || c.audit_hz <= 0 || c.audit_hz % c.sensor_hz != 0) {
    fail("SimConfig: audit_hz must be a positive multiple of sensor_hz");
  }
  if (!(c.s.s_x > 0.0 && c.s.s_v > 0.0)) fail("SimConfig: bounds must be positive");
  if (c.noise) {
    const double steps = c.dt * c.sensor_hz;
    if (std::abs(steps - std::round(steps)) > 1e-9 || steps < 1.0 - 1e-9) {
      fail("SimConfig: noisy runs need dt = k / sensor_hz");
    }
  }
  for (std::size_t i = 0; i < c.scripted_arrivals.size(); ++i) {
    const auto& a = c.scripted_arrivals[i];
    if (a.t < 0.0 || a.v0 < c.params.v_min || a.v0 > c.params.v_max) {
      fail("SimConfig: bad scripted arrival");
    }
    if (i > 0 && a.t < c.scripted_arrivals[i - 1].t) {
      fail("SimConfig: scripted arrivals must be time-sorted");
    }
  }
}

// Zero-order-hold double-integrator step with the velocity held at its
// physical limits: the control stops acting beyond the bound it pushes on.
inline CavState step_exact(const CavState& s, double u, double dt,
                           const ConstraintParams& p) {
  if (dt < 0.0) throw std::domain_error("step_exact: dt < 0");
  CavState out{s.x, std::clamp(s.v, p.v_min, p.v_max)};
  double remaining = dt;
  if (u > 0.0 && out.v < p.v_max) {
    const double t1 = std::min((p.v_max - out.v) / u, remaining);
    out.x += out.v * t1 + 0.5 * u * t1 * t1;
    out.v = t1 < remaining ? p.v_max : out.v + u * t1;
    remaining -= t1;
  } else if (u < 0.0 && out.v > p.v_min) {
    const double t1 = std::min((p.v_min - out.v) / u, remaining);
    out.x += out.v * t1 + 0.5 * u * t1 * t1;
    out.v = t1 < remaining ? p.v_min : out.v + u * t1;
    remaining -= t1;
  }
  out.x += out.v * remaining;  // cruise segment (u == 0 or pinned)
  return out;
}

// One sensor-period step under constant disturbances drawn from `nc`,
// integrated with a classic fourth-order Runge-Kutta stage (exact for this
// linear system). Velocity is clamped to the physical limits afterwards.
inline CavState step_noisy(const CavState& s, double u, double dt,
                           std::mt19937_64& rng, const NoiseConfig& nc,
                           const ConstraintParams& p) {
  const double w1 = uniform(rng, nc.w1_lo, nc.w1_hi);
  const double w2 = uniform(rng, nc.w2_lo, nc.w2_hi);
  const double fv = u + w2;
  const double k1 = s.v + w1;
  const double k2 = s.v + 0.5 * dt * fv + w1;
  const double k3 = k2;
  const double k4 = s.v + dt * fv + w1;
  CavState out;
  out.x = s.x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  out.v = std::clamp(s.v + dt * fv, p.v_min, p.v_max);
  return out;
}

// First cav_count arrivals over both origins: independent exponential
// streams per lane, entry speeds uniform in [v0_min, v0_max].
inline std::vector<Arrival> spawn_arrivals(const SimConfig& cfg) {
  std::vector<Arrival> all;
  for (int li = 0; li < 2; ++li) {
    auto rng = make_stream(cfg.rng_seed, 0xA221u + static_cast<std::uint64_t>(li));
    double t = 0.0;
    for (int k = 0; k < cfg.cav_count; ++k) {
      t += exponential(rng, cfg.arrival_rate);
      all.push_back({t, li == 0 ? Lane::kMain : Lane::kMerge,
                     uniform(rng, cfg.v0_min, cfg.v0_max)});
    }
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const Arrival& a, const Arrival& b) { return a.t < b.t; });
  all.resize(static_cast<std::size_t>(cfg.cav_count));
  return all;
}

namespace detail {

// Smallest positive time for the zero-order-hold trajectory from `s` to
// reach position `target` ahead; nullopt when it never gets there.
inline std::optional<double> time_to_position(const CavState& s, double u,
                                              double target) {
  const double c = target - s.x;
  if (c <= 0.0) return 0.0;
  double roots[2];
  int n = 0;
  quad_roots(u, s.v, -c, roots, n);
  if (n == 0) return std::nullopt;
  return roots[0];
}

struct CavSide {
  UnconstrainedPlan plan{};
  CavRunRecord rec{};
  QpStatus last_status = QpStatus::kOptimal;
  double next_solve = 0.0;  // time-driven schedule, absolute
  int solves = 0;
  double fuel_t = 0.0;  // last fuel sample
  double fuel_f = 0.0;
};

struct PendingArrival {
  Arrival ar;
  bool defer_logged = false;
};

class Engine {
 public:
  explicit Engine(const SimConfig& cfg)
      : cfg_(cfg),
        beta_(cfg.beta_override ? *cfg.beta_override
                                : beta_from_alpha(cfg.alpha, cfg.params)),
        cz_(cfg.geometry, cfg.params) {}

  RunResult run() {
    validate(cfg_);
    arrivals_ = cfg_.scripted_arrivals.empty() ? spawn_arrivals(cfg_)
                                               : cfg_.scripted_arrivals;
    target_ = static_cast<int>(arrivals_.size());
    if (cfg_.noise) {
      run_noisy();
    } else {
      run_exact();
    }
    return finish();
  }

 private:
  static constexpr double kTol = 1e-9;
  static constexpr double kInf = std::numeric_limits<double>::infinity();

  // ---- shared bookkeeping ------------------------------------------------

  CavSide& side(int id) { return sides_.at(id); }
  const CavSide& side(int id) const { return sides_.at(id); }

  double u_eff(const CavAgent& a) const {
    if (a.u_current > 0.0 && a.state.v >= cfg_.params.v_max - 1e-12) return 0.0;
    if (a.u_current < 0.0 && a.state.v <= cfg_.params.v_min + 1e-12) return 0.0;
    return a.u_current;
  }

  UnconstrainedPlan plan_for(double v0) {
    if (auto p = solve_unconstrained(v0, cfg_.geometry.cz_length, beta_)) return *p;
    ++planner_fallbacks_;  // cruise reference: u_ref = 0, v_ref = v0
    return UnconstrainedPlan{0.0, 0.0, cfg_.geometry.cz_length / v0, v0, v0};
  }

  void sample_fuel(const CavAgent& a, double t) {
    auto& sd = side(a.id);
    const double f = fuel_rate(a.state.v, u_eff(a), cfg_.fuel);
    sd.rec.fuel += 0.5 * (sd.fuel_f + f) * (t - sd.fuel_t);
    sd.fuel_t = t;
    sd.fuel_f = f;
  }

  double eval_b2_clamped(const CavAgent& a, const CavState& conflict) const {
    CavState own = a.state;
    own.x = std::clamp(own.x, 0.0, cfg_.geometry.cz_length);
    return eval_b2(own, conflict, cfg_.geometry, cfg_.params);
  }

  void audit_all() {
    for (const auto& a : cz_.agents()) {
      auto& sd = side(a.id);
      const auto [b3, b4] = eval_b3_b4(a.state, cfg_.params);
      min_b_[2] = std::min(min_b_[2], b3);
      min_b_[3] = std::min(min_b_[3], b4);
      if (a.ip) {
        const double b1 = eval_b1(a.state, cz_.find(*a.ip)->state, cfg_.params);
        sd.rec.min_b1 = std::min(sd.rec.min_b1, b1);
        min_b_[0] = std::min(min_b_[0], b1);
      }
      if (a.j) {
        const double b2 = eval_b2_clamped(a, cz_.find(*a.j)->state);
        sd.rec.min_b2 = std::min(sd.rec.min_b2, b2);
        min_b_[1] = std::min(min_b_[1], b2);
      }
    }
  }

  void push_trace(const CavAgent& a, double t) {
    if (!cfg_.record_traces) return;
    TraceSample s;
    s.t = t;
    s.id = a.id;
    s.x = a.state.x;
    s.v = a.state.v;
    s.u = a.u_current;
    std::tie(s.b3, s.b4) = eval_b3_b4(a.state, cfg_.params);
    if (a.ip) s.b1 = eval_b1(a.state, cz_.find(*a.ip)->state, cfg_.params);
    if (a.j) s.b2 = eval_b2_clamped(a, cz_.find(*a.j)->state);
    s.status = side(a.id).last_status;
    traces_.push_back(s);
  }

  // ---- controllers ---------------------------------------------------------

  void neighbor_views(const CavAgent& a, const CavAgent** pre,
                      const CavAgent** con) const {
    *pre = a.ip ? cz_.find(*a.ip) : nullptr;
    *con = a.j ? cz_.find(*a.j) : nullptr;
  }

  void solve_time_step(CavAgent& a, double t) {
    const CavAgent *pre, *con;
    neighbor_views(a, &pre, &con);
    const auto pre_s = pre ? std::optional<CavState>(pre->state) : std::nullopt;
    const auto con_s = con ? std::optional<CavState>(con->state) : std::nullopt;
    const QpProblem qp = assemble_qp(a, pre_s, con_s, side(a.id).plan, t,
                                     cfg_.params, cfg_.geometry, cfg_.clf_enabled);
    QpSolution sol = solve(qp);
    ++qp_solved_;
    cz_.add_messages((pre ? 1u : 0u) + (con ? 1u : 0u));  // state fetches
    if (sol.status == QpStatus::kInfeasible) {
      ++qp_infeasible_;
      sol = solve_relaxed(qp);
    }
    a.u_current = sol.u;
    auto& sd = side(a.id);
    sd.last_status = sol.status;
    ++sd.solves;
    sd.next_solve = sd.rec.t0 + sd.solves * cfg_.dt;
    push_trace(a, t);
  }

  void solve_event_step(CavAgent& a, double t) {
    a.bound_anchor = a.state;
    const CavAgent *pre, *con;
    neighbor_views(a, &pre, &con);
    const StateBox own = make_box(a.bound_anchor, a.s, cfg_.geometry, cfg_.params);
    const auto pre_box =
        pre ? std::optional<StateBox>(
                  make_box(pre->bound_anchor, pre->s, cfg_.geometry, cfg_.params))
            : std::nullopt;
    const auto con_box =
        con ? std::optional<StateBox>(
                  make_box(con->bound_anchor, con->s, cfg_.geometry, cfg_.params))
            : std::nullopt;
    const auto pre_est = pre ? std::optional<CavState>(pre->bound_anchor) : std::nullopt;
    const auto con_est = con ? std::optional<CavState>(con->bound_anchor) : std::nullopt;
    const EventQpOutcome out =
        solve_event_qp(a, own, pre_box, con_box, pre_est, con_est, side(a.id).plan,
                       t, cfg_.params, cfg_.geometry, cfg_.min_mode, cfg_.clf_enabled);
    ++qp_solved_;
    QpSolution sol = out.solution;
    if (sol.status == QpStatus::kInfeasible) {
      ++qp_infeasible_;
      sol = solve_relaxed(out.robust_qp);
    }
    a.u_current = sol.u;
    side(a.id).last_status = sol.status;
    push_trace(a, t);
  }

  // Would the current control still satisfy the robust barrier rows built
  // from the fresh neighbor boxes? Used by the notify-check variant.
  bool robust_rows_hold(const CavAgent& a, double t) const {
    const CavAgent *pre, *con;
    neighbor_views(a, &pre, &con);
    const StateBox own = make_box(a.bound_anchor, a.s, cfg_.geometry, cfg_.params);
    const auto pre_box =
        pre ? std::optional<StateBox>(
                  make_box(pre->bound_anchor, pre->s, cfg_.geometry, cfg_.params))
            : std::nullopt;
    const auto con_box =
        con ? std::optional<StateBox>(
                  make_box(con->bound_anchor, con->s, cfg_.geometry, cfg_.params))
            : std::nullopt;
    const double hint = a.u_current >= 0.0 ? 1.0 : -1.0;
    const QpProblem qp =
        build_robust_qp(a, own, pre_box, con_box, side(a.id).plan, t, cfg_.params,
                        cfg_.geometry, cfg_.min_mode, hint, false);
    for (const auto& row : qp.constraints) {
      if (row.tag == ConstraintTag::kUmin || row.tag == ConstraintTag::kUmax) continue;
      if (row.cu * a.u_current + row.c0 < -1e-9) return false;
    }
    return true;
  }

  // Re-solve `own` trigger sources and everything they transitively notify,
  // in queue order; every re-solve re-anchors and is announced onward.
  void cascade(const std::vector<int>& own, const std::vector<int>& notified,
               double t) {
    std::unordered_set<int> own_set(own.begin(), own.end());
    std::unordered_set<int> pending(own.begin(), own.end());
    pending.insert(notified.begin(), notified.end());
    std::unordered_set<int> done;
    while (true) {
      int next_id = 0;
      for (const auto& a : cz_.agents()) {
        if (pending.count(a.id) && !done.count(a.id)) {
          next_id = a.id;
          break;
        }
      }
      if (next_id == 0) break;
      done.insert(next_id);
      CavAgent* a = cz_.find(next_id);
      if (!own_set.count(next_id) && !cfg_.resolve_on_notify &&
          robust_rows_hold(*a, t)) {
        continue;  // stored control still valid; keep it, no onward message
      }
      solve_event_step(*a, t);
      for (int r : cz_.propagate_trigger(next_id, t)) {
        if (!done.count(r)) pending.insert(r);
      }
    }
  }

  // ---- membership ----------------------------------------------------------

  std::optional<int> try_admit_head(int lane_idx, double t) {
    auto& q = pending_[lane_idx];
    if (q.empty()) return std::nullopt;
    const Lane lane = lane_idx == 0 ? Lane::kMain : Lane::kMerge;
    PendingArrival& pa = q.front();
    if (!cz_.can_admit(lane, pa.ar.v0)) {
      if (!pa.defer_logged) {
        cz_.admit(lane, t, pa.ar.v0);  // records the deferral
        pa.defer_logged = true;
        ++deferrals_;
      }
      return std::nullopt;
    }
    CavAgent* a = cz_.admit(lane, t, pa.ar.v0);
    a->s = cfg_.s;
    CavSide sd;
    sd.plan = plan_for(pa.ar.v0);
    sd.rec.id = a->id;
    sd.rec.lane = lane;
    sd.rec.t0 = t;
    sd.fuel_t = t;
    sd.fuel_f = fuel_rate(a->state.v, 0.0, cfg_.fuel);
    sd.next_solve = t;
    sides_[a->id] = sd;
    if (cfg_.mode == ControlMode::kEventTriggered) {
      // Coordinator hands the newcomer its partners' current anchors.
      cz_.add_messages((a->ip ? 1u : 0u) + (a->j ? 1u : 0u));
    }
    if (cfg_.noise) {
      noise_rngs_.emplace(a->id, make_stream(cfg_.rng_seed,
                                             0xD15Cu + static_cast<std::uint64_t>(a->id)));
    }
    q.pop_front();
    return a->id;
  }

  void enqueue_due_arrivals(double t) {
    while (next_arrival_ < arrivals_.size() && arrivals_[next_arrival_].t <= t + kTol) {
      const Arrival& ar = arrivals_[next_arrival_];
      pending_[ar.lane == Lane::kMain ? 0 : 1].push_back({ar, false});
      ++next_arrival_;
    }
  }

  std::vector<int> admit_ready(double t) {
    std::vector<int> newly;
    for (int li = 0; li < 2; ++li) {
      while (auto id = try_admit_head(li, t)) newly.push_back(*id);
    }
    return newly;
  }

  // The exiting CAV's record is finalized before removal; in event mode its
  // former followers are notified and collected for the cascade.
  void finalize_exits(double t, std::vector<int>* notified) {
    while (true) {
      int exit_id = 0;
      for (const auto& a : cz_.agents()) {
        if (a.state.x >= cfg_.geometry.cz_length - 1e-9) {
          exit_id = a.id;
          break;
        }
      }
      if (exit_id == 0) break;
      CavAgent* a = cz_.find(exit_id);
      sample_fuel(*a, t);
      push_trace(*a, t);  // closing sample; makes traces integrable to tf
      auto& sd = side(exit_id);
      sd.rec.tf = t;
      records_.push_back(sd.rec);
      if (notified) {
        for (int r : cz_.propagate_trigger(exit_id, t)) notified->push_back(r);
      }
      cz_.exit_cav(exit_id, t);
      sides_.erase(exit_id);
      noise_rngs_.erase(exit_id);
    }
  }

  double gap_clear_candidate(int lane_idx, double now) const {
    const auto& q = pending_[lane_idx];
    if (q.empty()) return kInf;
    const Lane lane = lane_idx == 0 ? Lane::kMain : Lane::kMerge;
    const CavAgent* pred = nullptr;
    for (std::size_t k = cz_.agents().size(); k-- > 0;) {
      if (cz_.agents()[k].lane == lane) {
        pred = &cz_.agents()[k];
        break;
      }
    }
    if (!pred) return now + kTol;
    const double target = cfg_.params.phi * q.front().ar.v0 + cfg_.params.delta;
    if (pred->state.x >= target) return now + kTol;
    const auto dt = time_to_position(pred->state, u_eff(*pred), target);
    return dt ? now + std::max(*dt, kTol) : kInf;
  }

  // ---- noise-free engine: exact integration between analytic event nodes ----

  void advance_exact(double dt) {
    if (dt <= 0.0) return;
    for (auto& a : cz_.agents_mut()) {
      const double ue = u_eff(a);
      if (ue != a.u_current) ++clamp_events_;
      side(a.id).rec.half_u2_integral += 0.5 * ue * ue * dt;
      a.state = step_exact(a.state, a.u_current, dt, cfg_.params);
    }
  }

  void run_exact() {
    double t = 0.0;
    std::int64_t k_audit = 0;
    std::int64_t k_sensor = 0;
    const double audit_dt = 1.0 / cfg_.audit_hz;
    const double sensor_dt = 1.0 / cfg_.sensor_hz;
    while (true) {
      if (t > cfg_.max_time) throw std::runtime_error("simulation watchdog tripped");

      // Everything due at the current node, in a fixed order.
      std::vector<int> exit_notified;
      finalize_exits(t, cfg_.mode == ControlMode::kEventTriggered ? &exit_notified
                                                                  : nullptr);
      enqueue_due_arrivals(t);
      const std::vector<int> newly = admit_ready(t);

      if (cfg_.mode == ControlMode::kTimeDriven) {
        for (std::size_t k = 0; k < cz_.agents_mut().size(); ++k) {
          CavAgent& a = cz_.agents_mut()[k];
          if (side(a.id).next_solve <= t + kTol) solve_time_step(a, t);
        }
      } else {
        std::vector<int> own = newly;
        for (const auto& a : cz_.agents()) {
          if (std::count(newly.begin(), newly.end(), a.id)) continue;
          const double dx = std::abs(a.state.x - a.bound_anchor.x);
          const double dv = std::abs(a.state.v - a.bound_anchor.v);
          if (dx >= a.s.s_x - 1e-7 || dv >= a.s.s_v - 1e-7) own.push_back(a.id);
        }
        cascade(own, exit_notified, t);
      }

      while (static_cast<double>(k_sensor) * sensor_dt <= t + kTol) {
        if (static_cast<double>(k_sensor) * sensor_dt >= t - kTol) {
          for (const auto& a : cz_.agents()) sample_fuel(a, t);
        }
        ++k_sensor;
      }
      while (static_cast<double>(k_audit) * audit_dt <= t + kTol) {
        if (static_cast<double>(k_audit) * audit_dt >= t - kTol) audit_all();
        ++k_audit;
      }

      if (static_cast<int>(records_.size()) >= target_) break;

      // Next node: arrivals, deferred-gap clears, grid ticks, and per-CAV
      // saturation / exit / control events, all exact.
      double tn = std::min(static_cast<double>(k_audit) * audit_dt,
                           static_cast<double>(k_sensor) * sensor_dt);
      if (next_arrival_ < arrivals_.size()) {
        tn = std::min(tn, arrivals_[next_arrival_].t);
      }
      for (int li = 0; li < 2; ++li) tn = std::min(tn, gap_clear_candidate(li, t));
      for (const auto& a : cz_.agents()) {
        const double ue = u_eff(a);
        if (a.u_current > 0.0 && a.state.v < cfg_.params.v_max - 1e-12) {
          tn = std::min(tn, t + (cfg_.params.v_max - a.state.v) / a.u_current);
        } else if (a.u_current < 0.0 && a.state.v > cfg_.params.v_min + 1e-12) {
          tn = std::min(tn, t + (cfg_.params.v_min - a.state.v) / a.u_current);
        }
        if (const auto te = time_to_position(a.state, ue, cfg_.geometry.cz_length)) {
          tn = std::min(tn, t + std::max(*te, kTol));
        }
        if (cfg_.mode == ControlMode::kTimeDriven) {
          tn = std::min(tn, side(a.id).next_solve);
        } else if (const auto cr = first_crossing_time(a.state, ue, a.bound_anchor,
                                                       a.s, cfg_.event_horizon)) {
          tn = std::min(tn, t + std::max(cr->t, kTol));
        }
      }
      tn = std::max(tn, t + kTol);
      advance_exact(tn - t);
      t = tn;
    }
  }

  // ---- noisy engine: fixed sensor-rate grid ---------------------------------

  void run_noisy() {
    const double h = 1.0 / cfg_.sensor_hz;
    std::int64_t k = 0;
    while (static_cast<int>(records_.size()) < target_) {
      const double t = static_cast<double>(k) * h;
      if (t > cfg_.max_time) throw std::runtime_error("simulation watchdog tripped");

      std::vector<int> exit_notified;
      finalize_noisy_exits(t, h, cfg_.mode == ControlMode::kEventTriggered
                                     ? &exit_notified
                                     : nullptr);
      enqueue_due_arrivals(t);
      const std::vector<int> newly = admit_ready(t);

      if (cfg_.mode == ControlMode::kTimeDriven) {
        for (std::size_t i = 0; i < cz_.agents_mut().size(); ++i) {
          CavAgent& a = cz_.agents_mut()[i];
          if (side(a.id).next_solve <= t + kTol) solve_time_step(a, t);
        }
      } else {
        std::vector<int> own = newly;
        for (const auto& a : cz_.agents()) {
          if (std::count(newly.begin(), newly.end(), a.id)) continue;
          if (std::abs(a.state.x - a.bound_anchor.x) >= a.s.s_x ||
              std::abs(a.state.v - a.bound_anchor.v) >= a.s.s_v) {
            own.push_back(a.id);
          }
        }
        cascade(own, exit_notified, t);
      }

      audit_all();
      for (const auto& a : cz_.agents()) sample_fuel(a, t);

      for (auto& a : cz_.agents_mut()) {
        const double ue = u_eff(a);
        if (ue != a.u_current) ++clamp_events_;
        side(a.id).rec.half_u2_integral += 0.5 * ue * ue * h;
        a.state = step_noisy(a.state, a.u_current, h, noise_rngs_.at(a.id),
                             *cfg_.noise, cfg_.params);
      }
      ++k;
    }
  }

  // Noisy exits are detected at the first sample past L; the crossing time
  // is interpolated back inside the preceding step.
  void finalize_noisy_exits(double t, double h, std::vector<int>* notified) {
    while (true) {
      int exit_id = 0;
      for (const auto& a : cz_.agents()) {
        if (a.state.x >= cfg_.geometry.cz_length - 1e-9) {
          exit_id = a.id;
          break;
        }
      }
      if (exit_id == 0) break;
      CavAgent* a = cz_.find(exit_id);
      const double overshoot = a->state.x - cfg_.geometry.cz_length;
      const double back = overshoot / std::max(a->state.v, 0.1);
      const double tf = std::max(t - std::min(back, h), side(exit_id).rec.t0);
      sample_fuel(*a, tf);
      push_trace(*a, tf);
      auto& sd = side(exit_id);
      sd.rec.tf = tf;
      records_.push_back(sd.rec);
      if (notified) {
        for (int r : cz_.propagate_trigger(exit_id, t)) notified->push_back(r);
      }
      cz_.exit_cav(exit_id, t);
      sides_.erase(exit_id);
      noise_rngs_.erase(exit_id);
    }
  }

  RunResult finish() {
    RunResult r;
    r.records = records_;
    r.metrics = aggregate(records_, cfg_.alpha, cfg_.params);
    r.metrics.qp_solved = qp_solved_;
    r.metrics.qp_infeasible = qp_infeasible_;
    r.metrics.messages = cz_.message_count();
    r.traces = std::move(traces_);
    r.audit_min_b = min_b_;
    r.clamp_events = clamp_events_;
    r.deferrals = deferrals_;
    r.planner_fallbacks = planner_fallbacks_;
    r.all_qps_optimal = qp_infeasible_ == 0;
    return r;
  }

  SimConfig cfg_;
  double beta_;
  ConflictZone cz_;
  std::vector<Arrival> arrivals_;
  std::size_t next_arrival_ = 0;
  int target_ = 0;
  std::array<std::deque<PendingArrival>, 2> pending_;
  std::unordered_map<int, CavSide> sides_;
  std::unordered_map<int, std::mt19937_64> noise_rngs_;
  std::vector<CavRunRecord> records_;
  std::vector<TraceSample> traces_;
  std::array<double, 4> min_b_{kInf, kInf, kInf, kInf};
  std::uint64_t qp_solved_ = 0;
  std::uint64_t qp_infeasible_ = 0;
  std::uint64_t clamp_events_ = 0;
  std::uint64_t deferrals_ = 0;
  std::uint64_t planner_fallbacks_ = 0;
};

}  // namespace detail

inline RunResult run_simulation(const SimConfig& cfg) {
  detail::Engine engine(cfg);
  return engine.run();
}

inline RunResult run_time_driven(SimConfig cfg) {
  cfg.mode = ControlMode::kTimeDriven;
  return run_simulation(cfg);
}

inline RunResult run_event_driven(SimConfig cfg) {
  cfg.mode = ControlMode::kEventTriggered;
  return run_simulation(cfg);
}

}  // namespace ocbf
