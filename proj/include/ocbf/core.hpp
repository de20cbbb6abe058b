#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <utility>

namespace ocbf {

// Two single-lane roads of equal length merging at one point. Positions are
// per-lane arc lengths measured from each vehicle's own origin, so both
// origins sit cz_length upstream of the merging point and positions on
// different lanes compare directly.
struct Geometry {
  double cz_length = 400.0;  // [m] origin -> merging point
  int num_lanes = 2;
};

enum class Lane : std::uint8_t { kMain = 0, kMerge = 1 };

inline Lane other_lane(Lane l) {
  return l == Lane::kMain ? Lane::kMerge : Lane::kMain;
}

struct CavState {
  double x = 0.0;  // [m] distance from own origin
  double v = 0.0;  // [m/s]
};

struct ConstraintParams {
  double phi = 1.8;       // [s] reaction time
  double delta = 0.0;     // [m] minimum bumper distance
  double v_min = 0.0;     // [m/s]
  double v_max = 30.0;    // [m/s]
  double u_min = -5.886;  // [m/s^2]
  double u_max = 4.905;   // [m/s^2]
  double k1 = 1.0;        // [1/s] class-K gains of the four barrier rows
  double k2 = 1.0;
  double k3 = 1.0;
  double k4 = 1.0;
  double eps = 10.0;      // CLF convergence rate
  double lambda = 10.0;   // slack weight in the tracking objective
};

// Trigger-box half-widths around the state at the last control update.
struct BoundVector {
  double s_x = 2.0;  // [m]
  double s_v = 0.5;  // [m/s]
};

// One vehicle inside the control zone. `id` is stable for the whole run
// (arrival order, 1-based); the FIFO index is positional and maintained by
// the coordinator. `ip` is the physically preceding vehicle on the same
// lane, `j` the merging-conflict partner (the FIFO predecessor when it
// travels on the other lane). Both are ids of vehicles ahead in FIFO order.
struct CavAgent {
  int id = 0;
  Lane lane = Lane::kMain;
  CavState state{};
  double t0 = 0.0;                // [s] CZ entry time
  std::optional<double> tf{};     // [s] merging-point crossing time
  double u_current = 0.0;         // [m/s^2] zero-order-hold control
  std::optional<int> ip{};
  std::optional<int> j{};
  CavState bound_anchor{};        // own state at the last QP solve
  BoundVector s{};
};

// Rear-end margin: x_ip - x_i - phi*v_i - delta. Nonnegative iff the
// reaction-time headway to the preceding vehicle holds.
inline double eval_b1(const CavState& agent, const CavState& preceding,
                      const ConstraintParams& p) {
  return preceding.x - agent.x - p.phi * agent.v - p.delta;
}

// Merging weight ramp: 0 at the origin, phi at the merging point.
inline double phi_of_x(double x, const Geometry& g, const ConstraintParams& p) {
  if (x < 0.0 || x > g.cz_length) {
    throw std::domain_error("phi_of_x: position outside [0, L]");
  }
  return p.phi * x / g.cz_length;
}

// Lateral-merge margin: (x_j - x_i) - Phi(x_i)*v_i - delta.
inline double eval_b2(const CavState& agent, const CavState& conflict,
                      const Geometry& g, const ConstraintParams& p) {
  return (conflict.x - agent.x) - phi_of_x(agent.x, g, p) * agent.v - p.delta;
}

// Speed-band margins (v_max - v, v - v_min).
inline std::pair<double, double> eval_b3_b4(const CavState& agent,
                                            const ConstraintParams& p) {
  return {p.v_max - agent.v, agent.v - p.v_min};
}

}  // namespace ocbf
