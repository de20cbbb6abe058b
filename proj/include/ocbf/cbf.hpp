#pragma once

#include <optional>

#include "ocbf/core.hpp"
#include "ocbf/qp.hpp"
#include "ocbf/reference.hpp"

namespace ocbf {

// Barrier rows for the tracking QP. Each maps a margin b_q >= 0 to the
// control-affine sufficient condition L_f b_q + L_g b_q * u + k_q * b_q >= 0.
// delta stays inside both the margin and the class-K term.

// Rear-end row: (v_ip - v_i) - phi*u + k1*b1 >= 0.
inline LinearConstraint build_cbf1(const CavState& agent,
                                   const CavState& preceding,
                                   const ConstraintParams& p) {
  const double lf = preceding.v - agent.v;
  return {-p.phi, 0.0, lf + p.k1 * eval_b1(agent, preceding, p), Sense::kGe,
          ConstraintTag::kCbf1};
}

// Merging row: (v_j - v_i - (phi/L)v_i^2) - (phi x_i / L) u + k2*b2 >= 0.
inline LinearConstraint build_cbf2(const CavState& agent,
                                   const CavState& conflict, const Geometry& g,
                                   const ConstraintParams& p) {
  const double ramp = phi_of_x(agent.x, g, p);  // rejects x outside [0, L]
  const double lf = conflict.v - agent.v - (p.phi / g.cz_length) * agent.v * agent.v;
  return {-ramp, 0.0, lf + p.k2 * eval_b2(agent, conflict, g, p), Sense::kGe,
          ConstraintTag::kCbf2};
}

// Speed-band rows: -u + k3(v_max - v) >= 0 and u + k4(v - v_min) >= 0.
inline std::pair<LinearConstraint, LinearConstraint> build_speed_cbfs(
    const CavState& agent, const ConstraintParams& p) {
  const auto [b3, b4] = eval_b3_b4(agent, p);
  return {{-1.0, 0.0, p.k3 * b3, Sense::kGe, ConstraintTag::kCbf3},
          {1.0, 0.0, p.k4 * b4, Sense::kGe, ConstraintTag::kCbf4}};
}

// Soft speed-tracking row with V = (v - v_ref)^2: 2(v - v_ref) u + eps V <= e.
// v_ref is frozen between control updates, so its drift does not enter L_f V.
inline LinearConstraint build_clf(const CavState& agent, double v_ref,
                                  const ConstraintParams& p) {
  const double dv = agent.v - v_ref;
  return {2.0 * dv, -1.0, p.eps * dv * dv, Sense::kLe, ConstraintTag::kClf};
}

inline LinearConstraint umin_row(const ConstraintParams& p) {
  return {1.0, 0.0, -p.u_min, Sense::kGe, ConstraintTag::kUmin};
}

inline LinearConstraint umax_row(const ConstraintParams& p) {
  return {-1.0, 0.0, p.u_max, Sense::kGe, ConstraintTag::kUmax};
}

// The time-driven tracking QP at absolute time t: barrier rows for every
// present neighbor, both speed rows, the control bounds, and (unless
// disabled) the CLF row tracking the planner speed.
inline QpProblem assemble_qp(const CavAgent& agent,
                             const std::optional<CavState>& preceding,
                             const std::optional<CavState>& conflict,
                             const UnconstrainedPlan& plan, double t,
                             const ConstraintParams& p, const Geometry& g,
                             bool clf_enabled = true) {
  const auto [u_ref, v_ref] = eval_ref(plan, t - agent.t0);
  QpProblem qp{u_ref, p.lambda, clf_enabled, {}};
  if (preceding) qp.constraints.push_back(build_cbf1(agent.state, *preceding, p));
  if (conflict) qp.constraints.push_back(build_cbf2(agent.state, *conflict, g, p));
  const auto [c3, c4] = build_speed_cbfs(agent.state, p);
  qp.constraints.push_back(c3);
  qp.constraints.push_back(c4);
  if (clf_enabled) qp.constraints.push_back(build_clf(agent.state, v_ref, p));
  qp.constraints.push_back(umin_row(p));
  qp.constraints.push_back(umax_row(p));
  return qp;
}

}  // namespace ocbf
