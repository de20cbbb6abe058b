#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "ocbf/cbf.hpp"
#include "ocbf/core.hpp"
#include "ocbf/qp.hpp"
#include "ocbf/reference.hpp"

namespace ocbf {

// Reachable-state box between control updates: the trigger bounds around the
// anchor state, clipped to x in [0, L] and v in [v_min, v_max].
struct StateBox {
  CavState lo{};
  CavState hi{};
  bool degenerate = false;  // anchor fell outside the clip region
};

inline StateBox make_box(const CavState& anchor, const BoundVector& s,
                         const Geometry& g, const ConstraintParams& p) {
  if (!(s.s_x > 0.0) || !(s.s_v > 0.0)) {
    throw std::domain_error("make_box: bound half-widths must be positive");
  }
  StateBox box;
  box.lo = {std::max(anchor.x - s.s_x, 0.0), std::max(anchor.v - s.s_v, p.v_min)};
  box.hi = {std::min(anchor.x + s.s_x, g.cz_length), std::min(anchor.v + s.s_v, p.v_max)};
  if (box.lo.x > box.hi.x) {
    box.lo.x = box.hi.x = std::clamp(anchor.x, 0.0, g.cz_length);
    box.degenerate = true;
  }
  if (box.lo.v > box.hi.v) {
    box.lo.v = box.hi.v = std::clamp(anchor.v, p.v_min, p.v_max);
    box.degenerate = true;
  }
  return box;
}

// Pointwise drift and class-K terms of row q at own state yi and relevant
// state yr (yr ignored for the speed rows).
inline double lf_bq(int q, const CavState& yi, const CavState& yr,
                    const Geometry& g, const ConstraintParams& p) {
  switch (q) {
    case 1: return yr.v - yi.v;
    case 2: return yr.v - yi.v - (p.phi / g.cz_length) * yi.v * yi.v;
    case 3:
    case 4: return 0.0;
  }
  throw std::domain_error("lf_bq: q outside {1,2,3,4}");
}

inline double gamma_q(int q, const CavState& yi, const CavState& yr,
                      const Geometry& g, const ConstraintParams& p) {
  switch (q) {
    case 1: return p.k1 * (yr.x - yi.x - p.phi * yi.v - p.delta);
    case 2: return p.k2 * (yr.x - yi.x - (p.phi / g.cz_length) * yi.x * yi.v - p.delta);
    case 3: return p.k3 * (p.v_max - yi.v);
    case 4: return p.k4 * (yi.v - p.v_min);
  }
  throw std::domain_error("gamma_q: q outside {1,2,3,4}");
}

// Every term is linear, bilinear, or concave-quadratic over the box product,
// so box minima sit at vertices and are written in closed form.

inline double min_lf(int q, const StateBox& box_i, const StateBox& box_r,
                     const Geometry& g, const ConstraintParams& p) {
  switch (q) {
    case 1: return box_r.lo.v - box_i.hi.v;
    case 2: return box_r.lo.v - box_i.hi.v -
                   (p.phi / g.cz_length) * box_i.hi.v * box_i.hi.v;
    case 3:
    case 4: return 0.0;
  }
  throw std::domain_error("min_lf: q outside {1,2,3,4}");
}

inline double min_gamma(int q, const StateBox& box_i, const StateBox& box_r,
                        const Geometry& g, const ConstraintParams& p) {
  switch (q) {
    case 1: return p.k1 * (box_r.lo.x - box_i.hi.x - p.phi * box_i.hi.v - p.delta);
    case 2: return p.k2 * (box_r.lo.x - box_i.hi.x -
                           (p.phi / g.cz_length) * box_i.hi.x * box_i.hi.v - p.delta);
    case 3: return p.k3 * (p.v_max - box_i.hi.v);
    case 4: return p.k4 * (box_i.lo.v - p.v_min);
  }
  throw std::domain_error("min_gamma: q outside {1,2,3,4}");
}

// Limit value of L_g b2 = -phi x_i / L over the box, picked by the sign the
// control is expected to take: the box minimum when u >= 0, else the maximum.
inline double limit_lg_b2(double sign_hint, const StateBox& box_i,
                          const Geometry& g, const ConstraintParams& p) {
  const double x = sign_hint >= 0.0 ? box_i.hi.x : box_i.lo.x;
  return -p.phi * x / g.cz_length;
}

// Joint minimum of L_f b_q + gamma_q over the box vertices (the alternative
// to summing the separate minima; never smaller than that sum).
inline double min_lf_plus_gamma(int q, const StateBox& box_i,
                                const StateBox& box_r, const Geometry& g,
                                const ConstraintParams& p) {
  const std::array<CavState, 4> vi{{{box_i.lo.x, box_i.lo.v},
                                    {box_i.lo.x, box_i.hi.v},
                                    {box_i.hi.x, box_i.lo.v},
                                    {box_i.hi.x, box_i.hi.v}}};
  const std::array<CavState, 4> vr{{{box_r.lo.x, box_r.lo.v},
                                    {box_r.lo.x, box_r.hi.v},
                                    {box_r.hi.x, box_r.lo.v},
                                    {box_r.hi.x, box_r.hi.v}}};
  double best = std::numeric_limits<double>::infinity();
  const bool pairwise = q == 1 || q == 2;
  for (const auto& yi : vi) {
    if (pairwise) {
      for (const auto& yr : vr) {
        best = std::min(best, lf_bq(q, yi, yr, g, p) + gamma_q(q, yi, yr, g, p));
      }
    } else {
      best = std::min(best, lf_bq(q, yi, yi, g, p) + gamma_q(q, yi, yi, g, p));
    }
  }
  return best;
}

// Componentwise minima of the three row terms, per present row.
struct RobustTerms {
  std::array<double, 4> bf_min{};      // [q-1]; NaN when row q is absent
  std::array<double, 4> bgamma_min{};
  double bg_limit_b2 = 0.0;
};

inline RobustTerms robust_terms(const StateBox& own_box,
                                const std::optional<StateBox>& preceding_box,
                                const std::optional<StateBox>& conflict_box,
                                double sign_hint, const Geometry& g,
                                const ConstraintParams& p) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  RobustTerms rt;
  rt.bf_min = {nan, nan, 0.0, 0.0};
  rt.bgamma_min = {nan, nan, min_gamma(3, own_box, own_box, g, p),
                   min_gamma(4, own_box, own_box, g, p)};
  if (preceding_box) {
    rt.bf_min[0] = min_lf(1, own_box, *preceding_box, g, p);
    rt.bgamma_min[0] = min_gamma(1, own_box, *preceding_box, g, p);
  }
  if (conflict_box) {
    rt.bf_min[1] = min_lf(2, own_box, *conflict_box, g, p);
    rt.bgamma_min[1] = min_gamma(2, own_box, *conflict_box, g, p);
    rt.bg_limit_b2 = limit_lg_b2(sign_hint, own_box, g, p);
  }
  return rt;
}

enum class MinMode : std::uint8_t { kComponentwise, kJoint };

// Event-triggered tracking QP: barrier rows replaced by their box-robust
// counterparts b_{q,f,min} + b_{q,g,min} u + b_{gamma_q,min} >= 0; the CLF
// row and the control bounds are unchanged.
inline QpProblem build_robust_qp(const CavAgent& agent, const StateBox& own_box,
                                 const std::optional<StateBox>& preceding_box,
                                 const std::optional<StateBox>& conflict_box,
                                 const UnconstrainedPlan& plan, double t,
                                 const ConstraintParams& p, const Geometry& g,
                                 MinMode mode, double sign_hint,
                                 bool clf_enabled = true) {
  const auto [u_ref, v_ref] = eval_ref(plan, t - agent.t0);
  const auto rt = robust_terms(own_box, preceding_box, conflict_box, sign_hint, g, p);
  auto c0_of = [&](int q, const StateBox& box_r) {
    if (mode == MinMode::kJoint) {
      return min_lf_plus_gamma(q, own_box, box_r, g, p);
    }
    return rt.bf_min[q - 1] + rt.bgamma_min[q - 1];
  };

  QpProblem qp{u_ref, p.lambda, clf_enabled, {}};
  if (preceding_box) {
    qp.constraints.push_back(
        {-p.phi, 0.0, c0_of(1, *preceding_box), Sense::kGe, ConstraintTag::kCbf1});
  }
  if (conflict_box) {
    qp.constraints.push_back(
        {rt.bg_limit_b2, 0.0, c0_of(2, *conflict_box), Sense::kGe, ConstraintTag::kCbf2});
  }
  qp.constraints.push_back({-1.0, 0.0, c0_of(3, own_box), Sense::kGe, ConstraintTag::kCbf3});
  qp.constraints.push_back({1.0, 0.0, c0_of(4, own_box), Sense::kGe, ConstraintTag::kCbf4});
  if (clf_enabled) qp.constraints.push_back(build_clf(agent.state, v_ref, p));
  qp.constraints.push_back(umin_row(p));
  qp.constraints.push_back(umax_row(p));
  return qp;
}

struct EventQpOutcome {
  QpSolution solution;
  QpProblem robust_qp;   // the rows the kept solution was solved against
  double sign_hint = 1.0;
  bool retried = false;
};

// Full event-time solve: a nominal QP at the anchor fixes the expected sign
// of u; the robust QP is solved with the matching L_g b2 limit. If the
// optimum contradicts the hint, the opposite limit is tried once; when
// neither is self-consistent the more conservative (smaller) limit stands.
inline EventQpOutcome solve_event_qp(
    const CavAgent& agent, const StateBox& own_box,
    const std::optional<StateBox>& preceding_box,
    const std::optional<StateBox>& conflict_box,
    const std::optional<CavState>& preceding_est,
    const std::optional<CavState>& conflict_est, const UnconstrainedPlan& plan,
    double t, const ConstraintParams& p, const Geometry& g, MinMode mode,
    bool clf_enabled = true) {
  const QpProblem nominal =
      assemble_qp(agent, preceding_est, conflict_est, plan, t, p, g, clf_enabled);
  const QpSolution nsol = solve(nominal);
  const double u_nom =
      nsol.status == QpStatus::kOptimal ? nsol.u : solve_relaxed(nominal).u;
  const double hint = u_nom >= 0.0 ? 1.0 : -1.0;

  auto attempt = [&](double h) {
    EventQpOutcome out;
    out.sign_hint = h;
    out.robust_qp = build_robust_qp(agent, own_box, preceding_box, conflict_box,
                                    plan, t, p, g, mode, h, clf_enabled);
    out.solution = solve(out.robust_qp);
    return out;
  };

  EventQpOutcome first = attempt(hint);
  // Without a merging row (or with a point box) both limits coincide.
  const bool ambiguous =
      conflict_box.has_value() && own_box.hi.x - own_box.lo.x > 0.0;
  auto consistent = [](const EventQpOutcome& o) {
    return o.solution.status == QpStatus::kOptimal &&
           (o.solution.u >= 0.0) == (o.sign_hint >= 0.0);
  };
  if (!ambiguous || consistent(first)) return first;

  EventQpOutcome second = attempt(-hint);
  second.retried = true;
  if (consistent(second)) return second;
  // Keep the version built from the smaller (u >= 0) limit.
  EventQpOutcome& conservative = hint >= 0.0 ? first : second;
  conservative.retried = true;
  return conservative;
}

enum class CrossingKind : std::uint8_t { kPosition, kVelocity };

struct Crossing {
  double t = 0.0;
  CrossingKind kind = CrossingKind::kPosition;
};

namespace detail {

// Positive real roots of 1/2 u t^2 + v t + c = 0, smallest first.
inline void quad_roots(double u, double v, double c, double out[2], int& n) {
  n = 0;
  const double a2 = 0.5 * u;
  if (std::abs(a2) < 1e-14) {
    if (std::abs(v) > 1e-14) {
      const double t = -c / v;
      if (t > 1e-12) out[n++] = t;
    }
    return;
  }
  const double disc = v * v - 4.0 * a2 * c;
  if (disc < 0.0) return;
  const double sq = std::sqrt(disc);
  const double q = -0.5 * (v + (v >= 0.0 ? sq : -sq));
  double r1 = q / a2;
  double r2 = std::abs(q) > 1e-300 ? c / q : r1;
  if (r1 > r2) std::swap(r1, r2);
  if (r1 > 1e-12) out[n++] = r1;
  if (r2 > 1e-12 && r2 != r1) out[n++] = r2;
}

}  // namespace detail

// Earliest time at which the constant-control trajectory from `state`
// reaches the boundary of the anchor box (position or velocity component),
// solved in closed form. Returns nullopt when no crossing happens before the
// horizon, e.g. a stopped vehicle with zero control.
inline std::optional<Crossing> first_crossing_time(const CavState& state,
                                                   double u,
                                                   const CavState& anchor,
                                                   const BoundVector& s,
                                                   double horizon) {
  if (!(horizon > 0.0)) throw std::domain_error("first_crossing_time: horizon <= 0");
  double best = std::numeric_limits<double>::infinity();
  CrossingKind kind = CrossingKind::kPosition;

  const double dx0 = state.x - anchor.x;
  const double dv0 = state.v - anchor.v;
  if (std::abs(dx0) > s.s_x + 1e-9) return Crossing{0.0, CrossingKind::kPosition};
  if (std::abs(dv0) > s.s_v + 1e-9) return Crossing{0.0, CrossingKind::kVelocity};

  double roots[2];
  int n = 0;
  for (const double target : {s.s_x, -s.s_x}) {
    detail::quad_roots(u, state.v, dx0 - target, roots, n);
    for (int i = 0; i < n; ++i) {
      if (roots[i] < best) {
        best = roots[i];
        kind = CrossingKind::kPosition;
      }
    }
  }
  if (std::abs(u) > 1e-14) {
    for (const double target : {s.s_v, -s.s_v}) {
      const double t = (target - dv0) / u;
      if (t > 1e-12 && t < best) {
        best = t;
        kind = CrossingKind::kVelocity;
      }
    }
  }
  if (best >= horizon) return std::nullopt;
  return Crossing{best, kind};
}

}  // namespace ocbf
