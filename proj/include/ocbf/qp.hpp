#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string_view>
#include <vector>

namespace ocbf {

enum class ConstraintTag : std::uint8_t {
  kCbf1,  // rear-end barrier row
  kCbf2,  // merging barrier row
  kCbf3,  // v_max barrier row
  kCbf4,  // v_min barrier row
  kClf,   // speed-tracking row (soft, slack e)
  kUmin,
  kUmax,
};

inline std::string_view to_string(ConstraintTag t) {
  switch (t) {
    case ConstraintTag::kCbf1: return "CBF1";
    case ConstraintTag::kCbf2: return "CBF2";
    case ConstraintTag::kCbf3: return "CBF3";
    case ConstraintTag::kCbf4: return "CBF4";
    case ConstraintTag::kClf: return "CLF";
    case ConstraintTag::kUmin: return "UMIN";
    case ConstraintTag::kUmax: return "UMAX";
  }
  return "?";
}

enum class Sense : std::uint8_t { kGe, kLe };

// cu*u + ce*e + c0 (sense) 0. Barrier and control-bound rows have ce = 0.
struct LinearConstraint {
  double cu = 0.0;
  double ce = 0.0;
  double c0 = 0.0;
  Sense sense = Sense::kGe;
  ConstraintTag tag = ConstraintTag::kCbf1;
};

enum class QpStatus : std::uint8_t { kOptimal, kInfeasible };

// min 1/2 (u - u_ref)^2 + lambda e^2 over the listed rows. When has_slack is
// false the e column is absent (e fixed to 0) and CLF rows are not expected.
struct QpProblem {
  double u_ref = 0.0;
  double lambda = 10.0;
  bool has_slack = true;
  std::vector<LinearConstraint> constraints;
};

struct QpSolution {
  double u = 0.0;
  double e = 0.0;
  QpStatus status = QpStatus::kInfeasible;
  std::vector<ConstraintTag> active_set;  // rows tight at the solution
};

namespace detail {

constexpr double kFeasTol = 1e-9;

// Row in standard form g = a*u + b*e + c >= 0.
struct StdRow {
  double a, b, c;
  ConstraintTag tag;
};

inline std::vector<StdRow> standardize(const QpProblem& qp) {
  std::vector<StdRow> rows;
  rows.reserve(qp.constraints.size());
  for (const auto& lc : qp.constraints) {
    const double sgn = lc.sense == Sense::kGe ? 1.0 : -1.0;
    rows.push_back({sgn * lc.cu, sgn * lc.ce, sgn * lc.c0, lc.tag});
  }
  return rows;
}

inline double eval_row(const StdRow& r, double u, double e) {
  return r.a * u + r.b * e + r.c;
}

inline bool feasible_point(const std::vector<StdRow>& rows, double u, double e) {
  for (const auto& r : rows) {
    if (eval_row(r, u, e) < -kFeasTol) return false;
  }
  return true;
}

inline double objective(const QpProblem& qp, double u, double e) {
  const double du = u - qp.u_ref;
  return 0.5 * du * du + qp.lambda * e * e;
}

inline std::vector<ConstraintTag> tags_at(const std::vector<StdRow>& rows,
                                          double u, double e) {
  std::vector<ConstraintTag> tags;
  for (const auto& r : rows) {
    if (std::abs(eval_row(r, u, e)) <= 1e-7) tags.push_back(r.tag);
  }
  return tags;
}

// One-variable specialization: intersect the u-intervals and project u_ref.
inline QpSolution solve_interval(const QpProblem& qp,
                                 const std::vector<StdRow>& rows) {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (const auto& r : rows) {
    if (std::abs(r.a) <= 1e-14) {
      if (r.c < -kFeasTol) return {0.0, 0.0, QpStatus::kInfeasible, {}};
      continue;
    }
    const double bound = -r.c / r.a;
    if (r.a > 0.0) {
      lo = std::max(lo, bound);
    } else {
      hi = std::min(hi, bound);
    }
  }
  if (lo > hi + kFeasTol) return {0.0, 0.0, QpStatus::kInfeasible, {}};
  const double u = std::clamp(qp.u_ref, std::min(lo, hi), hi);
  return {u, 0.0, QpStatus::kOptimal, tags_at(rows, u, 0.0)};
}

}  // namespace detail

// Global optimum of the strictly convex 2-variable QP by exhaustive
// active-set enumeration: at most two rows can be tight at the optimum of a
// 2-d problem, so every equality-constrained candidate is solved in closed
// form and screened by feasibility plus nonnegative multipliers. Candidates
// are visited in lexicographic active-set order, which fixes tie-breaking.
inline QpSolution solve(const QpProblem& qp) {
  using namespace detail;
  const auto rows = standardize(qp);

  for (const auto& r : rows) {
    // Constant rows decide feasibility on their own.
    if (std::abs(r.a) <= 1e-14 && std::abs(r.b) <= 1e-14 && r.c < -kFeasTol) {
      return {0.0, 0.0, QpStatus::kInfeasible, {}};
    }
  }
  if (!qp.has_slack) return solve_interval(qp, rows);

  const double lam2 = 2.0 * qp.lambda;
  bool found = false;
  double best_u = 0.0, best_e = 0.0, best_f = 0.0;

  auto consider = [&](double u, double e) {
    if (!std::isfinite(u) || !std::isfinite(e)) return;
    if (!feasible_point(rows, u, e)) return;
    const double f = objective(qp, u, e);
    if (!found || f < best_f - 1e-15) {
      found = true;
      best_u = u;
      best_e = e;
      best_f = f;
    }
  };

  // Unconstrained stationary point.
  consider(qp.u_ref, 0.0);

  // One tight row: grad f = mu * grad g with mu >= 0.
  for (const auto& r : rows) {
    const double denom = r.a * r.a + r.b * r.b / lam2;
    if (denom <= 1e-14) continue;
    const double mu = -(r.a * qp.u_ref + r.c) / denom;
    if (mu < -kFeasTol) continue;
    consider(qp.u_ref + mu * r.a, mu * r.b / lam2);
  }

  // Two tight rows: vertex of the pair, multipliers from stationarity.
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t k = i + 1; k < rows.size(); ++k) {
      const auto& ri = rows[i];
      const auto& rk = rows[k];
      const double det = ri.a * rk.b - rk.a * ri.b;
      if (std::abs(det) <= 1e-12) continue;
      const double u = (-ri.c * rk.b + rk.c * ri.b) / det;
      const double e = (-rk.c * ri.a + ri.c * rk.a) / det;
      // [a_i a_k; b_i b_k] [mu_i; mu_k] = [u - u_ref; 2 lambda e]
      const double g1 = u - qp.u_ref;
      const double g2 = lam2 * e;
      const double mu_i = (g1 * rk.b - g2 * rk.a) / det;
      const double mu_k = (ri.a * g2 - ri.b * g1) / det;
      if (mu_i < -kFeasTol || mu_k < -kFeasTol) continue;
      consider(u, e);
    }
  }

  if (!found) return {0.0, 0.0, QpStatus::kInfeasible, {}};
  return {best_u, best_e, QpStatus::kOptimal, tags_at(rows, best_u, best_e)};
}

// Infeasibility fallback: least-squares violation of the barrier rows over
// the hard control interval, so the plant always receives some control. The
// slack row is satisfied exactly through e and contributes no violation.
// Among equal-violation controls the one closest to the clamped u_ref wins.
// Status stays kInfeasible so the caller's accounting is unaffected.
inline QpSolution solve_relaxed(const QpProblem& qp) {
  using namespace detail;
  const auto rows = standardize(qp);

  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  std::vector<StdRow> soft;   // ce == 0 rows other than the control bounds
  std::vector<StdRow> slackr; // rows involving e
  for (const auto& r : rows) {
    if (r.tag == ConstraintTag::kUmin || r.tag == ConstraintTag::kUmax) {
      if (std::abs(r.a) > 1e-14) {
        const double bound = -r.c / r.a;
        if (r.a > 0.0) lo = std::max(lo, bound);
        else hi = std::min(hi, bound);
      }
    } else if (std::abs(r.b) > 1e-14) {
      slackr.push_back(r);
    } else {
      soft.push_back(r);
    }
  }
  if (!std::isfinite(lo)) lo = -1e6;
  if (!std::isfinite(hi)) hi = 1e6;
  if (lo > hi) std::swap(lo, hi);

  auto violation_sq = [&](double u) {
    double f = 0.0;
    for (const auto& r : soft) {
      const double g = r.a * u + r.c;
      if (g < 0.0) f += g * g;
    }
    return f;
  };

  // Knots: interval ends plus every row's zero crossing; per-piece quadratic
  // vertices complete the candidate set of a convex piecewise quadratic.
  std::vector<double> cand{lo, hi};
  for (const auto& r : soft) {
    if (std::abs(r.a) > 1e-14) {
      const double z = -r.c / r.a;
      if (z > lo && z < hi) cand.push_back(z);
    }
  }
  std::sort(cand.begin(), cand.end());
  const std::size_t n_knots = cand.size();
  for (std::size_t i = 0; i + 1 < n_knots; ++i) {
    const double mid = 0.5 * (cand[i] + cand[i + 1]);
    double A = 0.0, B = 0.0;
    for (const auto& r : soft) {
      if (r.a * mid + r.c < 0.0) {
        A += r.a * r.a;
        B += 2.0 * r.a * r.c;
      }
    }
    if (A > 1e-14) {
      const double v = std::clamp(-B / (2.0 * A), cand[i], cand[i + 1]);
      cand.push_back(v);
    }
  }

  double fstar = std::numeric_limits<double>::infinity();
  for (double u : cand) fstar = std::min(fstar, violation_sq(u));
  double arg_lo = std::numeric_limits<double>::infinity();
  double arg_hi = -std::numeric_limits<double>::infinity();
  for (double u : cand) {
    if (violation_sq(u) <= fstar + 1e-12 * (1.0 + fstar)) {
      arg_lo = std::min(arg_lo, u);
      arg_hi = std::max(arg_hi, u);
    }
  }
  const double u = std::clamp(std::clamp(qp.u_ref, lo, hi), arg_lo, arg_hi);

  // Natural slack value at the chosen control.
  double e = 0.0;
  if (qp.has_slack) {
    double e_lo = -std::numeric_limits<double>::infinity();
    double e_hi = std::numeric_limits<double>::infinity();
    for (const auto& r : slackr) {
      const double bound = -(r.a * u + r.c) / r.b;
      if (r.b > 0.0) e_lo = std::max(e_lo, bound);
      else e_hi = std::min(e_hi, bound);
    }
    if (e_lo <= e_hi) e = std::clamp(0.0, e_lo, e_hi);
    else e = 0.5 * (e_lo + e_hi);
  }

  return {u, e, QpStatus::kInfeasible, tags_at(rows, u, e)};
}

}  // namespace ocbf
