#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <utility>

#include "ocbf/core.hpp"

namespace ocbf {

// Minimum-principle solution of min beta*tf + integral 1/2 u^2 from (0, v0)
// to x(tf) = L with v(tf) and tf free: u*(t) = a*t + b_coef, u*(tf) = 0.
struct UnconstrainedPlan {
  double a = 0.0;           // [m/s^3]
  double b_coef = 0.0;      // [m/s^2]
  double tf = 0.0;          // [s] relative to CZ entry
  double v0 = 0.0;          // [m/s]
  double v_terminal = 0.0;  // [m/s]
};

// Time/energy weight conversion beta = alpha * max(u_max^2, u_min^2) / (2(1-alpha)).
inline double beta_from_alpha(double alpha, const ConstraintParams& p) {
  if (alpha < 0.0 || alpha >= 1.0) {
    throw std::domain_error("beta_from_alpha: alpha outside [0, 1)");
  }
  const double umax2 = std::max(p.u_max * p.u_max, p.u_min * p.u_min);
  return alpha * umax2 / (2.0 * (1.0 - alpha));
}

namespace detail {

// Residuals of the terminal conditions in the unknowns (tf, vf):
//   r1 = vf^2 - v0*vf - beta*tf^2/2          (free terminal speed)
//   r2 = v0*tf + beta*tf^3/(3*vf) - L        (terminal position)
inline std::pair<double, double> plan_residuals(double tf, double vf, double v0,
                                                double L, double beta) {
  return {vf * vf - v0 * vf - 0.5 * beta * tf * tf,
          v0 * tf + beta * tf * tf * tf / (3.0 * vf) - L};
}

}  // namespace detail

// Damped Newton on (tf, vf) from the cruise guess, with a bisection fallback
// on tf (vf has a closed form given tf). Returns nullopt when neither
// converges; callers fall back to a zero-acceleration reference.
inline std::optional<UnconstrainedPlan> solve_unconstrained(double v0, double L,
                                                            double beta) {
  if (!(v0 > 0.0) || !(L > 0.0) || beta < 0.0) {
    throw std::domain_error("solve_unconstrained: need v0 > 0, L > 0, beta >= 0");
  }
  if (beta == 0.0) {
    return UnconstrainedPlan{0.0, 0.0, L / v0, v0, v0};
  }

  const double tol = 1e-12;
  double tf = L / v0;
  double vf = v0;
  bool converged = false;
  for (int it = 0; it < 100; ++it) {
    const auto [r1, r2] = detail::plan_residuals(tf, vf, v0, L, beta);
    if (std::max(std::abs(r1), std::abs(r2)) < tol) {
      converged = true;
      break;
    }
    const double j11 = -beta * tf;
    const double j12 = 2.0 * vf - v0;
    const double j21 = v0 + beta * tf * tf / vf;
    const double j22 = -beta * tf * tf * tf / (3.0 * vf * vf);
    const double det = j11 * j22 - j12 * j21;
    if (std::abs(det) < 1e-14) break;
    double dtf = (-r1 * j22 + r2 * j12) / det;
    double dvf = (-r2 * j11 + r1 * j21) / det;
    // Backtrack until the residual norm drops and the iterate stays positive.
    const double base = std::hypot(r1, r2);
    double step = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      const double tf_n = tf + step * dtf;
      const double vf_n = vf + step * dvf;
      if (tf_n > 0.0 && vf_n > 0.0) {
        const auto [n1, n2] = detail::plan_residuals(tf_n, vf_n, v0, L, beta);
        if (std::hypot(n1, n2) < base) {
          tf = tf_n;
          vf = vf_n;
          accepted = true;
          break;
        }
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }

  if (!converged) {
    // g(tf) = terminal-position residual with vf eliminated is increasing.
    auto vf_of = [&](double t) {
      return 0.5 * (v0 + std::sqrt(v0 * v0 + 2.0 * beta * t * t));
    };
    auto g = [&](double t) {
      return v0 * t + beta * t * t * t / (3.0 * vf_of(t)) - L;
    };
    double a = 1e-9, b = L / v0;
    while (g(b) < 0.0 && b < 1e7) b *= 2.0;
    if (g(a) > 0.0 || g(b) < 0.0) return std::nullopt;
    for (int it = 0; it < 200; ++it) {
      const double m = 0.5 * (a + b);
      (g(m) < 0.0 ? a : b) = m;
    }
    tf = 0.5 * (a + b);
    vf = vf_of(tf);
    const auto [r1, r2] = detail::plan_residuals(tf, vf, v0, L, beta);
    if (std::max(std::abs(r1), std::abs(r2)) > 1e-8) return std::nullopt;
  }

  return UnconstrainedPlan{-beta / vf, beta * tf / vf, tf, v0, vf};
}

// Reference control and speed at elapsed time t since CZ entry; the linear
// control segment ends at tf and the reference then cruises at v_terminal.
inline std::pair<double, double> eval_ref(const UnconstrainedPlan& plan,
                                          double t) {
  if (t >= plan.tf) return {0.0, plan.v_terminal};
  const double u = plan.a * t + plan.b_coef;
  const double v = plan.v0 + plan.b_coef * t + 0.5 * plan.a * t * t;
  return {u, v};
}

}  // namespace ocbf
