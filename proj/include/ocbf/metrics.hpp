#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ocbf/core.hpp"

namespace ocbf {

// Polynomial fuel-rate model: cruise term w0 + w1 v + w2 v^2 + w3 v^3 plus an
// acceleration term (r0 + r1 v + r2 v^2) u counted only while accelerating.
// Defaults are the usual published fit; overridable through config.
struct FuelParams {
  double w0 = 0.1569;
  double w1 = 0.02450;
  double w2 = -0.0007415;
  double w3 = 0.00005975;
  double r0 = 0.07224;
  double r1 = 0.09681;
  double r2 = 0.001075;
};

inline double fuel_rate(double v, double u, const FuelParams& fp) {
  const double cruise = fp.w0 + v * (fp.w1 + v * (fp.w2 + v * fp.w3));
  const double accel = (fp.r0 + v * (fp.r1 + v * fp.r2)) * u;
  return cruise + std::max(0.0, accel);
}

// Scalarized cost of one traversal: convex combination of travel time and
// control energy, the energy normalized by the worst-case 1/2 u^2.
inline double objective_value(double travel_time, double half_u2_integral,
                              double alpha, const ConstraintParams& p) {
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw std::domain_error("objective_value: alpha outside [0, 1)");
  }
  const double u2 = std::max(p.u_max * p.u_max, p.u_min * p.u_min);
  return alpha * travel_time + (1.0 - alpha) * half_u2_integral / (0.5 * u2);
}

// Everything accumulated for one CAV over its full transit.
struct CavRunRecord {
  int id = 0;
  Lane lane = Lane::kMain;
  double t0 = 0.0;
  double tf = 0.0;
  double half_u2_integral = 0.0;
  double fuel = 0.0;
  // Worst margins seen by the audit; +inf when the constraint never applied.
  double min_b1 = std::numeric_limits<double>::infinity();
  double min_b2 = std::numeric_limits<double>::infinity();
};

struct RunMetrics {
  double avg_travel_time = 0.0;
  double avg_half_u2 = 0.0;
  double avg_fuel = 0.0;
  double avg_objective = 0.0;
  double min_b1 = std::numeric_limits<double>::infinity();
  double min_b2 = std::numeric_limits<double>::infinity();
  std::uint64_t qp_solved = 0;
  std::uint64_t qp_infeasible = 0;
  std::uint64_t messages = 0;
  int cav_count = 0;
};

// Per-CAV means and worst margins. The QP/message counters belong to the
// engine, which fills them after aggregation.
inline RunMetrics aggregate(const std::vector<CavRunRecord>& records,
                            double alpha, const ConstraintParams& p) {
  if (records.empty()) {
    throw std::invalid_argument("aggregate: no completed CAVs");
  }
  RunMetrics m;
  m.cav_count = static_cast<int>(records.size());
  for (const auto& r : records) {
    const double tt = r.tf - r.t0;
    m.avg_travel_time += tt;
    m.avg_half_u2 += r.half_u2_integral;
    m.avg_fuel += r.fuel;
    m.avg_objective += objective_value(tt, r.half_u2_integral, alpha, p);
    m.min_b1 = std::min(m.min_b1, r.min_b1);
    m.min_b2 = std::min(m.min_b2, r.min_b2);
  }
  const double n = static_cast<double>(m.cav_count);
  m.avg_travel_time /= n;
  m.avg_half_u2 /= n;
  m.avg_fuel /= n;
  m.avg_objective /= n;
  return m;
}

}  // namespace ocbf
