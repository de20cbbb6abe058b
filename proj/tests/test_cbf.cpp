#include "ocbf/cbf.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "ocbf/random.hpp"

using namespace ocbf;

namespace {

Geometry geo;
ConstraintParams par;

double row_at(const LinearConstraint& r, double u) { return r.cu * u + r.c0; }

TEST(RearEndRow, AdmitsBrakingRoomExample) {
  // 50 m gap, closing handled by the class-K term: row -1.8 u + 19.6 >= 0.
  const auto r = build_cbf1({0.0, 18.0}, {50.0, 20.0}, par);
  EXPECT_EQ(r.sense, Sense::kGe);
  EXPECT_EQ(r.tag, ConstraintTag::kCbf1);
  EXPECT_NEAR(r.cu, -1.8, 1e-12);
  EXPECT_EQ(r.ce, 0.0);
  EXPECT_NEAR(r.c0, 19.6, 1e-12);
  EXPECT_NEAR(r.c0 / -r.cu, 10.888889, 1e-5);  // implied ceiling on u
}

TEST(RearEndRow, BoundaryAllowsOnlyBraking) {
  // Equal speeds exactly at the headway boundary: u <= 0.
  const auto r = build_cbf1({0.0, 20.0}, {36.0, 20.0}, par);
  EXPECT_NEAR(r.c0, 0.0, 1e-12);
  EXPECT_NEAR(r.cu, -1.8, 1e-12);
}

TEST(RearEndRow, ClosingAtTheBoundaryForcesBraking) {
  // b1 = 0 while closing at 5 m/s: ceiling is negative.
  const auto r = build_cbf1({0.0, 20.0}, {36.0, 15.0}, par);
  EXPECT_NEAR(r.c0, -5.0, 1e-12);
  EXPECT_NEAR(r.c0 / -r.cu, -5.0 / 1.8, 1e-9);
}

TEST(MergingRow, CoefficientsFromStateExample) {
  // Agent (200, 18), conflict (245, 20): L_f = 0.542, gamma = 28.8.
  const auto r = build_cbf2({200.0, 18.0}, {245.0, 20.0}, geo, par);
  EXPECT_NEAR(r.cu, -0.9, 1e-12);
  EXPECT_NEAR(r.c0, 29.342, 1e-12);
  EXPECT_NEAR(r.c0 / -r.cu, 32.602222, 1e-3);
}

TEST(MergingRow, ControlDropsOutAtTheEntry) {
  const auto r = build_cbf2({0.0, 18.0}, {45.0, 20.0}, geo, par);
  EXPECT_EQ(r.cu, 0.0);
  EXPECT_GT(r.c0, 0.0);
}

TEST(MergingRow, BoundaryAtTheMergePoint) {
  // x_i = L with the margin exactly zero: only the drift term remains.
  const double v = 18.0;
  const auto r = build_cbf2({400.0, v}, {400.0 + par.phi * v, v}, geo, par);
  EXPECT_NEAR(r.cu, -1.8, 1e-12);
  EXPECT_NEAR(r.c0, -1.458, 1e-12);
}

TEST(BarrierRows, MatchDirectSubstitution) {
  // Independent recomputation: each row evaluated at a random control equals
  // L_f b + L_g b u + k b assembled from scratch.
  auto rng = make_stream(301, 0);
  for (int i = 0; i < 1000; ++i) {
    const CavState yi{uniform(rng, 0.0, 400.0), uniform(rng, 0.0, 30.0)};
    const CavState yp{yi.x + uniform(rng, 0.0, 120.0), uniform(rng, 0.0, 30.0)};
    const CavState yj{uniform(rng, 0.0, 430.0), uniform(rng, 0.0, 30.0)};
    const double u = uniform(rng, -5.886, 4.905);

    const auto r1 = build_cbf1(yi, yp, par);
    const double want1 = (yp.v - yi.v) - par.phi * u +
                         par.k1 * (yp.x - yi.x - par.phi * yi.v - par.delta);
    EXPECT_NEAR(row_at(r1, u), want1, 1e-9);

    const auto r2 = build_cbf2(yi, yj, geo, par);
    const double ramp = par.phi * yi.x / geo.cz_length;
    const double want2 =
        (yj.v - yi.v - (par.phi / geo.cz_length) * yi.v * yi.v) - ramp * u +
        par.k2 * (yj.x - yi.x - ramp * yi.v - par.delta);
    EXPECT_NEAR(row_at(r2, u), want2, 1e-9);

    const auto [r3, r4] = build_speed_cbfs(yi, par);
    EXPECT_NEAR(row_at(r3, u), -u + par.k3 * (par.v_max - yi.v), 1e-9);
    EXPECT_NEAR(row_at(r4, u), u + par.k4 * (yi.v - par.v_min), 1e-9);
  }
}

TEST(BarrierRows, MatchFiniteDifferenceDrift) {
  // The constant part of each row is d/dt b + k b; check d/dt b numerically
  // by advancing both vehicles for a short step.
  auto rng = make_stream(303, 0);
  const double h = 1e-6;
  for (int i = 0; i < 300; ++i) {
    const CavState yi{uniform(rng, 1.0, 399.0), uniform(rng, 1.0, 29.0)};
    const CavState yp{yi.x + uniform(rng, 1.0, 100.0), uniform(rng, 0.0, 30.0)};
    const CavState yj{uniform(rng, 1.0, 420.0), uniform(rng, 0.0, 30.0)};
    const double u = uniform(rng, -5.0, 4.0);

    auto step = [&](const CavState& y, double a) {
      return CavState{y.x + y.v * h + 0.5 * a * h * h, y.v + a * h};
    };
    {
      const auto r = build_cbf1(yi, yp, par);
      const double db = (eval_b1(step(yi, u), step(yp, 0.0), par) -
                         eval_b1(yi, yp, par)) / h;
      EXPECT_NEAR(row_at(r, u), db + par.k1 * eval_b1(yi, yp, par), 1e-4);
    }
    if (yi.x + yi.v * h + 0.5 * u * h * h <= geo.cz_length) {
      const auto r = build_cbf2(yi, yj, geo, par);
      const double db = (eval_b2(step(yi, u), step(yj, 0.0), geo, par) -
                         eval_b2(yi, yj, geo, par)) / h;
      EXPECT_NEAR(row_at(r, u), db + par.k2 * eval_b2(yi, yj, geo, par), 1e-4);
    }
  }
}

TEST(SpeedTrackingRow, PenalizesDeviationQuadratically) {
  // v = 20 tracking 18: 4u + 40 <= e.
  auto r = build_clf({0.0, 20.0}, 18.0, par);
  EXPECT_EQ(r.sense, Sense::kLe);
  EXPECT_NEAR(r.cu, 4.0, 1e-12);
  EXPECT_EQ(r.ce, -1.0);
  EXPECT_NEAR(r.c0, 40.0, 1e-12);
  // Mirror case from below.
  r = build_clf({0.0, 16.0}, 18.0, par);
  EXPECT_NEAR(r.cu, -4.0, 1e-12);
  EXPECT_NEAR(r.c0, 40.0, 1e-12);
  // On the reference the row is inactive for any u.
  r = build_clf({0.0, 18.0}, 18.0, par);
  EXPECT_EQ(r.cu, 0.0);
  EXPECT_EQ(r.c0, 0.0);
}

TEST(AssembledQp, RowCountTracksPresentNeighbors) {
  CavAgent agent;
  agent.state = {100.0, 18.0};
  agent.t0 = 0.0;
  const auto plan = solve_unconstrained(18.0, 400.0, 5.0);
  ASSERT_TRUE(plan.has_value());

  const auto lead = assemble_qp(agent, std::nullopt, std::nullopt, *plan, 1.0,
                                par, geo);
  ASSERT_EQ(lead.constraints.size(), 5u);
  EXPECT_EQ(lead.constraints[0].tag, ConstraintTag::kCbf3);
  EXPECT_EQ(lead.constraints[1].tag, ConstraintTag::kCbf4);
  EXPECT_EQ(lead.constraints[2].tag, ConstraintTag::kClf);
  EXPECT_EQ(lead.constraints[3].tag, ConstraintTag::kUmin);
  EXPECT_EQ(lead.constraints[4].tag, ConstraintTag::kUmax);
  EXPECT_TRUE(lead.has_slack);

  const auto full = assemble_qp(agent, CavState{150.0, 19.0},
                                CavState{160.0, 20.0}, *plan, 1.0, par, geo);
  ASSERT_EQ(full.constraints.size(), 7u);
  EXPECT_EQ(full.constraints[0].tag, ConstraintTag::kCbf1);
  EXPECT_EQ(full.constraints[1].tag, ConstraintTag::kCbf2);

  const auto bare = assemble_qp(agent, CavState{150.0, 19.0}, std::nullopt,
                                *plan, 1.0, par, geo, false);
  ASSERT_EQ(bare.constraints.size(), 5u);
  EXPECT_FALSE(bare.has_slack);
  for (const auto& r : bare.constraints) {
    EXPECT_NE(r.tag, ConstraintTag::kClf);
    EXPECT_EQ(r.ce, 0.0);
  }
}

TEST(AssembledQp, ReferenceComesFromElapsedTime) {
  CavAgent agent;
  agent.state = {0.0, 17.5};
  agent.t0 = 12.0;
  const auto plan = solve_unconstrained(17.5, 400.0, 5.0);
  ASSERT_TRUE(plan.has_value());
  const auto qp = assemble_qp(agent, std::nullopt, std::nullopt, *plan, 12.0,
                              par, geo);
  EXPECT_NEAR(qp.u_ref, plan->b_coef, 1e-12);  // entry instant: t - t0 = 0
  const auto later = assemble_qp(agent, std::nullopt, std::nullopt, *plan,
                                 12.0 + plan->tf, par, geo);
  EXPECT_NEAR(later.u_ref, 0.0, 1e-9);
}

}  // namespace
