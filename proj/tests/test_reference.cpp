#include "ocbf/reference.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

#include "ocbf/random.hpp"
#include "oracles.hpp"

using namespace ocbf;

namespace {

TEST(TimeEnergyWeight, MatchesTheNormalizedTradeoff) {
  ConstraintParams p;
  // u_min dominates: max(u_max^2, u_min^2) = 5.886^2 = 34.644996.
  EXPECT_NEAR(beta_from_alpha(0.25, p), 5.774166, 1e-5);
  EXPECT_NEAR(beta_from_alpha(0.5, p), 17.322498, 1e-5);
  EXPECT_NEAR(beta_from_alpha(0.0, p), 0.0, 1e-12);
  EXPECT_THROW(beta_from_alpha(1.0, p), std::domain_error);
  EXPECT_THROW(beta_from_alpha(-0.1, p), std::domain_error);
}

TEST(Planner, ZeroWeightMeansCruise) {
  const auto plan = solve_unconstrained(17.5, 400.0, 0.0);
  ASSERT_TRUE(plan.has_value());
  EXPECT_EQ(plan->a, 0.0);
  EXPECT_EQ(plan->b_coef, 0.0);
  EXPECT_NEAR(plan->tf, 400.0 / 17.5, 1e-12);
  EXPECT_NEAR(plan->v_terminal, 17.5, 1e-12);
}

TEST(Planner, TerminalControlVanishes) {
  auto rng = make_stream(201, 0);
  for (int i = 0; i < 100; ++i) {
    const double v0 = uniform(rng, 15.0, 20.0);
    const double beta = uniform(rng, 0.0, 30.0);
    const auto plan = solve_unconstrained(v0, 400.0, beta);
    ASSERT_TRUE(plan.has_value());
    EXPECT_NEAR(plan->a * plan->tf + plan->b_coef, 0.0, 1e-9);
  }
}

TEST(Planner, ResidualsAndForwardIntegration) {
  const double beta = 5.7742;
  const auto plan = solve_unconstrained(17.5, 400.0, beta);
  ASSERT_TRUE(plan.has_value());
  const auto res = detail::plan_residuals(plan->tf, plan->v_terminal, 17.5,
                                          400.0, beta);
  EXPECT_LT(std::abs(res.first), 1e-10);
  EXPECT_LT(std::abs(res.second), 1e-10);
  // A plan that solves the boundary-value problem must also pass a plain
  // forward integration of the linear control law.
  const auto end = oracles::integrate_plan(*plan, plan->tf);
  EXPECT_NEAR(end.x, 400.0, 1e-8);
  EXPECT_NEAR(end.v, plan->v_terminal, 1e-8);
}

TEST(Planner, ForwardIntegrationAcrossTheOperatingRange) {
  ConstraintParams p;
  for (double v0 = 15.0; v0 <= 20.0 + 1e-9; v0 += 0.5) {
    for (double alpha : {0.1, 0.25, 0.4, 0.5}) {
      const double beta = beta_from_alpha(alpha, p);
      const auto plan = solve_unconstrained(v0, 400.0, beta);
      ASSERT_TRUE(plan.has_value()) << "v0=" << v0 << " alpha=" << alpha;
      const auto end = oracles::integrate_plan(*plan, plan->tf);
      EXPECT_NEAR(end.x, 400.0, 1e-6);
      EXPECT_NEAR(end.v, plan->v_terminal, 1e-6);
      EXPECT_GT(plan->v_terminal, plan->v0);  // speeding up saves time
    }
  }
}

TEST(Planner, BeatsPerturbedLinearProfiles) {
  const double v0 = 17.0, L = 400.0, beta = 5.0;
  const auto plan = solve_unconstrained(v0, L, beta);
  ASSERT_TRUE(plan.has_value());
  const double cost_star =
      beta * plan->tf + oracles::linear_profile_energy(plan->a, plan->b_coef, plan->tf);

  auto rng = make_stream(203, 0);
  for (int i = 0; i < 50; ++i) {
    // Any other linear profile that also covers L in time T costs at least
    // as much.
    const double T = plan->tf * uniform(rng, 0.8, 1.2);
    const double a = plan->a + uniform(rng, -0.05, 0.05);
    const double b = (L - v0 * T - a * T * T * T / 6.0) / (0.5 * T * T);
    const double cost = beta * T + oracles::linear_profile_energy(a, b, T);
    EXPECT_LE(cost_star, cost + 1e-9) << "perturbation " << i;
  }
}

TEST(Planner, HigherWeightShortensTheTrip) {
  double prev_tf = 1e100;
  for (double beta : {0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0}) {
    const auto plan = solve_unconstrained(17.5, 400.0, beta);
    ASSERT_TRUE(plan.has_value());
    EXPECT_LE(plan->tf, prev_tf + 1e-9);
    prev_tf = plan->tf;
  }
}

TEST(Planner, ReferenceSpeedIntegratesToTheZoneLength) {
  auto rng = make_stream(205, 0);
  for (int i = 0; i < 20; ++i) {
    const double v0 = uniform(rng, 15.0, 20.0);
    const double beta = uniform(rng, 0.0, 20.0);
    const auto plan = solve_unconstrained(v0, 400.0, beta);
    ASSERT_TRUE(plan.has_value());
    const int n = 20000;
    const double h = plan->tf / n;
    double area = 0.0;
    for (int k = 0; k < n; ++k) {
      const double v1 = eval_ref(*plan, k * h).second;
      const double v2 = eval_ref(*plan, (k + 1) * h).second;
      area += 0.5 * (v1 + v2) * h;
    }
    EXPECT_NEAR(area, 400.0, 1e-4 * 400.0);
  }
}

TEST(ReferenceSignal, LinearRampExamples) {
  const auto plan = solve_unconstrained(17.5, 400.0, 5.7742);
  ASSERT_TRUE(plan.has_value());
  EXPECT_NEAR(eval_ref(*plan, 0.0).first, plan->b_coef, 1e-12);
  EXPECT_NEAR(eval_ref(*plan, plan->tf).first, 0.0, 1e-9);
  EXPECT_NEAR(eval_ref(*plan, plan->tf / 2.0).first, plan->b_coef / 2.0, 1e-9);
  // Past the horizon the reference holds the terminal speed at zero input.
  const auto after = eval_ref(*plan, plan->tf + 3.0);
  EXPECT_EQ(after.first, 0.0);
  EXPECT_NEAR(after.second, plan->v_terminal, 1e-12);
}

TEST(Planner, RejectsBadArguments) {
  EXPECT_THROW(solve_unconstrained(0.0, 400.0, 1.0), std::domain_error);
  EXPECT_THROW(solve_unconstrained(-5.0, 400.0, 1.0), std::domain_error);
  EXPECT_THROW(solve_unconstrained(17.5, 0.0, 1.0), std::domain_error);
  EXPECT_THROW(solve_unconstrained(17.5, 400.0, -1.0), std::domain_error);
}

}  // namespace
