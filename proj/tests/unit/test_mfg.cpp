#include <cmath>

#include "doctest.h"
#include "weakgame/mfg.hpp"

using namespace weakgame;
using namespace weakgame::mfg;

namespace {

GameSpec population(double x0, double k = 0.0) {
  GameSpec s;
  s.kind = GameKind::kMeanField;
  s.n_players = 1;
  s.x0 = x0;
  s.dissipation = k;
  return s;
}

ControlPath oracle_feedback(const MfgClosedForm& cf) {
  return ControlPath::feedback([&cf](std::size_t node, double, const Matrix& x) { return cf.feedback(node, x); }, 1);
}

Numerics reduced(std::size_t paths = 20'000) {
  Numerics n;
  n.n_paths = paths;
  return n;
}

}  // namespace

TEST_CASE("driver and control") {
  CHECK(mfg_driver(0.3, 0, 0.7) == 0.7);
  CHECK(mfg_driver(0.3, 2, 0) == -2.0);
  CHECK(argmin_control(3) == -3.0);
}

TEST_CASE("closed form") {
  const TimeGrid grid = make_time_grid(1.0, 50);
  SUBCASE("k = 0, x0 = 1") {
    const MfgClosedForm cf = mfg_closed_form(population(1.0), grid);
    CHECK(cf.A.front() == doctest::Approx(1.0 / 3.0).epsilon(1e-10));
    CHECK(cf.m.back() == doctest::Approx(1.0 / 3.0).epsilon(1e-10));
    for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
      const double tau = 1.0 - grid.t(k);
      CHECK(cf.m[k] == doctest::Approx((1.0 + 2.0 * tau) / 3.0).epsilon(1e-9));
    }
    CHECK(cf.value == doctest::Approx(cf.A.front() + cf.D.front()));
  }
  SUBCASE("x0 = 0 decouples") {
    const MfgClosedForm cf = mfg_closed_form(population(0.0), grid);
    for (double m : cf.m) CHECK(m == 0.0);
    CHECK(cf.value == doctest::Approx(0.5 * std::log(3.0)).epsilon(1e-9));
  }
  SUBCASE("csv layout") {
    const std::string csv = mfg_closed_form(population(1.0), make_time_grid(1.0, 3)).csv();
    CHECK(csv.rfind("t,m,A,D\n", 0) == 0);
  }
}

TEST_CASE("mean flows") {
  const TimeGrid grid = make_time_grid(1.0, 50);
  SUBCASE("no control, k = 0") {
    const MeanFlow m = mean_flow_from_feedback(population(0.8), grid, ControlPath::zero(1), 2'000, 3);
    for (double v : m.values) CHECK(v == doctest::Approx(0.8).epsilon(1e-12));
  }
  SUBCASE("no control, k = 1") {
    // Euler mean (1 - k dt)^K; the continuous mean e^{-1} is 1% away at 50 steps.
    const MeanFlow m = mean_flow_from_feedback(population(1.0, 1.0), grid, ControlPath::zero(1), 20'000, 3);
    CHECK(std::abs(m.values.back() - std::pow(0.98, 50)) <= 3.0 * m.se.back() + 1e-12);
    CHECK(m.values.back() == doctest::Approx(std::exp(-1.0)).epsilon(0.02));
  }
  SUBCASE("oracle feedback") {
    const MfgClosedForm cf = mfg_closed_form(population(1.0), grid);
    const MeanFlow m = mean_flow_from_feedback(population(1.0), grid, oracle_feedback(cf), 20'000, 3);
    CHECK(std::abs(m.values.back() - 1.0 / 3.0) <= 3.0 * m.se.back() + 1e-9);
  }
  SUBCASE("odd path counts are rejected") {
    CHECK_THROWS_AS(mean_flow_from_feedback(population(1.0), grid, ControlPath::zero(1), 101, 3), InvalidArgument);
  }
}

TEST_CASE("consistency residual") {
  const TimeGrid grid = make_time_grid(1.0, 50);
  const GameSpec s = population(1.0);
  const MfgClosedForm cf = mfg_closed_form(s, grid);
  const FixedPointOptions fp;
  SUBCASE("oracle flow and feedback") {
    const ConsistencyCheck c = consistency_residual(s, cf.flow(), oracle_feedback(cf), 20'000, 5);
    CHECK(c.residual <= std::max(fp.tol, 3.0 * c.max_se));
  }
  SUBCASE("shifted flow") {
    MeanFlow wrong = cf.flow();
    for (double& v : wrong.values) v += 0.5;
    CHECK(consistency_residual(s, wrong, oracle_feedback(cf), 20'000, 5).residual >= 0.4);
  }
}

TEST_CASE("fixed point, k = 0, x0 = 1") {
  const GameSpec s = population(1.0);
  const MFGSolution sol = solve_mfg_fixed_point(s, reduced(40'000));
  const MfgClosedForm cf = mfg_closed_form(s, sol.solution->grid);
  CHECK(sol.value.mean == doctest::Approx(cf.value).epsilon(0.02));
  CHECK(sol.iterations() <= 20);
  CHECK(sol.consistency.residual <= std::max(sol.options.tol, 3.0 * sol.consistency.max_se));
  for (std::size_t i = 2; i < sol.trace.size(); ++i) {
    CHECK(sol.trace[i].update <= sol.trace[i - 1].update + 2.0 * sol.flow.max_se());
  }

  // The feedback is linear in x with slope -2A(t).
  const PathBundle& b = *sol.bundle;
  double rel = 0.0, worst_intercept = 0.0;
  const std::size_t K = sol.solution->grid.n_steps;
  for (std::size_t k = 1; k < K; ++k) {
    const Matrix& x = b.states(k);
    const Matrix a = sol.feedback_values(k, x);
    Matrix F(x.rows(), 2);
    F.col(0).setOnes();
    F.col(1) = x.col(0);
    const Vector beta = regress(a.col(0), F);
    rel += std::abs(beta(1) + 2.0 * cf.A[k]) / (2.0 * cf.A[k]) / static_cast<double>(K - 1);
    worst_intercept = std::max(worst_intercept, std::abs(beta(0)));
  }
  CHECK(rel <= 0.05);
  CHECK(worst_intercept <= 0.05);
}

TEST_CASE("fixed point, x0 = 0") {
  const GameSpec s = population(0.0);
  const MFGSolution sol = solve_mfg_fixed_point(s, reduced());
  for (double m : sol.flow.values) CHECK(std::abs(m) <= 0.01);
  CHECK(sol.value.mean == doctest::Approx(0.5 * std::log(3.0)).epsilon(0.02));
  CHECK(sol.consistency.residual <= std::max(sol.options.tol, 3.0 * sol.consistency.max_se));
}

TEST_CASE("damping does not change the equilibrium") {
  const GameSpec s = population(1.0, 1.0);
  FixedPointOptions slow, fast;
  slow.damping = 0.25;
  fast.damping = 1.0;
  const MFGSolution a = solve_mfg_fixed_point(s, reduced(10'000), slow);
  const MFGSolution b = solve_mfg_fixed_point(s, reduced(10'000), fast);
  CHECK(std::abs(a.value.mean - b.value.mean) <= 3.0 * std::hypot(a.value.se, b.value.se));
}

TEST_CASE("iteration failure carries the trace") {
  FixedPointOptions o;
  o.max_iter = 2;
  try {
    solve_mfg_fixed_point(population(1.0), reduced(4'000), o);
    FAIL("expected IterationFailure");
  } catch (const IterationFailure& e) {
    CHECK(e.trace().size() == 2);
  }
}
