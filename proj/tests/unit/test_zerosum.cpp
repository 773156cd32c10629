#include <cmath>

#include "doctest.h"
#include "weakgame/zerosum.hpp"

using namespace weakgame;
using namespace weakgame::zerosum;

namespace {

GameSpec saddle_spec(double T, double x0) {
  GameSpec s;
  s.kind = GameKind::kZeroSum;
  s.horizon = T;
  s.x0 = x0;
  return s;
}

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = a + (b - a) * i / (n - 1);
  return v;
}

}  // namespace

TEST_CASE("running criteria") {
  CHECK(h1(0, 0, 0, 0) == 0.0);
  CHECK(h1(0, 1, 2, 3) == 2.5);
  CHECK(h2(0, 1, 2, 3) == 7.5);
  for (double x : {-1.0, 0.0, 2.0}) {
    for (double z : {-2.0, 0.5}) {
      CHECK(h2(x, z, 0.3, -1.7) == doctest::Approx(-h1(x, -z, 0.3, -1.7)));
    }
  }
}

TEST_CASE("Hamiltonians") {
  CHECK(H1(1, 2, 3) == 0.5);
  for (double x : {-3.0, 0.0, 1.5}) CHECK(H1(x, 0, 0) == x);
  const auto grid = linspace(-10, 10, 1001);
  double best = 1e300, arg = 0;
  for (double u : grid) {
    if (h1(1, 2, u, 3) < best) best = h1(1, 2, u, 3), arg = u;
  }
  CHECK(arg == doctest::Approx(-2.0));
  CHECK(best == doctest::Approx(0.5));
}

TEST_CASE("the best response minimizes h1 on a grid") {
  const auto grid = linspace(-10, 10, 1000);
  for (double x : {-1.0, 2.0}) {
    for (double z : {-3.0, 0.0, 1.25}) {
      for (double v : {-2.0, 0.7}) {
        const double at_min = h1(x, z, argmin_u(x, z, v), v);
        for (double u : grid) REQUIRE(at_min <= h1(x, z, u, v) + 1e-12);
      }
    }
  }
}

TEST_CASE("upper and lower Hamiltonians coincide") {
  CHECK(H_minus(5, 17) == 5.0);
  for (double x : linspace(-5, 5, 10)) {
    for (double z : linspace(-20, 20, 100)) {
      REQUIRE(H_plus(x, z) == x);
      REQUIRE(H_minus(x, z) == x);
      REQUIRE(isaacs_gap(x, z) == 0.0);
    }
  }
}

TEST_CASE("nested grid search reproduces the value") {
  const auto grid = linspace(-10, 10, 1000);
  double inf_sup = 1e300;
  for (double u : grid) {
    double sup = -1e300;
    for (double v : grid) sup = std::max(sup, h1(1, 2, u, v));
    inf_sup = std::min(inf_sup, sup);
  }
  CHECK(std::abs(inf_sup - 1.0) <= 1e-2);
}

TEST_CASE("Nash fixed point") {
  const ControlPair p = nash_fixed_point(0.4, 2, -3);
  CHECK(p.u == -2.0);
  CHECK(p.v == 3.0);
  const ControlPair zero = nash_fixed_point(0.4, 0, 0);
  CHECK(zero.u == 0.0);
  CHECK(zero.v == 0.0);
  const ControlPair q = nash_fixed_point(1, 2, -3);
  CHECK(std::abs(H1(1, 2, q.v) - h1(1, 2, q.u, q.v)) <= 1e-12);
}

TEST_CASE("closed form") {
  CHECK(closed_form(0, 0, 1).y == 1.0);
  CHECK(closed_form(0, 0, 1).z == 1.0);
  CHECK(closed_form(1, 0.7, 1).y == doctest::Approx(0.49));
  CHECK(closed_form(1, 0.7, 1).z == doctest::Approx(1.4));
  CHECK(closed_form(0, 1, 2).y == 5.0);
  CHECK(closed_form(0, 1, 2).z == 4.0);
}

TEST_CASE("saddle value from the BSDE") {
  const Numerics n;
  SUBCASE("T = 1, x0 = 0") {
    const SaddleReport r = solve_saddle(saddle_spec(1, 0), n);
    CHECK(r.y0 == doctest::Approx(1.0).epsilon(0.02));
    CHECK(r.v_plus == r.v_minus);
  }
  SUBCASE("T = 1, x0 = 1") {
    const SaddleReport r = solve_saddle(saddle_spec(1, 1), n);
    CHECK(r.y0 == doctest::Approx(3.0).epsilon(0.02));
    CHECK(r.z0 == doctest::Approx(3.0).epsilon(0.05));
    const Estimate cost = reweighted_cost(*r.bundle, r.saddle_controls(), zero_sum_cost());
    CHECK(std::abs(cost.mean - 3.0) <= 0.02 * 3.0);
  }
  SUBCASE("T = 2, x0 = 1") {
    const SaddleReport r = solve_saddle(saddle_spec(2, 1), n);
    CHECK(r.exact.y == 5.0);
    CHECK(r.y0 == doctest::Approx(5.0).epsilon(0.02));
    CHECK(r.z0 == doctest::Approx(4.0).epsilon(0.05));
  }
}

TEST_CASE("unilateral deviations from the saddle") {
  const SaddleReport r = solve_saddle(saddle_spec(1, 1), Numerics{});
  const std::vector<Perturbation> family = {{Perturbation::Kind::kShift, 0.0},
                                            {Perturbation::Kind::kShift, 0.5}};
  const auto rows = deviation_test(r, family);
  REQUIRE(rows.size() == 4);
  for (const DeviationRow& row : rows) {
    CAPTURE(row.player);
    CAPTURE(row.perturbation.label());
    if (row.perturbation.is_identity()) {
      CHECK(row.gap.mean == 0.0);
    } else if (row.player == 1) {
      CHECK(row.gap.mean > row.epsilon);
    } else {
      CHECK(row.gap.mean < -row.epsilon);
    }
  }
  for (const DeviationRow& row : deviation_test(r, default_perturbations())) CHECK(row.holds);
}

TEST_CASE("two-player Nash system") {
  const GameSpec s = saddle_spec(1, 1);
  SUBCASE("value and anti-symmetry") {
    const NashSystemReport r = solve_nash_system_2p(s, Numerics{});
    CHECK(r.y1_0 == doctest::Approx(closed_form(0, 1, 1).y).epsilon(0.02));
    CHECK(r.antisymmetry <= 0.02 * r.max_abs_y1);
  }
  SUBCASE("terminal values") {
    Numerics n;
    n.n_paths = 5'000;
    n.bsde.store_paths = true;
    const NashSystemReport r = solve_nash_system_2p(s, n);
    const Matrix& yT = r.solution->y_paths.back();
    const PathBundle b = simulate_reference(s, make_time_grid(1, n.n_steps), n.n_paths, n.seed);
    const Vector x2 = b.states(n.n_steps).col(0).array().square();
    CHECK(yT.col(0) == x2);
    CHECK(yT.col(1) == -x2);
  }
}
