#include <cmath>
#include <random>

#include "doctest.h"
#include "weakgame/bsde.hpp"

using namespace weakgame;

namespace {

GameSpec scalar(double x0) {
  GameSpec s;
  s.kind = GameKind::kMeanField;
  s.n_players = 1;
  s.x0 = x0;
  return s;
}

std::shared_ptr<const Driver> scalar_driver(std::function<double(double t, double x)> f) {
  return std::make_shared<FunctionDriver>(
      1, 1, [f](std::size_t, double t, std::span<const double> x, const Matrix&, std::span<double> out) {
        out[0] = f(t, x[0]);
      });
}

Matrix squares(const Matrix& x) { return x.col(0).array().square().matrix(); }

BSDESolution solve_scalar(double x0, std::size_t n_steps, std::size_t n_paths,
                          std::function<double(double, double)> f, TerminalFn g, bool store = false) {
  const TimeGrid grid = make_time_grid(1.0, n_steps);
  const PathBundle b = simulate_reference(scalar(x0), grid, n_paths, 2024);
  BsdeOptions o;
  o.store_paths = store;
  return solve_backward(b, scalar_driver(std::move(f)), g, std::make_shared<QuadraticBasis>(1), o);
}

}  // namespace

TEST_CASE("regress") {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> normal;
  const int n = 1000;
  Matrix F(n, 3);
  for (int p = 0; p < n; ++p) {
    const double x = normal(gen);
    F.row(p) << 1.0, x, x * x;
  }
  SUBCASE("a feature column is recovered with a unit coefficient") {
    const Vector beta = regress(F.col(2), F);
    CHECK(beta(2) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::abs(beta(0)) <= 1e-8);
    CHECK(std::abs(beta(1)) <= 1e-8);
  }
  SUBCASE("constants") {
    const Vector beta = regress(Vector::Constant(n, 2.5), F);
    CHECK(beta(0) == doctest::Approx(2.5).epsilon(1e-6));
  }
  SUBCASE("affine data on {1, x}") {
    const Matrix G = F.leftCols(2);
    const Vector beta = regress((2.0 * G.col(1).array() + 3.0).matrix(), G);
    CHECK(std::abs(beta(0) - 3.0) <= 1e-6);
    CHECK(std::abs(beta(1) - 2.0) <= 1e-6);
  }
  SUBCASE("too few rows") {
    CHECK_THROWS_AS(regress(Vector::Ones(20), F), InvalidArgument);
  }
}

TEST_CASE("martingale terminal: Y = X and Z = 1") {
  const BSDESolution s = solve_scalar(0.5, 50, 100'000, [](double, double) { return 0.0; },
                                      [](const Matrix& x) { return Matrix(x.col(0)); });
  const PathBundle b = simulate_reference(scalar(0.5), make_time_grid(1.0, 50), 100'000, 2024);
  double worst = 0.0, z_avg = 0.0;
  for (std::size_t k = 0; k < 50; ++k) {
    const Matrix err = s.value(k, b.states(k)) - b.states(k);
    worst = std::max(worst, std::sqrt(err.squaredNorm() / static_cast<double>(err.rows())));
    z_avg += s.z_mean[k](0, 0) / 50.0;
  }
  CHECK(worst <= 0.02);
  CHECK(std::abs(z_avg - 1.0) <= 0.05);
  CHECK(s.y0_regression(0) == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("running state cost: Y_0 = T + x0^2 + T x0 and Z_0 = 2 x0 + T") {
  const BSDESolution s = solve_scalar(1.0, 50, 100'000, [](double, double x) { return x; }, squares);
  CHECK(s.y0_regression(0) == doctest::Approx(3.0).epsilon(0.02));
  CHECK(s.z0_regression(0, 0) == doctest::Approx(3.0).epsilon(0.05));
}

TEST_CASE("unit driver, zero terminal: Y = T - t and Z = 0") {
  const BSDESolution s = solve_scalar(0.0, 20, 20'000, [](double, double) { return 1.0; },
                                      [](const Matrix& x) { return Matrix::Zero(x.rows(), 1).eval(); });
  for (std::size_t k = 0; k <= 20; ++k) {
    CHECK(s.y_mean(static_cast<Eigen::Index>(k), 0) == doctest::Approx(1.0 - s.grid.t(k)).epsilon(1e-6));
    if (k < 20) CHECK(std::abs(s.z_mean[k](0, 0)) <= 1e-6);
  }
}

TEST_CASE("terminal values are exact on every path") {
  const BSDESolution s = solve_scalar(1.0, 10, 5'000, [](double, double x) { return x; }, squares, true);
  REQUIRE(s.has_paths());
  const TimeGrid grid = make_time_grid(1.0, 10);
  const PathBundle b = simulate_reference(scalar(1.0), grid, 5'000, 2024);
  CHECK(s.y_paths[10] == squares(b.states(10)));
}

TEST_CASE("a duplicated equation gives identical tables") {
  const TimeGrid grid = make_time_grid(1.0, 20);
  const PathBundle b = simulate_reference(scalar(1.0), grid, 10'000, 5);
  auto driver = std::make_shared<FunctionDriver>(
      2, 1, [](std::size_t, double, std::span<const double> x, const Matrix& z, std::span<double> out) {
        out[0] = x[0] - 0.5 * z(0, 0) * z(0, 0);
        out[1] = x[0] - 0.5 * z(1, 0) * z(1, 0);
      });
  BsdeOptions o;
  o.store_paths = true;
  const BSDESolution s = solve_backward(
      b, driver, [](const Matrix& x) { return Matrix(squares(x).replicate(1, 2)); },
      std::make_shared<QuadraticBasis>(1), o);
  for (std::size_t k = 0; k <= 20; ++k) CHECK(s.y_paths[k].col(0) == s.y_paths[k].col(1));
  for (std::size_t k = 0; k < 20; ++k) CHECK(s.z_paths[k][0] == s.z_paths[k][1]);
}

TEST_CASE("time discretization error does not grow under refinement") {
  double previous = 1e9, previous_se = 0.0;
  for (std::size_t steps : {10u, 20u, 40u}) {
    const BSDESolution s = solve_scalar(1.0, steps, 100'000, [](double, double x) { return x; }, squares);
    const double err = std::abs(s.y0_regression(0) - 3.0);
    const double se = s.y0_standard_error(0);
    CHECK(err <= previous + 2.0 * std::hypot(se, previous_se));
    previous = err;
    previous_se = se;
  }
}

TEST_CASE("solve_backward preconditions") {
  const TimeGrid grid = make_time_grid(1.0, 5);
  GameSpec s = scalar(0.0);
  const PathBundle b = simulate_reference(s, grid, 1'000, 1);
  auto two_bm = std::make_shared<FunctionDriver>(
      1, 2, [](std::size_t, double, std::span<const double>, const Matrix&, std::span<double> out) { out[0] = 0; });
  CHECK_THROWS_AS(solve_backward(b, two_bm, squares, std::make_shared<QuadraticBasis>(1)), InvalidArgument);
}

TEST_CASE("z estimator names") {
  for (ZEstimator z : {ZEstimator::kPlain, ZEstimator::kCentered, ZEstimator::kDecorrelated}) {
    CHECK(z_estimator_from_string(to_string(z)) == z);
  }
  CHECK_THROWS_AS(z_estimator_from_string("nope"), InvalidArgument);
}
