#include <cmath>
#include <cstring>
#include <sstream>

#include "doctest.h"
#include "weakgame/mfg.hpp"
#include "weakgame/parallel.hpp"
#include "weakgame/sim.hpp"

using namespace weakgame;

namespace {

Vector no_running(std::size_t, double, const Matrix& x, const Matrix&) { return Vector::Zero(x.rows()); }

GameSpec one_player(double x0, double k, double T = 1.0) {
  GameSpec s;
  s.kind = GameKind::kMeanField;
  s.n_players = 1;
  s.x0 = x0;
  s.dissipation = k;
  s.horizon = T;
  return s;
}

Estimate column_estimate(const Matrix& m, Eigen::Index col = 0) {
  const Vector v = m.col(col);
  return estimate_from_samples({v.data(), static_cast<std::size_t>(v.size())});
}

ControlPath constant_control(double c) {
  return ControlPath::feedback([c](std::size_t, double, const Matrix& x) {
    return Matrix::Constant(x.rows(), 1, c);
  }, 1);
}

}  // namespace

TEST_CASE("make_time_grid") {
  CHECK(make_time_grid(1.0, 4).nodes == std::vector<double>{0, 0.25, 0.5, 0.75, 1.0});
  CHECK(make_time_grid(2.0, 1).nodes == std::vector<double>{0, 2.0});
  CHECK_THROWS_AS(make_time_grid(1.0, 0), InvalidArgument);
  CHECK_THROWS_AS(make_time_grid(-1.0, 4), InvalidArgument);
  CHECK(make_time_grid(3.0, 7).nodes.back() == 3.0);
}

TEST_CASE("reference paths without dissipation are running sums of the increments") {
  const TimeGrid grid = make_time_grid(1.0, 20);
  const PathBundle b = simulate_reference(one_player(1.0, 0.0), grid, 500, 3);
  Matrix sum = Matrix::Zero(500, 1);
  for (std::size_t k = 0; k < grid.n_steps; ++k) {
    CHECK(b.states(k + 1) == b.states(k) + b.increments(k));
    sum += b.increments(k);
    const Matrix drift = b.states(k + 1).array() - 1.0;
    CHECK((drift - sum).cwiseAbs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("reference terminal means") {
  const TimeGrid grid = make_time_grid(1.0, 50);
  const std::size_t n = 100'000;
  SUBCASE("martingale when k = 0") {
    const PathBundle b = simulate_reference(one_player(0.7, 0.0), grid, n, 5);
    const Estimate m = column_estimate(b.states(grid.n_steps));
    CHECK(std::abs(m.mean - 0.7) <= 3.0 * std::sqrt(1.0 / n));
  }
  SUBCASE("OU mean when k = 1") {
    const PathBundle b = simulate_reference(one_player(1.0, 1.0), grid, n, 5);
    const Estimate m = column_estimate(b.states(grid.n_steps));
    CHECK(std::abs(m.mean - std::exp(-1.0)) <= 3.0 * m.se);
  }
}

TEST_CASE("controlled simulation") {
  const TimeGrid grid = make_time_grid(1.0, 50);
  SUBCASE("zero control reproduces the reference paths when k = 0") {
    const GameSpec s = one_player(0.3, 0.0);
    const PathBundle ref = simulate_reference(s, grid, 2'000, 9);
    const PathBundle ctl = simulate_controlled(s, grid, ControlPath::zero(1), 2'000, 9);
    for (std::size_t k = 0; k <= grid.n_steps; ++k) CHECK(ctl.states(k) == ref.states(k));
  }
  SUBCASE("constant drift shifts the terminal mean by cT") {
    const PathBundle b = simulate_controlled(one_player(1.0, 0.0), grid, constant_control(-0.4), 50'000, 9);
    const Estimate m = column_estimate(b.states(grid.n_steps));
    CHECK(std::abs(m.mean - 0.6) <= 3.0 * m.se);
  }
  SUBCASE("mean field oracle feedback tracks the oracle flow") {
    const GameSpec s = one_player(1.0, 0.0);
    const mfg::MfgClosedForm cf = mfg::mfg_closed_form(s, grid);
    const ControlPath fb = ControlPath::feedback(
        [&cf](std::size_t node, double, const Matrix& x) { return cf.feedback(node, x); }, 1);
    const PathBundle b = simulate_controlled(s, grid, fb, 50'000, 9);
    for (std::size_t k : {10u, 25u, 50u}) {
      const Estimate m = column_estimate(b.states(k));
      CHECK(std::abs(m.mean - cf.m[k]) <= 3.0 * m.se);
    }
  }
}

TEST_CASE("girsanov weights") {
  const TimeGrid grid = make_time_grid(1.0, 50);
  const GameSpec s = one_player(0.0, 0.0);
  const PathBundle b = simulate_reference(s, grid, 20'000, 17);

  SUBCASE("zero control gives unit weights") {
    CHECK((girsanov_weight(b, ControlPath::zero(1)).array() == 1.0).all());
  }
  SUBCASE("constant control c: exp(c W_T - c^2 T / 2)") {
    const Vector w = girsanov_weight(b, constant_control(2.0));
    Matrix wt = Matrix::Zero(b.n_paths(), 1);
    for (std::size_t k = 0; k < grid.n_steps; ++k) wt += b.increments(k);
    for (Eigen::Index p = 0; p < 100; ++p) {
      CHECK(w(p) == doctest::Approx(std::exp(2.0 * wt(p, 0) - 2.0)).epsilon(1e-10));
    }
    CHECK(std::exp(2.0 * 0.0 - 2.0) == doctest::Approx(0.1353).epsilon(1e-3));
  }
  SUBCASE("bounded feedback weights average to one") {
    const ControlPath fb = ControlPath::feedback([](std::size_t, double t, const Matrix& x) {
      return Matrix((0.5 + std::sin(3.0 * t) - x.array().tanh()).matrix());
    }, 1);
    const Vector w = girsanov_weight(b, fb);
    const Estimate e = estimate_from_samples({w.data(), static_cast<std::size_t>(w.size())});
    CHECK(std::abs(e.mean - 1.0) <= 3.0 * e.se);
  }
}

TEST_CASE("reweighted costs") {
  const TimeGrid grid = make_time_grid(1.0, 50);
  SUBCASE("E[W_T^2] = T") {
    const PathBundle b = simulate_reference(one_player(0.0, 0.0), grid, 50'000, 21);
    const CostDefinition cost{no_running, [](const Matrix& x) { return Vector(x.col(0).array().square()); }};
    const Estimate e = reweighted_cost(b, ControlPath::zero(1), cost);
    CHECK(std::abs(e.mean - 1.0) <= 3.0 * e.se);
  }
  SUBCASE("integral of a martingale started at one") {
    const PathBundle b = simulate_reference(one_player(1.0, 0.0), grid, 50'000, 21);
    const CostDefinition cost{[](std::size_t, double, const Matrix& x, const Matrix&) { return Vector(x.col(0)); },
                              [](const Matrix& x) { return Vector::Zero(x.rows()).eval(); }};
    const Estimate e = reweighted_cost(b, ControlPath::zero(1), cost);
    CHECK(std::abs(e.mean - 1.0) <= 3.0 * e.se);
  }
}

TEST_CASE("reweighting and direct simulation agree") {
  const TimeGrid grid = make_time_grid(1.0, 50);
  const GameSpec s = one_player(0.5, 0.5);
  const ControlPath fb = ControlPath::feedback([](std::size_t, double, const Matrix& x) {
    return Matrix((0.5 - x.array().tanh()).matrix());
  }, 1);
  const std::size_t n = 40'000;
  const PathBundle ref = simulate_reference(s, grid, n, 31);
  const PathBundle direct = simulate_controlled(s, grid, fb, n, 32);
  for (int power : {1, 2}) {
    const CostDefinition g{no_running, [power](const Matrix& x) { return Vector(x.col(0).array().pow(power)); }};
    const Estimate weighted = reweighted_cost(ref, fb, g);
    const Estimate plain = column_estimate(direct.states(grid.n_steps).array().pow(power).matrix());
    CHECK(std::abs(weighted.mean - plain.mean) <= 3.0 * std::hypot(weighted.se, plain.se));
  }
}

TEST_CASE("bundles are bit-identical across thread counts") {
  GameSpec s = one_player(0.0, 1.0);
  s.kind = GameKind::kNPlayer;
  s.n_players = 3;
  const TimeGrid grid = make_time_grid(1.0, 10);
  set_thread_count(1);
  const PathBundle a = simulate_reference(s, grid, 20'000, 77);
  set_thread_count(4);
  const PathBundle b = simulate_reference(s, grid, 20'000, 77);
  set_thread_count(1);
  for (std::size_t k = 0; k <= grid.n_steps; ++k) {
    CHECK(std::memcmp(a.states(k).data(), b.states(k).data(), sizeof(double) * a.states(k).size()) == 0);
  }
}

TEST_CASE("bundle serialization round trip") {
  const TimeGrid grid = make_time_grid(2.0, 6);
  GameSpec s = one_player(0.4, 0.3, 2.0);
  s.kind = GameKind::kNPlayer;
  s.n_players = 2;
  const PathBundle b = simulate_reference(s, grid, 37, 123, {.antithetic = true});
  std::stringstream io;
  write_bundle(io, b);
  const std::string bytes = io.str();
  CHECK(bytes.substr(0, 4) == "WGPB");
  const std::size_t header = 4 + 4 + 8 * 6 + 4 + 4 + std::string(PathBundle::kReferenceTag).size();
  CHECK(bytes.size() == header + 8 * 37 * 2 * (6 + 7));

  const PathBundle r = read_bundle(io);
  CHECK(r.grid() == b.grid());
  CHECK(r.seed() == 123);
  CHECK(r.is_reference());
  CHECK(r.options().antithetic);
  CHECK(r.has_stored_increments());
  for (std::size_t k = 0; k < grid.n_steps; ++k) CHECK(r.increments(k) == b.increments(k));
  for (std::size_t k = 0; k <= grid.n_steps; ++k) CHECK(r.states(k) == b.states(k));

  std::stringstream bad("XXXX");
  CHECK_THROWS_AS(read_bundle(bad), InvalidArgument);
}
