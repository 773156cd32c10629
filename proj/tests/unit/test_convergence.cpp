#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "weakgame/convergence.hpp"

using namespace weakgame;
using namespace weakgame::convergence;

namespace {

GameSpec lq(double x0 = 1.0, double k = 0.0) {
  GameSpec s;
  s.kind = GameKind::kNPlayer;
  s.x0 = x0;
  s.dissipation = k;
  return s;
}

GameSpec population(double x0 = 1.0) {
  GameSpec s = lq(x0);
  s.kind = GameKind::kMeanField;
  s.n_players = 1;
  return s;
}

const std::vector<double> kNs{2, 4, 8, 16, 32, 64};

}  // namespace

TEST_CASE("oracle value gap") {
  const TimeGrid grid = make_time_grid(1.0, 50);
  // (2N - 1) / (2 N^2) * int_0^1 C^2 with int C^2 = 1/6, by quadrature.
  CHECK(oracle_value_gap(lq(), 2, grid) == doctest::Approx(-0.0625).epsilon(1e-6));
  CHECK(std::pow(oracle_value_gap(lq(), 2, grid), 2) == doctest::Approx(3.90625e-3).epsilon(1e-5));
  CHECK(std::abs(oracle_value_gap(lq(), 64, grid)) < std::abs(oracle_value_gap(lq(), 2, grid)));
  CHECK(oracle_value_gap(lq(0.0), 2, grid) == doctest::Approx(oracle_value_gap(lq(1.0), 2, grid)).epsilon(1e-6));
  CHECK(std::abs(oracle_value_gap(lq(0.0), 8, grid)) > 0.0);
}

TEST_CASE("Gaussian W2") {
  CHECK(wasserstein2_gaussian(0, 1, 0, 1) == 0.0);
  CHECK(wasserstein2_gaussian(1, 1, 0, 1) == 1.0);
  CHECK(wasserstein2_gaussian(0, 2, 0, 1) == 1.0);
}

TEST_CASE("empirical W2") {
  const std::vector<double> a{0.3, -1.2, 2.0, 0.7};
  std::vector<double> shifted = a;
  for (double& v : shifted) v -= 0.4;
  CHECK(empirical_w2(a, a) == 0.0);
  CHECK(empirical_w2(a, shifted) == doctest::Approx(0.4));
  CHECK(empirical_w2(std::vector<double>{0, 1}, std::vector<double>{1, 2}) == 1.0);
  CHECK_THROWS_AS(empirical_w2(a, std::vector<double>{1.0}), InvalidArgument);
}

TEST_CASE("empirical W2 is a metric") {
  std::mt19937_64 gen(8);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(50), y(50), z(50);
    const double sy = 1.0 + 0.1 * trial, mz = 0.02 * trial;
    for (int i = 0; i < 50; ++i) {
      x[i] = normal(gen);
      y[i] = sy * normal(gen);
      z[i] = mz + normal(gen);
    }
    REQUIRE(empirical_w2(x, y) == empirical_w2(y, x));
    REQUIRE(empirical_w2(x, x) == 0.0);
    REQUIRE(empirical_w2(x, z) <= empirical_w2(x, y) + empirical_w2(y, z) + 1e-12);
  }
}

TEST_CASE("Gaussian control-law gap shrinks like 1/N^2") {
  const TimeGrid grid = make_time_grid(1.0, 50);
  std::vector<double> gaps;
  for (double n : kNs) gaps.push_back(gaussian_control_law_gap(lq(), static_cast<std::size_t>(n), grid));
  CHECK(gaps.back() < gaps.front());
  for (std::size_t i = 1; i < gaps.size(); ++i) CHECK(gaps[i] < gaps[i - 1]);
  CHECK(fit_rate(kNs, gaps).slope == doctest::Approx(-2.0).epsilon(0.1));
}

TEST_CASE("rate fits") {
  std::vector<double> inv, inv_sq;
  for (double n : kNs) {
    inv.push_back(1.0 / n);
    inv_sq.push_back(4.0 / (n * n));
  }
  CHECK(std::abs(fit_rate(kNs, inv).slope + 1.0) <= 1e-10);
  const RateFit f = fit_rate(kNs, inv_sq);
  CHECK(std::abs(f.slope + 2.0) <= 1e-10);
  CHECK(f.intercept == doctest::Approx(std::log(4.0)));

  const TimeGrid grid = make_time_grid(1.0, 50);
  std::vector<double> oracle;
  for (double n : kNs) oracle.push_back(std::pow(oracle_value_gap(lq(), static_cast<std::size_t>(n), grid), 2));
  CHECK(fit_rate(kNs, oracle).slope <= -1.8);

  CHECK_THROWS_AS(fit_rate(std::vector<double>{2, 4}, std::vector<double>{1, 1}), InvalidArgument);
}

TEST_CASE("CLT baseline") {
  CHECK(clt_baseline(4, 100) == 0.04);
  CHECK(clt_baseline(0.7, 1) == 0.7);
  CHECK(clt_baseline(0, 16) == 0.0);
}

TEST_CASE("Monte Carlo value gaps match the oracle") {
  Numerics n;
  n.n_paths = 20'000;
  const GameSpec spec = lq();
  const mfg::MFGSolution mf = mfg::solve_mfg_fixed_point(population(), n);
  for (std::size_t N : {2u, 4u}) {
    GameSpec s = spec;
    s.n_players = N;
    const ValueGap g = value_gap(nplayer::solve_nash_system(s, n), mf);
    CAPTURE(N);
    CHECK(g.oracle_gap == doctest::Approx(oracle_value_gap(spec, N, mf.solution->grid)));
    CHECK(std::abs(g.gap.mean - g.oracle_gap) <= 3.0 * g.gap.se);
    CHECK(g.gap_sq == doctest::Approx(g.gap.mean * g.gap.mean));
  }
}

TEST_CASE("control-law gap: 64 players are closer than 2") {
  Numerics n;
  n.n_paths = 4'000;
  const mfg::MFGSolution mf = mfg::solve_mfg_fixed_point(population(), n);
  std::vector<ControlLawGap> law;
  for (std::size_t N : {2u, 64u}) {
    GameSpec s = lq();
    s.n_players = N;
    law.push_back(control_law_gap(nplayer::solve_nash_system(s, n), mf, 4'000, derive_seed(n.seed, 3)));
  }
  const Estimate& small = law.front().empirical;
  const Estimate& large = law.back().empirical;
  CHECK(small.mean - large.mean > 2.0 * std::hypot(small.se, large.se));
  CHECK(small.mean == doctest::Approx(law.front().gaussian).epsilon(0.1));
}

TEST_CASE("mean field against itself") {
  Numerics n;
  n.n_paths = 4'000;
  const mfg::MFGSolution mf = mfg::solve_mfg_fixed_point(population(), n);
  const TimeGrid& grid = mf.solution->grid;
  const PathBundle a = simulate_controlled(mf.spec, grid, mf.feedback(), 2'000, 99);
  const PathBundle b = simulate_controlled(mf.spec, grid, mf.feedback(), 2'000, 99);
  for (std::size_t k = 0; k < grid.n_steps; ++k) {
    const Vector x = a.states(k).col(0), y = b.states(k).col(0);
    CHECK(empirical_w2({x.data(), 2'000}, {y.data(), 2'000}) == 0.0);
  }
}
