#include "weakgame/validate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <random>

#include "weakgame/convergence.hpp"
#include "weakgame/mfg.hpp"
#include "weakgame/nplayer.hpp"
#include "weakgame/parallel.hpp"
#include "weakgame/zerosum.hpp"

namespace weakgame::validate {

namespace {

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
  char buf[200];
  std::snprintf(buf, sizeof buf, pattern, a, b, c);
  return buf;
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  return out;
}

bool same_bits(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

GameSpec spec_of(GameKind kind, std::size_t n_players, double horizon, double x0) {
  GameSpec s;
  s.kind = kind;
  s.n_players = n_players;
  s.horizon = horizon;
  s.x0 = x0;
  return s;
}

/// Per-path mean of |r| over nodes and columns.
Estimate residual_estimate(const Matrix& abs_sum, double count) {
  const Vector per_path = abs_sum.rowwise().sum() / count;
  return estimate_from_samples({per_path.data(), static_cast<std::size_t>(per_path.size())});
}

}  // namespace

bool ValidationReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

std::string ValidationReport::table() const {
  std::string out;
  char buf[512];
  for (const Check& c : checks) {
    std::snprintf(buf, sizeof buf, "%-4s %-9s %-26s %s\n", c.passed ? "PASS" : "FAIL",
                  c.group.c_str(), c.name.c_str(), c.detail.c_str());
    out += buf;
  }
  return out;
}

Check isaacs_identity() {
  const auto xs = linspace(-5.0, 5.0, 25);
  const auto zs = linspace(-10.0, 10.0, 40);
  std::size_t bad = 0;
  for (double x : xs) {
    for (double z : zs) {
      if (zerosum::H_plus(x, z) != x || zerosum::H_minus(x, z) != x) ++bad;
    }
  }
  Check c{"isaacs_identity", "isaacs", bad == 0, static_cast<double>(bad), 0.0, ""};
  c.detail = fmt("H+ = H- = x at %.0f of 1000 grid points", 1000.0 - static_cast<double>(bad));
  return c;
}

Check isaacs_brute_force() {
  const auto grid = linspace(-10.0, 10.0, 1000);
  double worst = 0.0;
  for (double x : {-2.0, 0.0, 1.5}) {
    for (double z : {-3.0, -0.5, 0.0, 2.0, 4.0}) {
      // inf_u sup_v and sup_v inf_u of h1 over the grid.
      double upper = std::numeric_limits<double>::infinity();
      for (double u : grid) {
        double best = -std::numeric_limits<double>::infinity();
        for (double v : grid) best = std::max(best, zerosum::h1(x, z, u, v));
        upper = std::min(upper, best);
      }
      double lower = -std::numeric_limits<double>::infinity();
      for (double v : grid) {
        double best = std::numeric_limits<double>::infinity();
        for (double u : grid) best = std::min(best, zerosum::h1(x, z, u, v));
        lower = std::max(lower, best);
      }
      worst = std::max({worst, std::abs(upper - x), std::abs(lower - x)});
    }
  }
  Check c{"isaacs_brute_force", "isaacs", worst <= 1e-2, worst, 1e-2, ""};
  c.detail = fmt("max |grid inf sup h1 - x| = %.2e (tol %.0e)", worst, 1e-2);
  return c;
}

Check girsanov_normalization(const ValidateOptions& o) {
  const TimeGrid grid = make_time_grid(1.0, o.n_steps);
  double worst_z = 0.0;
  for (std::size_t dim : {std::size_t{1}, std::size_t{4}}) {
    const GameSpec spec = spec_of(dim == 1 ? GameKind::kMeanField : GameKind::kNPlayer, dim, 1.0, 0.5);
    const PathBundle b = simulate_reference(spec, grid, o.n_paths, derive_seed(o.seed, 10 + dim));
    const ControlPath fb = ControlPath::feedback(
        [](std::size_t, double t, const Matrix& x) {
          return Matrix((0.5 + std::sin(3.0 * t) - x.array().tanh()).matrix());
        },
        dim, ControlCoupling::kPerPlayer, 50.0, "bounded");
    const Vector w = girsanov_weight(b, fb);
    const Estimate e = estimate_from_samples({w.data(), static_cast<std::size_t>(w.size())});
    worst_z = std::max(worst_z, std::abs(e.mean - 1.0) / e.se);
  }
  Check c{"girsanov_normalization", "property", worst_z <= 3.0, worst_z, 3.0, ""};
  c.detail = fmt("max |mean(weight) - 1| / SE = %.2f over 1-d and 4-d bundles (limit 3)", worst_z);
  return c;
}

Check seed_determinism(const ValidateOptions& o) {
  const std::size_t saved = thread_count();
  const std::size_t n = std::min<std::size_t>(o.n_paths, 20'000);
  const GameSpec spec = spec_of(GameKind::kNPlayer, 4, 1.0, 1.0);
  const TimeGrid grid = make_time_grid(1.0, o.n_steps);
  Numerics num;
  num.n_paths = n;
  num.n_steps = o.n_steps;
  num.seed = o.seed;
  auto run = [&](std::size_t threads) {
    set_thread_count(threads);
    GameSpec ou = spec;
    ou.dissipation = 1.0;
    PathBundle b = simulate_reference(ou, grid, n, o.seed);
    const auto sol = nplayer::solve_nash_system(spec, num);
    return std::pair{std::move(b), sol.solution};
  };
  const auto [b1, s1] = run(1);
  const auto [b4, s4] = run(4);
  set_thread_count(saved);
  bool same = true;
  for (std::size_t k = 0; k < grid.n_nodes(); ++k) same = same && same_bits(b1.states(k), b4.states(k));
  same = same && same_bits(s1->y_mean, s4->y_mean) && same_bits(s1->pathwise_total, s4->pathwise_total);
  for (std::size_t k = 0; k < grid.n_steps; ++k) {
    same = same && same_bits(s1->y_coefficients[k], s4->y_coefficients[k]);
  }
  Check c{"seed_determinism", "property", same, same ? 0.0 : 1.0, 0.0, ""};
  c.detail = same ? "bundle and N-player solution bit-identical for 1 and 4 threads"
                  : "outputs differ between 1 and 4 threads";
  return c;
}

Check terminal_exactness(const ValidateOptions& o) {
  const std::size_t n = std::min<std::size_t>(o.n_paths, 20'000);
  Numerics num;
  num.n_paths = n;
  num.n_steps = o.n_steps;
  num.seed = o.seed;
  num.bsde.store_paths = true;
  double worst = 0.0;
  {
    const auto r = zerosum::solve_saddle(spec_of(GameKind::kZeroSum, 2, 1.0, 1.0), num);
    const Matrix& x = r.bundle->states(num.n_steps);
    worst = std::max(worst, (r.solution->y_paths[num.n_steps].col(0) - x.col(0).cwiseAbs2())
                                .cwiseAbs().maxCoeff());
  }
  {
    const auto s = nplayer::solve_nash_system(spec_of(GameKind::kNPlayer, 3, 1.0, 1.0), num);
    const Matrix& x = s.bundle->states(num.n_steps);
    worst = std::max(worst, (s.solution->y_paths[num.n_steps] - x.cwiseAbs2()).cwiseAbs().maxCoeff());
  }
  Check c{"terminal_exactness", "property", worst == 0.0, worst, 0.0, ""};
  c.detail = fmt("max |Y_T - terminal(X_T)| = %.1e over saddle and 3-player solves", worst);
  return c;
}

Estimate saddle_one_step_residual(double horizon, double x0, std::size_t n_steps,
                                  std::size_t n_paths, std::uint64_t seed) {
  const TimeGrid grid = make_time_grid(horizon, n_steps);
  const PathBundle b = simulate_reference(spec_of(GameKind::kZeroSum, 2, horizon, x0), grid, n_paths, seed);
  const double dt = grid.dt();
  Matrix acc = Matrix::Zero(static_cast<Eigen::Index>(n_paths), 1);
  for (std::size_t k = 0; k < n_steps; ++k) {
    const Vector x = b.states(k).col(0);
    const Vector xn = b.states(k + 1).col(0);
    const Vector dw = b.increments(k).col(0);
    const double tau = horizon - grid.t(k);
    const double tau_n = horizon - grid.t(k + 1);
    const Vector y = (tau + x.array().square() + tau * x.array()).matrix();
    const Vector yn = (tau_n + xn.array().square() + tau_n * xn.array()).matrix();
    const Vector z = (2.0 * x.array() + tau).matrix();
    acc.col(0) += (y - yn - dt * x + z.cwiseProduct(dw)).cwiseAbs();
  }
  return residual_estimate(acc, static_cast<double>(n_steps));
}

Estimate nplayer_one_step_residual(std::size_t n_players, double horizon, double x0,
                                   std::size_t n_steps, std::size_t n_paths, std::uint64_t seed) {
  const GameSpec spec = spec_of(GameKind::kNPlayer, n_players, horizon, x0);
  const TimeGrid grid = make_time_grid(horizon, n_steps);
  const PathBundle b = simulate_reference(spec, grid, n_paths, seed);
  const auto r = nplayer::riccati_oracle(spec, grid);
  const double dt = grid.dt();
  const double n = static_cast<double>(n_players);
  const auto N = static_cast<Eigen::Index>(n_players);
  auto value = [&](std::size_t k, const Matrix& x) {
    const Vector s = x.rowwise().mean();
    return Matrix(((r.A[k] * x.array().square()).colwise() + (r.C[k] * s.array() + r.D[k])).matrix());
  };
  Matrix acc = Matrix::Zero(static_cast<Eigen::Index>(n_paths), 1);
  const nplayer::NPlayerDriver driver(n_players);
  for (std::size_t k = 0; k < n_steps; ++k) {
    const Matrix& x = b.states(k);
    const Matrix dw = b.increments(k);
    const Matrix zd = (2.0 * r.A[k] * x.array() + r.C[k] / n).matrix();
    const Matrix zo = Matrix::Constant(x.rows(), N, r.C[k] / n);
    Matrix f;
    driver.evaluate_exchangeable(k, grid.t(k), x, zd, zo, f);
    // sum_j Z^{ij} dW_j = Z^{ii} dW_i + Z^{ij} (sum_l dW_l - dW_i).
    const Vector dw_sum = dw.rowwise().sum();
    const Matrix zdw = (zd.array() * dw.array() +
                        zo.array() * (dw_sum.replicate(1, N).array() - dw.array()))
                           .matrix();
    const Matrix res = value(k, x) - value(k + 1, b.states(k + 1)) - dt * f + zdw;
    acc.col(0) += res.cwiseAbs().rowwise().sum();
  }
  return residual_estimate(acc, static_cast<double>(n_steps) * n);
}

Estimate mfg_one_step_residual(double horizon, double x0, std::size_t n_steps,
                               std::size_t n_paths, std::uint64_t seed) {
  const GameSpec spec = spec_of(GameKind::kMeanField, 1, horizon, x0);
  const TimeGrid grid = make_time_grid(horizon, n_steps);
  const PathBundle b = simulate_reference(spec, grid, n_paths, seed);
  const auto o = mfg::mfg_closed_form(spec, grid);
  const double dt = grid.dt();
  Matrix acc = Matrix::Zero(static_cast<Eigen::Index>(n_paths), 1);
  for (std::size_t k = 0; k < n_steps; ++k) {
    const Vector x = b.states(k).col(0);
    const Vector xn = b.states(k + 1).col(0);
    const Vector dw = b.increments(k).col(0);
    const Vector z = 2.0 * o.A[k] * x;
    const Vector y = (o.A[k] * x.array().square() + o.D[k]).matrix();
    const Vector yn = (o.A[k + 1] * xn.array().square() + o.D[k + 1]).matrix();
    const Vector f = (o.m[k] - 0.5 * z.array().square()).matrix();
    acc.col(0) += (y - yn - dt * f + z.cwiseProduct(dw)).cwiseAbs();
  }
  return residual_estimate(acc, static_cast<double>(n_steps));
}

Check one_step_residuals(const ValidateOptions& o) {
  const std::size_t K = std::max<std::size_t>(o.n_steps / 2, 2);
  const std::size_t n = std::min<std::size_t>(o.n_paths, 20'000);
  const std::uint64_t s = derive_seed(o.seed, 20);
  const std::pair<Estimate, Estimate> cases[] = {
      {saddle_one_step_residual(1.0, 1.0, K, n, s), saddle_one_step_residual(1.0, 1.0, 2 * K, n, s)},
      {nplayer_one_step_residual(4, 1.0, 1.0, K, n, s),
       nplayer_one_step_residual(4, 1.0, 1.0, 2 * K, n, s)},
      {mfg_one_step_residual(1.0, 1.0, K, n, s), mfg_one_step_residual(1.0, 1.0, 2 * K, n, s)},
  };
  // Halving dt: fine <= coarse / 2 + 2 combined SE. Value reports the worst
  // fine / coarse ratio.
  bool ok = true;
  double worst = 0.0;
  for (const auto& [coarse, fine] : cases) {
    const double se = std::sqrt(fine.se * fine.se + 0.25 * coarse.se * coarse.se);
    ok = ok && fine.mean <= 0.5 * coarse.mean + 2.0 * se;
    worst = std::max(worst, fine.mean / coarse.mean);
  }
  Check c{"one_step_residual_order", "property", ok, worst, 0.5, ""};
  c.detail = fmt("worst residual ratio dt/2 : dt = %.3f (saddle, 4-player, mfg; limit 0.5 + 2 SE)", worst);
  return c;
}

Check w2_axioms(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  auto sample = [&](std::size_t n, double mu, double sd) {
    std::vector<double> v(n);
    for (double& x : v) x = mu + sd * normal(rng);
    return v;
  };
  bool symmetric = true, identity = true, triangle = true;
  double worst_excess = -std::numeric_limits<double>::infinity();
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 50 + static_cast<std::size_t>(t);
    const auto a = sample(n, 0.0, 1.0);
    const auto b = sample(n, 0.3 * t / 100.0, 1.5);
    const auto c = sample(n, -0.5, 0.7);
    const double ab = convergence::empirical_w2(a, b);
    const double ba = convergence::empirical_w2(b, a);
    const double bc = convergence::empirical_w2(b, c);
    const double ac = convergence::empirical_w2(a, c);
    symmetric = symmetric && ab == ba;
    identity = identity && convergence::empirical_w2(a, a) == 0.0;
    worst_excess = std::max(worst_excess, ac - (ab + bc));
    triangle = triangle && ac <= ab + bc + 1e-12;
  }
  const bool ok = symmetric && identity && triangle;
  Check c{"w2_metric_axioms", "property", ok, worst_excess, 0.0, ""};
  c.detail = std::string("symmetry ") + (symmetric ? "exact" : "broken") + ", identity " +
             (identity ? "zero" : "nonzero") +
             fmt(", max triangle excess %.2e over 100 triples", worst_excess);
  return c;
}

ValidationReport run_validation(const ValidateOptions& o) {
  ValidationReport r;
  r.checks.push_back(isaacs_identity());
  r.checks.push_back(isaacs_brute_force());
  r.checks.push_back(girsanov_normalization(o));
  r.checks.push_back(seed_determinism(o));
  r.checks.push_back(terminal_exactness(o));
  r.checks.push_back(one_step_residuals(o));
  r.checks.push_back(w2_axioms(derive_seed(o.seed, 30)));
  return r;
}

}  // namespace weakgame::validate
