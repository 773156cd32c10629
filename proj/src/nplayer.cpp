#include "weakgame/nplayer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace weakgame::nplayer {

double equilibrium_driver(std::size_t i, std::span<const double> x,
                          std::span<const double> z_row_i, std::span<const double> z_diag) {
  const std::size_t n = x.size();
  if (n == 0 || i >= n || z_row_i.size() != n || z_diag.size() != n) {
    throw InvalidArgument("equilibrium_driver: dimension mismatch");
  }
  double s = 0.0;
  for (double v : x) s += v;
  s /= static_cast<double>(n);
  double cross = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j != i) cross += z_row_i[j] * z_diag[j];
  }
  return s - 0.5 * z_row_i[i] * z_row_i[i] - cross;
}

NPlayerDriver::NPlayerDriver(std::size_t n_players) : n_(n_players) {
  if (n_ < 1) throw InvalidArgument("NPlayerDriver: need at least one player");
}

void NPlayerDriver::evaluate(std::size_t, double, std::span<const double> state, const Matrix& z,
                             std::span<double> out) const {
  std::vector<double> row(n_), diag(n_);
  for (std::size_t j = 0; j < n_; ++j) diag[j] = z(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j));
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < n_; ++j) {
      row[j] = z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    out[i] = equilibrium_driver(i, state, row, diag);
  }
}

void NPlayerDriver::evaluate_block(std::size_t, double, const Matrix& states,
                                   const std::vector<Matrix>& z, Matrix& out) const {
  const Eigen::Index rows = states.rows();
  const auto N = static_cast<Eigen::Index>(n_);
  Matrix diag(rows, N);
  for (Eigen::Index j = 0; j < N; ++j) diag.col(j) = z[static_cast<std::size_t>(j)].col(j);
  const Vector s = states.rowwise().mean();
  out.resize(rows, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto zii = diag.col(i).array();
    // The full row sum includes j = i, which is added back.
    out.col(i) = s.array() + 0.5 * zii * zii -
                 z[static_cast<std::size_t>(i)].cwiseProduct(diag).rowwise().sum().array();
  }
}

void NPlayerDriver::evaluate_exchangeable(std::size_t, double, const Matrix& states,
                                          const Matrix& z_diag, const Matrix& z_off,
                                          Matrix& out) const {
  const Vector s = states.rowwise().mean();
  const Vector diag_sum = z_diag.rowwise().sum();
  const auto zd = z_diag.array();
  out = ((-0.5 * zd * zd - z_off.array() * (diag_sum.replicate(1, z_diag.cols()).array() - zd))
             .colwise() + s.array())
            .matrix();
}

double RiccatiCoefficients::value(double x0) const { return A[0] * x0 * x0 + C[0] * x0 + D[0]; }

Matrix RiccatiCoefficients::feedback(std::size_t node, const Matrix& states) const {
  const double a = A.at(node);
  const double c = C.at(node) / static_cast<double>(n_players);
  return (-2.0 * a * states.array() - c).matrix();
}

std::string RiccatiCoefficients::csv() const {
  std::string out = "t,A,B,C,D\n";
  char buf[160];
  for (std::size_t k = 0; k < A.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", grid.t(k), A[k], B[k], C[k],
                  D[k]);
    out += buf;
  }
  return out;
}

RiccatiCoefficients riccati_oracle(const GameSpec& spec, const TimeGrid& grid,
                                   std::size_t substeps) {
  if (spec.n_players < 1) throw InvalidArgument("riccati_oracle: n_players must be >= 1");
  const double k = spec.dissipation;
  const double n = static_cast<double>(spec.n_players);
  const double c2 = (2.0 * n - 1.0) / (2.0 * n * n);
  const OdeRhs rhs = [k, c2](double, const Vector& y) {
    Vector d(4);
    d(0) = 2.0 * y(0) * y(0) + 2.0 * k * y(0);
    d(1) = (2.0 * y(0) + k) * y(1);
    d(2) = (2.0 * y(0) + k) * y(2) - 1.0;
    d(3) = -y(0) + c2 * y(2) * y(2);
    return d;
  };
  Vector terminal = Vector::Zero(4);
  terminal(0) = 1.0;
  const std::vector<Vector> path = rk4_backward(grid, terminal, rhs, substeps);
  RiccatiCoefficients r;
  r.grid = grid;
  r.n_players = spec.n_players;
  r.dissipation = k;
  r.substeps = substeps;
  for (const Vector& y : path) {
    r.A.push_back(y(0));
    r.B.push_back(y(1));
    r.C.push_back(y(2));
    r.D.push_back(y(3));
  }
  return r;
}

CostDefinition player_cost(std::size_t i) {
  const auto col = static_cast<Eigen::Index>(i);
  CostDefinition c;
  c.running = [col](std::size_t, double, const Matrix& x, const Matrix& a) -> Vector {
    return x.rowwise().mean() + 0.5 * a.col(col).cwiseAbs2();
  };
  c.terminal = [col](const Matrix& x) -> Vector { return x.col(col).cwiseAbs2(); };
  return c;
}

namespace {

Matrix diagonal_feedback(const BSDESolution& sol, std::size_t node, const Matrix& states) {
  std::vector<Matrix> f;
  sol.basis->features(states, f);
  const auto N = static_cast<Eigen::Index>(sol.n_equations);
  Matrix a(states.rows(), N);
  for (Eigen::Index j = 0; j < N; ++j) {
    const auto js = static_cast<std::size_t>(j);
    a.col(j) = -(f[sol.basis->feature_set(js)] * sol.z_coefficients[node][js].col(j));
  }
  const double zmax = sol.options.z_max;
  return a.cwiseMax(-zmax).cwiseMin(zmax);
}

}  // namespace

Matrix NPlayerSolution::feedback_values(std::size_t node, const Matrix& states) const {
  return diagonal_feedback(*solution, node, states);
}

ControlPath NPlayerSolution::feedback() const {
  return ControlPath::feedback(
      [sol = solution](std::size_t node, double, const Matrix& x) {
        return diagonal_feedback(*sol, node, x);
      },
      spec.n_players, ControlCoupling::kPerPlayer, numerics.alpha_max, "nplayer-equilibrium");
}

NPlayerSolution solve_nash_system(const GameSpec& spec, const Numerics& numerics) {
  spec.validate();
  if (spec.kind != GameKind::kNPlayer) throw InvalidArgument("nplayer: spec.kind must be nplayer");
  if (spec.n_players < 1 || spec.n_players > kMaxPlayers) {
    throw InvalidArgument("nplayer: n_players must lie in [1, 64]");
  }
  const std::size_t N = spec.n_players;
  const TimeGrid grid = make_time_grid(spec.horizon, numerics.n_steps);
  auto bundle = std::make_shared<const PathBundle>(
      simulate_reference(spec, grid, numerics.n_paths, numerics.seed));
  auto terminal = [](const Matrix& x) { return Matrix(x.cwiseAbs2()); };
  auto sol = std::make_shared<const BSDESolution>(
      solve_backward(*bundle, std::make_shared<NPlayerDriver>(N), terminal,
                     std::make_shared<SymmetricBasis>(N), numerics.bsde));
  NPlayerSolution out;
  out.spec = spec;
  out.numerics = numerics;
  out.bundle = bundle;
  out.solution = sol;
  for (std::size_t i = 0; i < N; ++i) {
    out.values.push_back({sol->y0_regression(static_cast<Eigen::Index>(i)), sol->y0_standard_error(i)});
  }
  return out;
}

double player_value(const NPlayerSolution& solution, std::size_t i) {
  if (i >= solution.values.size()) throw InvalidArgument("player_value: player index out of range");
  return solution.values[i].mean;
}

Estimate value_spread(const NPlayerSolution& solution, std::size_t i, std::size_t j) {
  const Matrix& tot = solution.solution->pathwise_total;
  if (i >= static_cast<std::size_t>(tot.cols()) || j >= static_cast<std::size_t>(tot.cols())) {
    throw InvalidArgument("value_spread: player index out of range");
  }
  const Vector a = tot.col(static_cast<Eigen::Index>(i));
  const Vector b = tot.col(static_cast<Eigen::Index>(j));
  return paired_difference({a.data(), static_cast<std::size_t>(a.size())},
                           {b.data(), static_cast<std::size_t>(b.size())});
}

Estimate nash_deviation_gap(const NPlayerSolution& solution, std::size_t i,
                            const Perturbation& perturbation) {
  if (!solution.bundle) throw InvalidArgument("nash_deviation_gap: reference paths were released");
  if (i >= solution.spec.n_players) throw InvalidArgument("nash_deviation_gap: player out of range");
  const ControlPath base = solution.feedback();
  const auto col = static_cast<Eigen::Index>(i);
  const ControlPath perturbed = ControlPath::feedback(
      [base, perturbation, col, b = solution.bundle](std::size_t node, double, const Matrix&) {
        Matrix a = base.evaluate(*b, node).values;
        a.col(col) = a.col(col).unaryExpr([&](double v) { return perturbation.apply(v); });
        return a;
      },
      solution.spec.n_players, ControlCoupling::kPerPlayer, solution.numerics.alpha_max,
      "deviation");
  const CostDefinition cost = player_cost(i);
  const Vector eq = weighted_cost_samples(*solution.bundle, base, cost);
  const Vector dev = weighted_cost_samples(*solution.bundle, perturbed, cost);
  return paired_difference({dev.data(), static_cast<std::size_t>(dev.size())},
                           {eq.data(), static_cast<std::size_t>(eq.size())});
}

double feedback_mismatch(const NPlayerSolution& solution, const RiccatiCoefficients& oracle,
                         std::size_t max_paths) {
  if (!solution.bundle) throw InvalidArgument("feedback_mismatch: reference paths were released");
  const PathBundle& b = *solution.bundle;
  const auto rows = static_cast<Eigen::Index>(std::min(max_paths, b.n_paths()));
  double num = 0.0;
  double den = 0.0;
  const std::size_t K = b.grid().n_steps;
  for (std::size_t k = 0; k < K; ++k) {
    const Matrix x = b.states(k).topRows(rows);
    const Vector lsmc = solution.feedback_values(k, x).col(0);
    const Vector exact = oracle.feedback(k, x).col(0);
    num += (lsmc - exact).squaredNorm();
    den += exact.squaredNorm();
  }
  return den > 0.0 ? num / den : num;
}

}  // namespace weakgame::nplayer
