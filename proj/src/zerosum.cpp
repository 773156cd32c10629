#include "weakgame/zerosum.hpp"

#include <algorithm>
#include <cmath>

namespace weakgame::zerosum {

double h1(double x, double z, double u, double v) { return (u + v) * z + 0.5 * (u * u - v * v) + x; }

double h2(double x, double z, double u, double v) { return (u + v) * z + 0.5 * (v * v - u * u) - x; }

double H1(double x, double z, double v) { return v * z - 0.5 * (z * z + v * v) + x; }

double H2(double x, double z, double u) { return u * z - 0.5 * (z * z + u * u) - x; }

double argmin_u(double, double z, double) { return -z; }

double argmin_v(double, double z, double) { return -z; }

// sup_v H1(x, z, v) is attained at v = z.
double H_minus(double x, double z) { return H1(x, z, z); }

// sup_v h1 at v = z gives u z + (z^2 + u^2)/2 + x, minimized at u = -z.
double H_plus(double x, double z) {
  const double u = -z;
  return h1(x, z, u, z);
}

double isaacs_gap(double x, double z) { return H_plus(x, z) - H_minus(x, z); }

ControlPair nash_fixed_point(double, double z1, double z2) { return {-z1, -z2}; }

ClosedForm closed_form(double t, double x, double horizon) {
  const double tau = horizon - t;
  return {tau + x * x + tau * x, 2.0 * x + tau};
}

CostDefinition zero_sum_cost() {
  CostDefinition c;
  c.running = [](std::size_t, double, const Matrix& x, const Matrix& a) -> Vector {
    return 0.5 * (a.col(0).cwiseAbs2() - a.col(1).cwiseAbs2()) + x.col(0);
  };
  c.terminal = [](const Matrix& x) -> Vector { return x.col(0).cwiseAbs2(); };
  return c;
}

namespace {

/// Driver H^+ = H^- = x for the single saddle equation.
class SaddleDriver : public Driver {
 public:
  std::size_t n_equations() const override { return 1; }
  std::size_t n_brownian() const override { return 1; }
  void evaluate(std::size_t, double, std::span<const double> state, const Matrix& z,
                std::span<double> out) const override {
    out[0] = H_plus(state[0], z(0, 0));
  }
  void evaluate_block(std::size_t, double, const Matrix& states, const std::vector<Matrix>&,
                      Matrix& out) const override {
    out = states.col(0);
  }
};

/// Both best-response drivers with the opponent playing its equilibrium
/// control -Z^{other}.
class NashPairDriver : public Driver {
 public:
  explicit NashPairDriver(CrossTerm cross) : sign_(cross == CrossTerm::kDerived ? -1.0 : 1.0) {}
  std::size_t n_equations() const override { return 2; }
  std::size_t n_brownian() const override { return 1; }
  void evaluate(std::size_t, double, std::span<const double> state, const Matrix& z,
                std::span<double> out) const override {
    const double z1 = z(0, 0);
    const double z2 = z(1, 0);
    const double quad = 0.5 * (z1 * z1 + z2 * z2);
    out[0] = sign_ * z2 * z1 - quad + state[0];
    out[1] = sign_ * z1 * z2 - quad - state[0];
  }

 private:
  double sign_;
};

void require_zero_sum(const GameSpec& spec) {
  spec.validate();
  if (spec.kind != GameKind::kZeroSum) throw InvalidArgument("zerosum: spec.kind must be zerosum");
  if (spec.dissipation != 0.0) throw InvalidArgument("zerosum: the two-player example has k = 0");
}

Matrix squared_state(const Matrix& x) { return x.col(0).cwiseAbs2(); }

}  // namespace

ControlPath SaddleReport::saddle_controls() const {
  auto sol = solution;
  const double alpha_max = numerics.alpha_max;
  return ControlPath::feedback(
      [sol](std::size_t node, double, const Matrix& x) {
        const Matrix z = sol->z(node, 0, x);
        Matrix a(x.rows(), 2);
        a.col(0) = -z.col(0);
        a.col(1) = z.col(0);
        return a;
      },
      2, ControlCoupling::kSummed, alpha_max, "saddle");
}

SaddleReport solve_saddle(const GameSpec& spec, const Numerics& numerics) {
  require_zero_sum(spec);
  const TimeGrid grid = make_time_grid(spec.horizon, numerics.n_steps);
  auto bundle = std::make_shared<const PathBundle>(
      simulate_reference(spec, grid, numerics.n_paths, numerics.seed));
  auto sol = std::make_shared<const BSDESolution>(
      solve_backward(*bundle, std::make_shared<SaddleDriver>(), squared_state,
                     std::make_shared<QuadraticBasis>(1), numerics.bsde));

  SaddleReport r;
  r.spec = spec;
  r.numerics = numerics;
  r.bundle = bundle;
  r.solution = sol;
  r.y0 = sol->y0_regression(0);
  r.v_plus = r.y0;
  r.v_minus = r.y0;
  r.y0_sample_mean = sol->y0_sample_mean(0);
  r.y0_se = sol->y0_standard_error(0);
  r.z0 = sol->z0_regression(0, 0);
  r.exact = closed_form(0.0, spec.x0, spec.horizon);
  r.y0_rel_error = std::abs(r.y0 - r.exact.y) / std::max(std::abs(r.exact.y), 1e-12);
  r.z0_rel_error = std::abs(r.z0 - r.exact.z) / std::max(std::abs(r.exact.z), 1e-12);
  return r;
}

std::vector<DeviationRow> deviation_test(const SaddleReport& report,
                                         const std::vector<Perturbation>& perturbations) {
  const ControlPath base = report.saddle_controls();
  const CostDefinition cost = zero_sum_cost();
  const Vector base_samples = weighted_cost_samples(*report.bundle, base, cost);
  std::vector<DeviationRow> rows;
  for (int player : {1, 2}) {
    for (const Perturbation& p : perturbations) {
      const int col = player - 1;
      const ControlPath perturbed = ControlPath::feedback(
          [base, p, col, &report](std::size_t node, double, const Matrix&) {
            Matrix a = base.evaluate(*report.bundle, node).values;
            a.col(col) = a.col(col).unaryExpr([&p](double c) { return p.apply(c); });
            return a;
          },
          2, ControlCoupling::kSummed, report.numerics.alpha_max, "deviation");
      const Vector s = weighted_cost_samples(*report.bundle, perturbed, cost);
      DeviationRow row;
      row.player = player;
      row.perturbation = p;
      row.gap = paired_difference({s.data(), static_cast<std::size_t>(s.size())},
                                  {base_samples.data(), static_cast<std::size_t>(base_samples.size())});
      row.epsilon = 3.0 * row.gap.se;
      row.holds = player == 1 ? row.gap.mean >= -row.epsilon : row.gap.mean <= row.epsilon;
      rows.push_back(row);
    }
  }
  return rows;
}

NashSystemReport solve_nash_system_2p(const GameSpec& spec, const Numerics& numerics,
                                      CrossTerm cross_term) {
  require_zero_sum(spec);
  const TimeGrid grid = make_time_grid(spec.horizon, numerics.n_steps);
  const PathBundle bundle = simulate_reference(spec, grid, numerics.n_paths, numerics.seed);
  auto terminal = [](const Matrix& x) {
    Matrix y(x.rows(), 2);
    y.col(0) = x.col(0).cwiseAbs2();
    y.col(1) = -y.col(0);
    return y;
  };
  auto sol = std::make_shared<const BSDESolution>(
      solve_backward(bundle, std::make_shared<NashPairDriver>(cross_term), terminal,
                     std::make_shared<QuadraticBasis>(1), numerics.bsde));
  NashSystemReport r;
  r.spec = spec;
  r.solution = sol;
  r.cross_term = cross_term;
  r.y1_0 = sol->y0_regression(0);
  r.y2_0 = sol->y0_regression(1);
  r.y1_0_se = sol->y0_standard_error(0);
  for (Eigen::Index k = 0; k < sol->y_mean.rows(); ++k) {
    r.antisymmetry = std::max(r.antisymmetry, std::abs(sol->y_mean(k, 0) + sol->y_mean(k, 1)));
    r.max_abs_y1 = std::max(r.max_abs_y1, std::abs(sol->y_mean(k, 0)));
  }
  r.exact = closed_form(0.0, spec.x0, spec.horizon);
  return r;
}

}  // namespace weakgame::zerosum
