#include "weakgame/mfg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace weakgame::mfg {

double mfg_driver(double, double z, double m) { return m - 0.5 * z * z; }

double argmin_control(double z) { return -z; }

double MeanFlow::at(double t) const {
  if (values.empty()) throw InvalidArgument("MeanFlow::at: empty flow");
  if (values.size() == 1 || t <= 0.0) return values.front();
  if (t >= grid.horizon) return values.back();
  const double pos = t / grid.dt();
  const auto k = std::min(static_cast<std::size_t>(pos), values.size() - 2);
  const double w = pos - static_cast<double>(k);
  return (1.0 - w) * values[k] + w * values[k + 1];
}

double MeanFlow::max_se() const {
  double out = 0.0;
  for (double s : se) out = std::max(out, s);
  return out;
}

MeanFlow mean_flow_from_feedback(const GameSpec& spec, const TimeGrid& grid,
                                 const ControlPath& feedback, std::size_t n_paths,
                                 std::uint64_t seed) {
  if (n_paths < 2 || n_paths % 2 != 0) {
    throw InvalidArgument("mean_flow_from_feedback: n_paths must be even and >= 2");
  }
  const PathBundle b = simulate_controlled(spec, grid, feedback, n_paths, seed, {.antithetic = true});
  MeanFlow flow;
  flow.grid = grid;
  const auto pairs = static_cast<Eigen::Index>(n_paths / 2);
  std::vector<double> avg(static_cast<std::size_t>(pairs));
  for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
    const auto x = b.states(k).col(0);
    for (Eigen::Index q = 0; q < pairs; ++q) avg[static_cast<std::size_t>(q)] = 0.5 * (x(2 * q) + x(2 * q + 1));
    const Estimate e = estimate_from_samples(avg);
    flow.values.push_back(e.mean);
    flow.se.push_back(e.se);
  }
  return flow;
}

namespace {

class FlowDriver : public Driver {
 public:
  explicit FlowDriver(std::vector<double> m) : m_(std::move(m)) {}
  std::size_t n_equations() const override { return 1; }
  std::size_t n_brownian() const override { return 1; }
  void evaluate(std::size_t node, double, std::span<const double> state, const Matrix& z,
                std::span<double> out) const override {
    out[0] = mfg_driver(state[0], z(0, 0), m_.at(node));
  }
  void evaluate_block(std::size_t node, double, const Matrix&, const std::vector<Matrix>& z,
                      Matrix& out) const override {
    out = (m_.at(node) - 0.5 * z[0].col(0).array().square()).matrix();
  }

 private:
  std::vector<double> m_;
};

ControlPath feedback_of(std::shared_ptr<const BSDESolution> sol, double alpha_max) {
  return ControlPath::feedback(
      [sol](std::size_t node, double, const Matrix& x) { return Matrix(-sol->z(node, 0, x)); }, 1,
      ControlCoupling::kPerPlayer, alpha_max, "mfg-equilibrium");
}

double sup_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double out = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) out = std::max(out, std::abs(a[k] - b[k]));
  return out;
}

}  // namespace

std::shared_ptr<const BSDESolution> solve_for_flow(const PathBundle& bundle, const MeanFlow& flow,
                                                   const BsdeOptions& options) {
  if (flow.values.size() != bundle.grid().n_nodes()) {
    throw InvalidArgument("solve_for_flow: flow and bundle grids differ");
  }
  auto terminal = [](const Matrix& x) { return Matrix(x.col(0).cwiseAbs2()); };
  return std::make_shared<const BSDESolution>(
      solve_backward(bundle, std::make_shared<FlowDriver>(flow.values), terminal,
                     std::make_shared<QuadraticBasis>(1), options));
}

Matrix MFGSolution::feedback_values(std::size_t node, const Matrix& states) const {
  const Matrix a = -solution->z(node, 0, states);
  return a.cwiseMax(-numerics.alpha_max).cwiseMin(numerics.alpha_max);
}

ControlPath MFGSolution::feedback() const { return feedback_of(solution, numerics.alpha_max); }

MFGSolution solve_mfg_fixed_point(const GameSpec& spec, const Numerics& numerics,
                                  const FixedPointOptions& options) {
  spec.validate();
  if (spec.kind != GameKind::kMeanField) throw InvalidArgument("mfg: spec.kind must be mfg");
  if (!(options.damping > 0.0 && options.damping <= 1.0)) {
    throw InvalidArgument("mfg: damping must lie in (0, 1]");
  }
  if (!(options.tol > 0.0) || options.max_iter < 1) {
    throw InvalidArgument("mfg: tol must be > 0 and max_iter >= 1");
  }
  const TimeGrid grid = make_time_grid(spec.horizon, numerics.n_steps);
  auto bundle = std::make_shared<const PathBundle>(
      simulate_reference(spec, grid, numerics.n_paths, numerics.seed));
  const std::uint64_t flow_seed = derive_seed(numerics.seed, 1);
  const std::size_t flow_paths = numerics.n_paths + numerics.n_paths % 2;

  MeanFlow m;
  m.grid = grid;
  for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
    m.values.push_back(spec.x0 * std::exp(-spec.dissipation * grid.t(k)));
  }
  m.se.assign(grid.n_nodes(), 0.0);

  std::vector<IterationRecord> trace;
  for (std::size_t it = 1; it <= options.max_iter; ++it) {
    auto sol = solve_for_flow(*bundle, m, numerics.bsde);
    const ControlPath fb = feedback_of(sol, numerics.alpha_max);
    MeanFlow fresh = mean_flow_from_feedback(spec, grid, fb, flow_paths, flow_seed);
    MeanFlow next = m;
    for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
      next.values[k] = (1.0 - options.damping) * m.values[k] + options.damping * fresh.values[k];
    }
    const double update = sup_distance(next.values, m.values);
    trace.push_back({it, update, sol->y0_regression(0)});
    if (update <= options.tol) {
      MFGSolution out;
      out.spec = spec;
      out.numerics = numerics;
      out.options = options;
      out.flow = std::move(fresh);
      out.bundle = bundle;
      out.solution = sol;
      out.value = {sol->y0_regression(0), sol->y0_standard_error(0)};
      out.trace = std::move(trace);
      out.consistency = consistency_residual(out, flow_paths, derive_seed(numerics.seed, 2));
      return out;
    }
    m = std::move(next);
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "mfg: no convergence in %zu iterations (last update %.3g)",
                options.max_iter, trace.back().update);
  throw IterationFailure(buf, std::move(trace));
}

Matrix MfgClosedForm::feedback(std::size_t node, const Matrix& states) const {
  return (-2.0 * A.at(node) * states.array()).matrix();
}

MeanFlow MfgClosedForm::flow() const {
  MeanFlow f;
  f.grid = grid;
  f.values = m;
  f.se.assign(m.size(), 0.0);
  return f;
}

std::string MfgClosedForm::csv() const {
  std::string out = "t,m,A,D\n";
  char buf[128];
  for (std::size_t k = 0; k < A.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", grid.t(k), m[k], A[k], D[k]);
    out += buf;
  }
  return out;
}

MfgClosedForm mfg_closed_form(const GameSpec& spec, const TimeGrid& grid, std::size_t substeps) {
  spec.validate();
  const double k = spec.dissipation;
  const double x0 = spec.x0;
  // m(t) = x0 exp(-(L(0) - L(t))) with L(t) = int_t^T (k + 2A). The first pass
  // finds L(0); the second integrates (A, L, D) backward with m in closed form.
  auto rhs = [k, x0](double total) {
    return [k, x0, total](double, const Vector& y) {
      Vector d(3);
      d(0) = 2.0 * y(0) * y(0) + 2.0 * k * y(0);
      d(1) = -(k + 2.0 * y(0));
      d(2) = -y(0) - x0 * std::exp(-(total - y(1)));
      return d;
    };
  };
  Vector terminal(3);
  terminal << 1.0, 0.0, 0.0;
  const double total = rk4_backward(grid, terminal, rhs(0.0), substeps).front()(1);
  const auto path = rk4_backward(grid, terminal, rhs(total), substeps);
  MfgClosedForm r;
  r.grid = grid;
  r.dissipation = k;
  for (const Vector& y : path) {
    r.A.push_back(y(0));
    r.m.push_back(x0 * std::exp(-(total - y(1))));
    r.D.push_back(y(2));
  }
  r.value = r.A.front() * x0 * x0 + r.D.front();
  return r;
}

ConsistencyCheck consistency_residual(const GameSpec& spec, const MeanFlow& flow,
                                      const ControlPath& feedback, std::size_t n_paths,
                                      std::uint64_t seed) {
  const MeanFlow fresh = mean_flow_from_feedback(spec, flow.grid, feedback, n_paths, seed);
  return {sup_distance(flow.values, fresh.values), fresh.max_se()};
}

ConsistencyCheck consistency_residual(const MFGSolution& solution, std::size_t n_paths,
                                      std::uint64_t seed) {
  return consistency_residual(solution.spec, solution.flow, solution.feedback(), n_paths, seed);
}

}  // namespace weakgame::mfg
