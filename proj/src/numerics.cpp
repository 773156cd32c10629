#include "weakgame/numerics.hpp"

#include <cstdio>

namespace weakgame {

std::string Perturbation::label() const {
  char buf[48];
  if (kind == Kind::kShift) {
    std::snprintf(buf, sizeof buf, "shift%+.2f", amount);
  } else {
    std::snprintf(buf, sizeof buf, "scale%.2f", amount);
  }
  return buf;
}

std::vector<Perturbation> default_perturbations() {
  using K = Perturbation::Kind;
  return {{K::kShift, 0.25}, {K::kShift, -0.25}, {K::kShift, 0.5},
          {K::kShift, -0.5}, {K::kScale, 0.8},   {K::kScale, 1.2}};
}

namespace {

Vector rk4_step(const OdeRhs& rhs, double t, const Vector& y, double h) {
  const Vector k1 = rhs(t, y);
  const Vector k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1);
  const Vector k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2);
  const Vector k4 = rhs(t + h, y + h * k3);
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

std::vector<Vector> rk4_backward(const TimeGrid& grid, const Vector& terminal, const OdeRhs& rhs,
                                 std::size_t substeps) {
  if (substeps < 1) throw InvalidArgument("rk4_backward: substeps must be >= 1");
  const std::size_t K = grid.n_steps;
  std::vector<Vector> out(K + 1);
  out[K] = terminal;
  const double h = -grid.dt() / static_cast<double>(substeps);
  for (std::size_t k = K; k-- > 0;) {
    Vector y = out[k + 1];
    double t = grid.t(k + 1);
    for (std::size_t s = 0; s < substeps; ++s) {
      y = rk4_step(rhs, t, y, h);
      t += h;
    }
    out[k] = y;
  }
  return out;
}

std::vector<Vector> rk4_forward(const TimeGrid& grid, const Vector& initial, const OdeRhs& rhs,
                                std::size_t substeps) {
  if (substeps < 1) throw InvalidArgument("rk4_forward: substeps must be >= 1");
  const std::size_t K = grid.n_steps;
  std::vector<Vector> out(K + 1);
  out[0] = initial;
  const double h = grid.dt() / static_cast<double>(substeps);
  for (std::size_t k = 0; k < K; ++k) {
    Vector y = out[k];
    double t = grid.t(k);
    for (std::size_t s = 0; s < substeps; ++s) {
      y = rk4_step(rhs, t, y, h);
      t += h;
    }
    out[k + 1] = y;
  }
  return out;
}

double trapezoid(const std::vector<double>& values, double dt) {
  if (values.size() < 2) return 0.0;
  double s = 0.5 * (values.front() + values.back());
  for (std::size_t k = 1; k + 1 < values.size(); ++k) s += values[k];
  return s * dt;
}

}  // namespace weakgame
