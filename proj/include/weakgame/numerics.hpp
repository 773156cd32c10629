#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "weakgame/bsde.hpp"

namespace weakgame {

/// Resolution and seeding shared by every solver.
struct Numerics {
  std::size_t n_steps = 50;
  std::size_t n_paths = 100'000;
  std::uint64_t seed = 20'240'501;
  double alpha_max = 50.0;
  BsdeOptions bsde;
};

/// Unilateral change of one player's equilibrium control.
struct Perturbation {
  enum class Kind { kShift, kScale };
  Kind kind = Kind::kShift;
  double amount = 0.0;

  double apply(double control) const {
    return kind == Kind::kShift ? control + amount : control * amount;
  }
  bool is_identity() const {
    return kind == Kind::kShift ? amount == 0.0 : amount == 1.0;
  }
  std::string label() const;
};

/// Constant shifts {+-0.25, +-0.5} and feedback scalings {0.8, 1.2}.
std::vector<Perturbation> default_perturbations();

/// Classic fourth-order Runge-Kutta over the grid nodes, `substeps` per
/// interval. Backward integration starts from the value at T.
using OdeRhs = std::function<Vector(double t, const Vector& y)>;
std::vector<Vector> rk4_backward(const TimeGrid& grid, const Vector& terminal, const OdeRhs& rhs,
                                 std::size_t substeps = 8);
std::vector<Vector> rk4_forward(const TimeGrid& grid, const Vector& initial, const OdeRhs& rhs,
                                std::size_t substeps = 8);

/// Trapezoid rule over values sampled on consecutive grid nodes.
double trapezoid(const std::vector<double>& values, double dt);

}  // namespace weakgame
