#pragma once

#include <memory>
#include <vector>

#include "weakgame/bsde.hpp"
#include "weakgame/numerics.hpp"
#include "weakgame/sim.hpp"

/// Two-player zero-sum game on a shared state: player 1 minimizes
///   J(u, v) = E^{P^{u+v}}[ int (u^2 - v^2)/2 + X ds + X_T^2 ],
/// player 2 maximizes it.
namespace weakgame::zerosum {

/// Player 1's pre-Hamiltonian (u + v) z + (u^2 - v^2)/2 + x.
double h1(double x, double z, double u, double v);
/// Player 2's pre-Hamiltonian (u + v) z + (v^2 - u^2)/2 - x. Satisfies
/// h2(x, z, u, v) = -h1(x, -z, u, v).
double h2(double x, double z, double u, double v);

/// inf_u h1 = v z - (z^2 + v^2)/2 + x, attained at u = -z.
double H1(double x, double z, double v);
/// inf_v h2 = u z - (z^2 + u^2)/2 - x, attained at v = -z.
double H2(double x, double z, double u);
double argmin_u(double x, double z, double v);
double argmin_v(double x, double z, double u);

/// inf_u sup_v h1 and sup_v H1; both equal x here.
double H_plus(double x, double z);
double H_minus(double x, double z);
double isaacs_gap(double x, double z);

struct ControlPair {
  double u = 0.0;
  double v = 0.0;
};

/// Fixed point of the two best responses: (u, v) = (-z1, -z2).
ControlPair nash_fixed_point(double x, double z1, double z2);

struct ClosedForm {
  double y = 0.0;
  double z = 0.0;
};

/// Y_t = T - t + x^2 + (T - t) x,  Z_t = 2x + T - t.
ClosedForm closed_form(double t, double x, double horizon);

/// Cost J for given player controls (column 0: u, column 1: v).
CostDefinition zero_sum_cost();

struct SaddleReport {
  GameSpec spec;
  Numerics numerics;
  std::shared_ptr<const PathBundle> bundle;
  std::shared_ptr<const BSDESolution> solution;

  double v_plus = 0.0;   // upper value
  double v_minus = 0.0;  // lower value; same BSDE as v_plus
  double y0 = 0.0;
  double y0_sample_mean = 0.0;
  double y0_se = 0.0;
  double z0 = 0.0;
  ClosedForm exact;
  double y0_rel_error = 0.0;
  double z0_rel_error = 0.0;

  /// Saddle feedback (u, v) = (-Z, +Z) on the shared state.
  ControlPath saddle_controls() const;
};

SaddleReport solve_saddle(const GameSpec& spec, const Numerics& numerics);

struct DeviationRow {
  int player = 1;  // 1 deviates down the cost, 2 up
  Perturbation perturbation;
  Estimate gap;
  double epsilon = 0.0;  // 3 standard errors of the paired difference
  bool holds = false;    // gap >= -eps (player 1) or gap <= +eps (player 2)
};

/// Unilateral deviations from the saddle, evaluated by reweighting the
/// reference paths of the report.
std::vector<DeviationRow> deviation_test(const SaddleReport& report,
                                         const std::vector<Perturbation>& perturbations);

/// Sign of the Z^1 Z^2 cross term in the two-equation Nash system. kDerived
/// substitutes the equilibrium controls into the best-response drivers; kPrinted
/// uses the opposite sign.
enum class CrossTerm { kDerived, kPrinted };

struct NashSystemReport {
  GameSpec spec;
  std::shared_ptr<const BSDESolution> solution;
  CrossTerm cross_term = CrossTerm::kDerived;
  double y1_0 = 0.0;
  double y2_0 = 0.0;
  double y1_0_se = 0.0;
  /// max over nodes of |mean(Y^1 + Y^2)| and of |mean(Y^1)|.
  double antisymmetry = 0.0;
  double max_abs_y1 = 0.0;
  ClosedForm exact;
};

NashSystemReport solve_nash_system_2p(const GameSpec& spec, const Numerics& numerics,
                                      CrossTerm cross_term = CrossTerm::kDerived);

}  // namespace weakgame::zerosum
