#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "weakgame/bsde.hpp"
#include "weakgame/numerics.hpp"
#include "weakgame/sim.hpp"

/// N-player game: player i controls dX^i = (-k X^i + a^i) dt + dW^i and pays
///   E[ int (S_s + |a^i_s|^2 / 2) ds + |X^i_T|^2 ],  S = (1/N) sum_j X^j.
namespace weakgame::nplayer {

inline constexpr std::size_t kMaxPlayers = 64;

/// Reference-measure driver of equation i:
///   S - (Z^{ii})^2 / 2 - sum_{j != i} Z^{ij} Z^{jj}.
double equilibrium_driver(std::size_t i, std::span<const double> x,
                          std::span<const double> z_row_i, std::span<const double> z_diag);

class NPlayerDriver : public Driver {
 public:
  explicit NPlayerDriver(std::size_t n_players);
  std::size_t n_equations() const override { return n_; }
  std::size_t n_brownian() const override { return n_; }
  void evaluate(std::size_t node, double t, std::span<const double> state, const Matrix& z,
                std::span<double> out) const override;
  void evaluate_block(std::size_t node, double t, const Matrix& states,
                      const std::vector<Matrix>& z, Matrix& out) const override;
  void evaluate_exchangeable(std::size_t node, double t, const Matrix& states,
                             const Matrix& z_diag, const Matrix& z_off,
                             Matrix& out) const override;

 private:
  std::size_t n_;
};

/// Quadratic ansatz Y^i = A x_i^2 + B x_i + C S + D on the grid nodes.
struct RiccatiCoefficients {
  TimeGrid grid;
  std::size_t n_players = 1;
  double dissipation = 0.0;
  std::size_t substeps = 8;
  std::vector<double> A, B, C, D;

  /// A(0) x0^2 + C(0) x0 + D(0).
  double value(double x0) const;
  /// -(2 A x_i + C / N) for every player, states n x N.
  Matrix feedback(std::size_t node, const Matrix& states) const;
  /// Columns t, A, B, C, D.
  std::string csv() const;
};

/// RK4 backward from the terminal conditions A = 1, B = C = D = 0.
RiccatiCoefficients riccati_oracle(const GameSpec& spec, const TimeGrid& grid,
                                   std::size_t substeps = 8);

/// Player i's criterion: running S + a_i^2 / 2, terminal x_i^2.
CostDefinition player_cost(std::size_t i);

struct NPlayerSolution {
  GameSpec spec;
  Numerics numerics;
  std::shared_ptr<const PathBundle> bundle;  // may be released after solving
  std::shared_ptr<const BSDESolution> solution;
  std::vector<Estimate> values;  // regression Y^i_0 and SE from pathwise totals

  /// a^j = -Z^{jj}(t, x) for every player, clipped to alpha_max.
  Matrix feedback_values(std::size_t node, const Matrix& states) const;
  ControlPath feedback() const;
};

NPlayerSolution solve_nash_system(const GameSpec& spec, const Numerics& numerics);

/// Y^i at node 0 evaluated at the all-x0 state.
double player_value(const NPlayerSolution& solution, std::size_t i);

/// Paired difference of two players' pathwise values (same paths).
Estimate value_spread(const NPlayerSolution& solution, std::size_t i, std::size_t j);

/// J^i(perturbed a^i, others at equilibrium) - J^i(equilibrium) on the
/// reference paths of the solution.
Estimate nash_deviation_gap(const NPlayerSolution& solution, std::size_t i,
                            const Perturbation& perturbation);

/// Time-averaged mean-squared difference between the solver's and the oracle's
/// feedback for player 0, divided by the time-averaged oracle second moment.
/// Evaluated on the first `max_paths` reference paths.
double feedback_mismatch(const NPlayerSolution& solution, const RiccatiCoefficients& oracle,
                         std::size_t max_paths = 20'000);

}  // namespace weakgame::nplayer
