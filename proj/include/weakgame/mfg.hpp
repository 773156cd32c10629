#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "weakgame/bsde.hpp"
#include "weakgame/numerics.hpp"
#include "weakgame/sim.hpp"

/// Mean field limit of the N-player game: a representative player with
/// dX = (-k X + a) dt + dW pays E[ int (m_s + |a_s|^2 / 2) ds + |X_T|^2 ], where
/// m is the mean of the population and, in equilibrium, of X itself.
namespace weakgame::mfg {

/// Reference-measure driver m - z^2 / 2 (inf_u {z u + u^2 / 2} + m).
double mfg_driver(double x, double z, double m);
/// Minimizer of z u + u^2 / 2.
double argmin_control(double z);

/// First moment of the population law on the grid nodes.
struct MeanFlow {
  TimeGrid grid;
  std::vector<double> values;
  std::vector<double> se;  // zero for deterministic flows

  /// Linear interpolation between nodes; clamped outside [0, T].
  double at(double t) const;
  double max_se() const;
};

/// Per-node sample means of X under the feedback, simulated directly under the
/// controlled measure with antithetic pairs (n_paths must be even). Standard
/// errors come from the pair averages.
MeanFlow mean_flow_from_feedback(const GameSpec& spec, const TimeGrid& grid,
                                 const ControlPath& feedback, std::size_t n_paths,
                                 std::uint64_t seed);

struct FixedPointOptions {
  double damping = 0.5;  // lambda in (0, 1]
  double tol = 1e-4;
  std::size_t max_iter = 50;
};

struct IterationRecord {
  std::size_t iteration = 0;
  double update = 0.0;  // sup_k |m^(n+1) - m^(n)|
  double value = 0.0;   // Y_0 of this iteration's BSDE
};

/// Fixed-point iteration ran out of iterations. Carries the full trace.
class IterationFailure : public std::runtime_error {
 public:
  IterationFailure(const std::string& what, std::vector<IterationRecord> trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const std::vector<IterationRecord>& trace() const { return trace_; }

 private:
  std::vector<IterationRecord> trace_;
};

struct ConsistencyCheck {
  double residual = 0.0;  // sup_k |flow - fresh sample mean|
  double max_se = 0.0;    // largest standard error of the fresh means
};

struct MFGSolution {
  GameSpec spec;
  Numerics numerics;
  FixedPointOptions options;
  /// Flow generated by the final feedback (undamped).
  MeanFlow flow;
  std::shared_ptr<const PathBundle> bundle;
  std::shared_ptr<const BSDESolution> solution;
  Estimate value;  // regression Y_0 with SE from pathwise totals
  std::vector<IterationRecord> trace;
  /// Independent-seed check of the returned flow.
  ConsistencyCheck consistency;

  std::size_t iterations() const { return trace.size(); }
  /// a = -Z(t, x), clipped to alpha_max. states n x 1.
  Matrix feedback_values(std::size_t node, const Matrix& states) const;
  ControlPath feedback() const;
};

/// BSDE Y_t = X_T^2 + int (m_s - Z_s^2 / 2) ds - int Z dW on reference paths for
/// a given flow.
std::shared_ptr<const BSDESolution> solve_for_flow(const PathBundle& bundle, const MeanFlow& flow,
                                                   const BsdeOptions& options);

/// Damped iteration m <- (1 - lambda) m + lambda m_new starting from the
/// uncontrolled mean x0 e^{-kt}. The BSDE reuses one reference bundle and the
/// flow simulation one seed, so the map is deterministic.
MFGSolution solve_mfg_fixed_point(const GameSpec& spec, const Numerics& numerics,
                                  const FixedPointOptions& options = {});

/// Quadratic ansatz Y = A x^2 + D on the grid nodes with the equilibrium mean.
struct MfgClosedForm {
  TimeGrid grid;
  double dissipation = 0.0;
  std::vector<double> A, D, m;
  double value = 0.0;  // A(0) x0^2 + D(0)

  /// -2 A(t) x.
  Matrix feedback(std::size_t node, const Matrix& states) const;
  MeanFlow flow() const;
  /// Columns t, m, A, D.
  std::string csv() const;
};

/// A' = 2A^2 + 2kA, A(T) = 1; m' = -(k + 2A) m, m(0) = x0; D' = -A - m, D(T) = 0.
MfgClosedForm mfg_closed_form(const GameSpec& spec, const TimeGrid& grid,
                              std::size_t substeps = 8);

/// Re-simulates the feedback with a fresh seed and compares the means to the flow.
ConsistencyCheck consistency_residual(const GameSpec& spec, const MeanFlow& flow,
                                      const ControlPath& feedback, std::size_t n_paths,
                                      std::uint64_t seed);
ConsistencyCheck consistency_residual(const MFGSolution& solution, std::size_t n_paths,
                                      std::uint64_t seed);

}  // namespace weakgame::mfg
