#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "weakgame/numerics.hpp"

/// Oracle and property checks run by `weakgame validate`.
namespace weakgame::validate {

struct Check {
  std::string name;
  std::string group;  // "isaacs" or "property"
  bool passed = false;
  double value = 0.0;      // measured quantity
  double threshold = 0.0;  // what it was compared against
  std::string detail;
};

struct ValidationReport {
  std::vector<Check> checks;
  bool all_passed() const;
  /// Fixed-width pass/fail table, one check per line.
  std::string table() const;
};

struct ValidateOptions {
  std::size_t n_paths = 20'000;
  std::size_t n_steps = 50;
  std::uint64_t seed = Numerics{}.seed;
};

/// H+ = H- = x with exact floating-point equality on a 25 x 40 (x, z) grid.
Check isaacs_identity();
/// Nested grid search over u, v in [-10, 10] (10^3 points each) of inf sup h1
/// and sup inf h1 at several (x, z); both within 1e-2 of x.
Check isaacs_brute_force();

/// mean(weight) - 1 within 3 SE for a bounded feedback, on one- and
/// four-dimensional bundles.
Check girsanov_normalization(const ValidateOptions& o);
/// Bundles and BSDE solutions bit-identical for one and four threads.
Check seed_determinism(const ValidateOptions& o);
/// Y at t_K equals the terminal function exactly (saddle and N-player).
Check terminal_exactness(const ValidateOptions& o);

/// Mean |Y_k - Y_{k+1} - f dt + Z dW| of the closed-form solution on reference
/// paths, averaged over nodes (and equations); SE across paths.
Estimate saddle_one_step_residual(double horizon, double x0, std::size_t n_steps,
                                  std::size_t n_paths, std::uint64_t seed);
Estimate nplayer_one_step_residual(std::size_t n_players, double horizon, double x0,
                                   std::size_t n_steps, std::size_t n_paths, std::uint64_t seed);
Estimate mfg_one_step_residual(double horizon, double x0, std::size_t n_steps,
                               std::size_t n_paths, std::uint64_t seed);
/// Halving dt at least halves the residual, up to 2 SE, for all three games.
Check one_step_residuals(const ValidateOptions& o);

/// Symmetry (exact), identity (zero) and the triangle inequality on 100 random
/// triples for empirical_w2.
Check w2_axioms(std::uint64_t seed);

ValidationReport run_validation(const ValidateOptions& o = {});

}  // namespace weakgame::validate
