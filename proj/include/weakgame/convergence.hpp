#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "weakgame/mfg.hpp"
#include "weakgame/nplayer.hpp"

/// N -> infinity experiments: value gaps and control-law gaps between the
/// N-player equilibrium and the mean field equilibrium.
namespace weakgame::convergence {

struct ValueGap {
  std::size_t n_players = 0;
  double nplayer_value = 0.0;
  double mfg_value = 0.0;
  Estimate gap;        // V^{1,N} - V^mfg; SE from paired pathwise totals
  double gap_sq = 0.0;
  double gap_sq_se = 0.0;  // delta method, 2 |gap| se
  double oracle_gap = 0.0;  // Riccati minus MFG closed form
};

/// Uses an existing mean field solution and N-player solution on the same seed.
ValueGap value_gap(const nplayer::NPlayerSolution& nplayer, const mfg::MFGSolution& mfg);
/// Solves both games (spec.kind is ignored) with common random numbers.
ValueGap value_gap(const GameSpec& spec, std::size_t n_players, const Numerics& numerics);

/// Oracle value gap: riccati_oracle(N).value(x0) - mfg_closed_form.value.
double oracle_value_gap(const GameSpec& spec, std::size_t n_players, const TimeGrid& grid);

/// sqrt((m1 - m2)^2 + (s1 - s2)^2).
double wasserstein2_gaussian(double m1, double s1, double m2, double s2);

/// Quantile coupling of two equal-size samples: RMS of the sorted differences.
double empirical_w2(std::span<const double> a, std::span<const double> b);

struct ControlLawGap {
  std::size_t n_players = 0;
  /// int_0^T W2^2 dt from player `player` of the N-player system against the
  /// mean field control, trapezoid over the control nodes t_0 .. t_{K-1}.
  Estimate empirical;  // SE from 10 contiguous batches
  double gaussian = 0.0;  // same integral with the oracles' Gaussian laws
};

/// Simulates both equilibria under the controlled measures on `n_samples`
/// paths with the same seed (player 0 of the N-player system shares the mean
/// field noise).
ControlLawGap control_law_gap(const nplayer::NPlayerSolution& nplayer,
                              const mfg::MFGSolution& mfg, std::size_t n_samples,
                              std::uint64_t seed, std::size_t player = 0);

/// Gaussian control-law gap from the Riccati and MFG oracles.
double gaussian_control_law_gap(const GameSpec& spec, std::size_t n_players,
                                const TimeGrid& grid, std::size_t substeps = 8);

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Least squares of log y on log N over every point but the smallest N.
RateFit fit_rate(std::span<const double> n, std::span<const double> y);

/// variance / N.
double clt_baseline(double variance, std::size_t n);

struct RateRow {
  std::size_t n_players = 0;
  double value_gap_sq = 0.0;
  double value_gap_se = 0.0;
  double w2_gap = 0.0;
  double w2_gap_se = 0.0;
  double clt_baseline = 0.0;
  // Cross-checks, not part of the CSV.
  double value_gap = 0.0;
  double nplayer_value = 0.0;
  double oracle_value_gap_sq = 0.0;
  double gaussian_w2_gap = 0.0;
  double seconds = 0.0;
};

struct RateTable {
  GameSpec spec;
  Numerics numerics;
  std::vector<RateRow> rows;
  double mfg_value = 0.0;
  double mfg_oracle_value = 0.0;
  std::size_t mfg_iterations = 0;
  double terminal_variance = 0.0;  // Var X_T under the mean field equilibrium
  RateFit value_fit;
  RateFit w2_fit;
  RateFit oracle_value_fit;
  double c_hat = 0.0;  // max_N N * value_gap_sq
  /// Each consecutive W2 gap decrease exceeds 2 combined SE.
  bool w2_monotone = false;
  /// Player 2 against player 1 at the smallest N, when it is 2.
  std::optional<Estimate> player2_w2_gap;
  double seconds = 0.0;

  /// Columns N, value_gap_sq, value_gap_se, w2_gap, w2_gap_se, clt_baseline.
  std::string csv() const;
};

struct SuiteOptions {
  std::size_t w2_samples = 10'000;
  mfg::FixedPointOptions fixed_point;
  /// Called after every N with the finished row.
  std::function<void(const RateRow&)> progress;
};

/// Mean field solve once, then for each N: N-player solve, value gap, control
/// gap. N-player paths are released after each N.
RateTable run_convergence_suite(const GameSpec& spec, const std::vector<std::size_t>& n_list,
                                const Numerics& numerics, const SuiteOptions& options = {});

}  // namespace weakgame::convergence
