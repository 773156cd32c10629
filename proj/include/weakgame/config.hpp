#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "weakgame/mfg.hpp"
#include "weakgame/numerics.hpp"
#include "weakgame/sim.hpp"

namespace weakgame {

enum class RunKind { kZeroSum, kNPlayer, kMeanField, kConverge };

std::string to_string(RunKind kind);

/// Everything a run needs, with every default filled in.
struct RunConfig {
  RunKind kind = RunKind::kZeroSum;
  GameSpec spec;
  Numerics numerics;
  mfg::FixedPointOptions fixed_point;
  std::vector<std::size_t> n_list{2, 4, 8, 16, 32, 64};
  std::size_t w2_samples = 10'000;
  std::string out_dir = "out";
};

/// Line-oriented `key = value` text. Lines may also be split on top-level
/// commas; `#` starts a comment. Numerics keys carry a `numerics.` prefix or
/// follow a `[numerics]` header. Lists use JSON syntax, e.g. N_list = [2, 4, 8].
///
/// Top-level keys: kind (zerosum | nplayer | mfg | converge), T, x0, k, N,
/// x0_variance, N_list, out.
/// Numerics keys: n_steps, n_paths, seed, alpha_max, z_max, ridge, z_estimator,
/// lambda, tol, max_iter, w2_samples.
///
/// Throws InvalidArgument naming the key and the violated constraint.
RunConfig parse_config(const std::string& text);

/// Checks cross-field constraints (run by parse_config as well).
void validate_config(const RunConfig& config);

/// key = value lines that parse back to the same config.
std::string dump_config(const RunConfig& config);

}  // namespace weakgame
