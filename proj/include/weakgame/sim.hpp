#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "weakgame/core.hpp"

namespace weakgame {

/// Paths in rows, players (or equations) in columns.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Uniform grid 0 = t_0 < ... < t_K = T.
struct TimeGrid {
  double horizon = 1.0;
  std::size_t n_steps = 1;
  std::vector<double> nodes;

  double dt() const { return horizon / static_cast<double>(n_steps); }
  double t(std::size_t k) const { return nodes.at(k); }
  std::size_t n_nodes() const { return nodes.size(); }
  bool operator==(const TimeGrid& other) const = default;
};

TimeGrid make_time_grid(double horizon, std::size_t n_steps);

enum class GameKind { kZeroSum, kNPlayer, kMeanField };

std::string to_string(GameKind kind);

/// Parameters of the running example: quadratic effort, population-mean running
/// cost, quadratic terminal cost. Dynamics dX = -k X dt + dW under the reference
/// measure.
struct GameSpec {
  GameKind kind = GameKind::kZeroSum;
  double horizon = 1.0;
  double dissipation = 0.0;  // k
  double x0 = 0.0;
  std::size_t n_players = 2;
  /// Zero means a point mass at x0. A positive value makes the initial state
  /// Gaussian; oracle checks assume the point mass.
  double x0_variance = 0.0;

  void validate() const;
  /// Number of state coordinates (= independent Brownian motions).
  std::size_t state_dim() const;
};

struct SimOptions {
  /// Pair path 2q+1 with the negated normals of path 2q.
  bool antithetic = false;
};

/// Simulated paths on a grid. States are stored; Brownian increments are a pure
/// function of (seed, path, player, step) and are regenerated on request unless
/// they were loaded from a file.
class PathBundle {
 public:
  PathBundle(TimeGrid grid, std::size_t n_paths, std::size_t dim, std::uint64_t seed,
             double dissipation, SimOptions options, std::string measure_tag);

  const TimeGrid& grid() const { return grid_; }
  std::size_t n_paths() const { return n_paths_; }
  std::size_t dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }
  double dissipation() const { return dissipation_; }
  const SimOptions& options() const { return options_; }
  const std::string& measure_tag() const { return measure_tag_; }
  bool is_reference() const { return measure_tag_ == kReferenceTag; }

  const Matrix& states(std::size_t node) const { return states_.at(node); }
  Matrix& mutable_states(std::size_t node) { return states_.at(node); }

  /// dW over [t_step, t_step+1], n_paths x dim.
  Matrix increments(std::size_t step) const;
  /// Second normal of each cell (used by the exact OU transition).
  Matrix auxiliary_normals(std::size_t step) const;
  void materialize_increments();
  bool has_stored_increments() const { return !stored_increments_.empty(); }

  /// Identical grid, path count, dimension and seed.
  bool same_noise(const PathBundle& other) const;

  static constexpr const char* kReferenceTag = "reference";

 private:
  friend PathBundle read_bundle(std::istream& in);

  TimeGrid grid_;
  std::size_t n_paths_;
  std::size_t dim_;
  std::uint64_t seed_;
  double dissipation_;
  SimOptions options_;
  std::string measure_tag_;
  std::vector<Matrix> states_;
  std::vector<Matrix> stored_increments_;
};

/// Exact Gaussian OU transition under the reference measure.
PathBundle simulate_reference(const GameSpec& spec, const TimeGrid& grid, std::size_t n_paths,
                              std::uint64_t seed, SimOptions options = {});

/// How player controls enter the state: each control drives its own coordinate,
/// or all controls add up on a single shared coordinate (two-player game).
enum class ControlCoupling { kPerPlayer, kSummed };

/// (node, t, states n x dim) -> controls n x n_controls.
using FeedbackFn = std::function<Matrix(std::size_t node, double t, const Matrix& states)>;

struct ControlSample {
  Matrix values;  // n_paths x n_controls, after clipping
  std::size_t clipped = 0;
};

/// Controls either evaluated from a feedback rule on the grid or read from a
/// table. Feedback output is clipped to |alpha| <= alpha_max.
class ControlPath {
 public:
  enum class Provenance { kFeedback, kTabulated };

  static ControlPath feedback(FeedbackFn fn, std::size_t n_controls,
                              ControlCoupling coupling = ControlCoupling::kPerPlayer,
                              double alpha_max = 50.0, std::string label = "feedback");
  static ControlPath tabulated(std::vector<Matrix> table,
                               ControlCoupling coupling = ControlCoupling::kPerPlayer,
                               std::string label = "tabulated");
  static ControlPath zero(std::size_t n_controls,
                          ControlCoupling coupling = ControlCoupling::kPerPlayer);

  Provenance provenance() const { return provenance_; }
  std::size_t n_controls() const { return n_controls_; }
  ControlCoupling coupling() const { return coupling_; }
  const std::string& label() const { return label_; }

  /// Controls at the left end of step `node`. Throws NumericalFailure on
  /// non-finite feedback output.
  ControlSample evaluate(const PathBundle& bundle, std::size_t node) const;
  /// Drift per Brownian coordinate induced by the given controls.
  Matrix drift(const Matrix& controls) const;
  std::size_t drift_dim() const {
    return coupling_ == ControlCoupling::kSummed ? 1 : n_controls_;
  }

  /// Evaluates a feedback control on every step of a bundle.
  ControlPath tabulate(const PathBundle& bundle) const;

 private:
  Provenance provenance_ = Provenance::kFeedback;
  FeedbackFn fn_;
  std::vector<Matrix> table_;
  std::size_t n_controls_ = 0;
  ControlCoupling coupling_ = ControlCoupling::kPerPlayer;
  double alpha_max_ = 50.0;
  std::string label_;
};

/// Euler-Maruyama for dX = (-kX + drift) dt + dW directly under the tilted
/// measure. Uses the same normals as simulate_reference for equal seeds.
PathBundle simulate_controlled(const GameSpec& spec, const TimeGrid& grid,
                               const ControlPath& controls, std::size_t n_paths,
                               std::uint64_t seed, SimOptions options = {},
                               std::size_t* clip_count = nullptr);

/// dP^alpha/dP on each reference path, with left-endpoint controls.
Vector girsanov_weight(const PathBundle& bundle, const ControlPath& controls);

/// Running and terminal cost of one criterion. Running costs receive the
/// player controls (not the drift).
struct CostDefinition {
  std::function<Vector(std::size_t node, double t, const Matrix& states, const Matrix& controls)>
      running;
  std::function<Vector(const Matrix& terminal_states)> terminal;
};

/// Per-path weight * cost on reference paths; its mean is the cost under P^alpha.
Vector weighted_cost_samples(const PathBundle& bundle, const ControlPath& controls,
                             const CostDefinition& cost);

Estimate reweighted_cost(const PathBundle& bundle, const ControlPath& controls,
                         const CostDefinition& cost);

/// Columnar little-endian layout; see README.
void write_bundle(std::ostream& out, const PathBundle& bundle);
PathBundle read_bundle(std::istream& in);

}  // namespace weakgame
