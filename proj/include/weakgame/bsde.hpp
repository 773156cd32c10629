#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "weakgame/sim.hpp"

namespace weakgame {

/// Generator of a BSDE system, f(t, x, Z) with Z an n_equations x n_brownian
/// matrix. Must be deterministic.
class Driver {
 public:
  virtual ~Driver() = default;
  virtual std::size_t n_equations() const = 0;
  virtual std::size_t n_brownian() const = 0;

  /// One path. `z(i, j)` is the coefficient of equation i on Brownian j.
  virtual void evaluate(std::size_t node, double t, std::span<const double> state,
                        const Matrix& z, std::span<double> out) const = 0;

  /// A block of paths: states is rows x dim, z[i] is rows x n_brownian for
  /// equation i, out is rows x n_equations. The default loops over evaluate().
  virtual void evaluate_block(std::size_t node, double t, const Matrix& states,
                              const std::vector<Matrix>& z, Matrix& out) const;

  /// Square systems whose Z has one value on the diagonal (Z^{ii}, column i of
  /// z_diag) and one shared off-diagonal value per equation (Z^{ij}, j != i,
  /// column i of z_off). The default expands to full matrices.
  virtual void evaluate_exchangeable(std::size_t node, double t, const Matrix& states,
                                     const Matrix& z_diag, const Matrix& z_off,
                                     Matrix& out) const;
};

/// Driver from a per-path callable; convenient for small systems and tests.
class FunctionDriver : public Driver {
 public:
  using Fn = std::function<void(std::size_t node, double t, std::span<const double> state,
                                const Matrix& z, std::span<double> out)>;
  FunctionDriver(std::size_t n_equations, std::size_t n_brownian, Fn fn)
      : n_eq_(n_equations), n_bm_(n_brownian), fn_(std::move(fn)) {}

  std::size_t n_equations() const override { return n_eq_; }
  std::size_t n_brownian() const override { return n_bm_; }
  void evaluate(std::size_t node, double t, std::span<const double> state, const Matrix& z,
                std::span<double> out) const override {
    fn_(node, t, state, z, out);
  }

 private:
  std::size_t n_eq_;
  std::size_t n_bm_;
  Fn fn_;
};

/// Regression features of the state vector.
class Basis {
 public:
  virtual ~Basis() = default;
  virtual std::size_t dimension() const = 0;
  /// Number of distinct feature sets: 1 when every equation shares the basis,
  /// otherwise one per equation.
  virtual std::size_t n_feature_sets() const { return 1; }
  /// Feature set used by equation i.
  virtual std::size_t feature_set(std::size_t equation) const {
    return n_feature_sets() == 1 ? 0 : equation;
  }
  /// Fills out[s] (rows x dimension) for every feature set s.
  virtual void features(const Matrix& states, std::vector<Matrix>& out) const = 0;
  virtual std::string name() const = 0;
  /// True when feature set i is the image of feature set 0 under the swap of
  /// coordinates 0 and i, so exchangeable systems may share coefficients.
  virtual bool exchangeable() const { return false; }
  /// Exchangeable bases: the leading features spanning d/dx_j of the span for
  /// j != i. Pooled fits regress Z^{ij} (j != i) on these only.
  virtual std::size_t cross_dimension() const { return dimension(); }
};

/// {1, x_j, x_j x_l (j <= l)}; shared by all equations.
class QuadraticBasis : public Basis {
 public:
  explicit QuadraticBasis(std::size_t state_dim);
  std::size_t dimension() const override;
  void features(const Matrix& states, std::vector<Matrix>& out) const override;
  std::string name() const override { return "quadratic"; }

 private:
  std::size_t state_dim_;
};

/// Exchangeable features for equation i: {1, x_i, S, x_i^2, x_i S, S^2} with S
/// the population mean. With a single player S = x_1 and the set reduces to
/// {1, x, x^2}.
class SymmetricBasis : public Basis {
 public:
  explicit SymmetricBasis(std::size_t n_players);
  std::size_t dimension() const override { return n_players_ == 1 ? 3 : 6; }
  std::size_t n_feature_sets() const override { return n_players_; }
  void features(const Matrix& states, std::vector<Matrix>& out) const override;
  std::string name() const override { return "symmetric"; }
  bool exchangeable() const override { return true; }
  /// {1, x_i, S}.
  std::size_t cross_dimension() const override { return 3; }

 private:
  std::size_t n_players_;
};

/// How Z is read off the martingale increment at each node.
enum class ZEstimator {
  kPlain,         // regress Y_{k+1} dW / dt
  kCentered,      // regress (Y_{k+1} - E_k[Y_{k+1}]) dW / dt
  kDecorrelated,  // centered, then one sweep removing cross-Brownian products
};

std::string to_string(ZEstimator z);
ZEstimator z_estimator_from_string(const std::string& name);

struct BsdeOptions {
  /// lambda_ridge = ridge_factor * (rows of the regression): n_paths, or
  /// n_paths * n_equations when pooled.
  double ridge_factor = 1e-8;
  double z_max = 100.0;
  ZEstimator z_estimator = ZEstimator::kDecorrelated;
  /// Keep per-path Y and Z tables. nullopt: keep them when they fit in
  /// `auto_store_limit` doubles.
  std::optional<bool> store_paths;
  std::size_t auto_store_limit = 20'000'000;
  /// Regularized Gram matrices with a larger condition number are rejected.
  double max_condition = 1e14;
  /// With an exchangeable basis and a square system, fit one set of Y, Z^{ii}
  /// and Z^{ij} (j != i) coefficients on the data of all equations stacked.
  /// Only valid when the system is invariant under permutations of players.
  bool pool_exchangeable = true;
  /// After Z is known, refit Y on Y_{k+1} - Z dW (same conditional
  /// expectation, O(dt^2) instead of O(dt) residual variance). Ignored by the
  /// plain estimator.
  bool martingale_control = true;
};

struct BsdeDiagnostics {
  std::vector<double> condition;  // per node, worst feature set
  std::size_t z_clips = 0;
  double ridge = 0.0;
  bool pooled = false;
  std::string z_estimator;
};

/// Terminal function of the state: rows x dim -> rows x n_equations.
using TerminalFn = std::function<Matrix(const Matrix& states)>;

struct BSDESolution {
  TimeGrid grid;
  std::size_t n_equations = 0;
  std::size_t n_brownian = 0;
  std::size_t n_paths = 0;

  /// Per node k < K: n_equations x d, regression of Y_{k+1} on the features.
  std::vector<Matrix> y_coefficients;
  /// Per node k < K and equation i: d x n_brownian.
  std::vector<std::vector<Matrix>> z_coefficients;

  /// Sample mean of Y per node (n_nodes x n_equations).
  Matrix y_mean;
  /// Sample mean of clipped Z per node k < K (n_equations x n_brownian each).
  std::vector<Matrix> z_mean;

  /// Optional per-path tables: y_paths[k] is n_paths x n_equations and
  /// z_paths[k][i] is n_paths x n_brownian.
  std::vector<Matrix> y_paths;
  std::vector<std::vector<Matrix>> z_paths;

  /// terminal + sum_k f_k dt per path (n_paths x n_equations). Its mean equals
  /// Y_0 up to the ridge term; used for standard errors and paired gaps.
  Matrix pathwise_total;

  /// Y_0 as the regression value at the (mean) initial state, and as the plain
  /// sample mean over paths.
  Vector y0_regression;
  Vector y0_sample_mean;
  Matrix z0_regression;  // n_equations x n_brownian

  BsdeDiagnostics diagnostics;

  std::shared_ptr<const Basis> basis;
  std::shared_ptr<const Driver> driver;
  BsdeOptions options;

  bool has_paths() const { return !y_paths.empty(); }
  /// Standard error of Y_0^i from the pathwise totals.
  double y0_standard_error(std::size_t equation) const;
  /// Z at node k < K for equation i on arbitrary states (rows x n_brownian),
  /// clipped to z_max.
  Matrix z(std::size_t node, std::size_t equation, const Matrix& states) const;
  /// Regression estimate of E[Y_{k+1} | X_k] for every equation.
  Matrix continuation(std::size_t node, const Matrix& states) const;
  /// Y at node k: continuation + f dt (node K: not available, use the terminal).
  Matrix value(std::size_t node, const Matrix& states) const;
};

/// Explicit one-step least-squares Monte Carlo on a reference-measure bundle.
BSDESolution solve_backward(const PathBundle& bundle, std::shared_ptr<const Driver> driver,
                            const TerminalFn& terminal, std::shared_ptr<const Basis> basis,
                            const BsdeOptions& options = {});

/// Ridge least squares: (F'F + ridge_factor * n * I) beta = F'y. Requires at
/// least 10 rows per feature.
Vector regress(const Vector& values, const Matrix& features, double ridge_factor = 1e-8);

}  // namespace weakgame
