#include "weakgame/bsde.hpp"

#include <algorithm>
#include <cmath>

#include "weakgame/parallel.hpp"

namespace weakgame {

void Driver::evaluate_block(std::size_t node, double t, const Matrix& states,
                            const std::vector<Matrix>& z, Matrix& out) const {
  const std::size_t n_eq = n_equations();
  const std::size_t n_bm = n_brownian();
  out.resize(states.rows(), static_cast<Eigen::Index>(n_eq));
  std::vector<double> state(static_cast<std::size_t>(states.cols()));
  std::vector<double> f(n_eq);
  Matrix zp(static_cast<Eigen::Index>(n_eq), static_cast<Eigen::Index>(n_bm));
  for (Eigen::Index p = 0; p < states.rows(); ++p) {
    for (Eigen::Index j = 0; j < states.cols(); ++j) state[static_cast<std::size_t>(j)] = states(p, j);
    for (std::size_t i = 0; i < n_eq; ++i) zp.row(static_cast<Eigen::Index>(i)) = z[i].row(p);
    evaluate(node, t, state, zp, f);
    for (std::size_t i = 0; i < n_eq; ++i) out(p, static_cast<Eigen::Index>(i)) = f[i];
  }
}

void Driver::evaluate_exchangeable(std::size_t node, double t, const Matrix& states,
                                  const Matrix& z_diag, const Matrix& z_off, Matrix& out) const {
  const Eigen::Index n = z_diag.cols();
  std::vector<Matrix> z(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    Matrix& zi = z[static_cast<std::size_t>(i)];
    zi = z_off.col(i).replicate(1, n);
    zi.col(i) = z_diag.col(i);
  }
  evaluate_block(node, t, states, z, out);
}

// ---------------------------------------------------------------------------
// Bases

QuadraticBasis::QuadraticBasis(std::size_t state_dim) : state_dim_(state_dim) {
  if (state_dim_ < 1) throw InvalidArgument("QuadraticBasis: state dimension must be >= 1");
}

std::size_t QuadraticBasis::dimension() const {
  return 1 + state_dim_ + state_dim_ * (state_dim_ + 1) / 2;
}

void QuadraticBasis::features(const Matrix& states, std::vector<Matrix>& out) const {
  if (static_cast<std::size_t>(states.cols()) != state_dim_) {
    throw InvalidArgument("QuadraticBasis: state dimension mismatch");
  }
  out.resize(1);
  Matrix& f = out[0];
  f.resize(states.rows(), static_cast<Eigen::Index>(dimension()));
  f.col(0).setOnes();
  Eigen::Index c = 1;
  for (std::size_t j = 0; j < state_dim_; ++j) f.col(c++) = states.col(static_cast<Eigen::Index>(j));
  for (std::size_t j = 0; j < state_dim_; ++j) {
    for (std::size_t l = j; l < state_dim_; ++l) {
      f.col(c++) = states.col(static_cast<Eigen::Index>(j))
                       .cwiseProduct(states.col(static_cast<Eigen::Index>(l)));
    }
  }
}

SymmetricBasis::SymmetricBasis(std::size_t n_players) : n_players_(n_players) {
  if (n_players_ < 1) throw InvalidArgument("SymmetricBasis: need at least one player");
}

void SymmetricBasis::features(const Matrix& states, std::vector<Matrix>& out) const {
  if (static_cast<std::size_t>(states.cols()) != n_players_) {
    throw InvalidArgument("SymmetricBasis: state dimension mismatch");
  }
  out.resize(n_players_);
  const Eigen::Index rows = states.rows();
  if (n_players_ == 1) {
    Matrix& f = out[0];
    f.resize(rows, 3);
    f.col(0).setOnes();
    f.col(1) = states.col(0);
    f.col(2) = states.col(0).cwiseAbs2();
    return;
  }
  const Vector s = states.rowwise().mean();
  const Vector s2 = s.cwiseAbs2();
  for (std::size_t i = 0; i < n_players_; ++i) {
    const auto xi = states.col(static_cast<Eigen::Index>(i));
    Matrix& f = out[i];
    f.resize(rows, 6);
    f.col(0).setOnes();
    f.col(1) = xi;
    f.col(2) = s;
    f.col(3) = xi.cwiseAbs2();
    f.col(4) = xi.cwiseProduct(s);
    f.col(5) = s2;
  }
}

std::string to_string(ZEstimator z) {
  switch (z) {
    case ZEstimator::kPlain:
      return "plain";
    case ZEstimator::kCentered:
      return "centered";
    case ZEstimator::kDecorrelated:
      return "decorrelated";
  }
  return "unknown";
}

ZEstimator z_estimator_from_string(const std::string& name) {
  if (name == "plain") return ZEstimator::kPlain;
  if (name == "centered") return ZEstimator::kCentered;
  if (name == "decorrelated") return ZEstimator::kDecorrelated;
  throw InvalidArgument("unknown Z estimator '" + name + "'");
}

// ---------------------------------------------------------------------------
// Regression helpers

namespace {

/// Sums block partials in block order.
Matrix sum_in_order(const std::vector<Matrix>& parts) {
  Matrix total = parts.front();
  for (std::size_t b = 1; b < parts.size(); ++b) total += parts[b];
  return total;
}

struct GramFactor {
  Eigen::LDLT<Matrix> ldlt;
  double condition = 0.0;
};

GramFactor factor_gram(Matrix gram, double ridge) {
  gram.diagonal().array() += ridge;
  GramFactor g;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  g.condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  g.ldlt.compute(gram);
  return g;
}

Vector column_means(const Matrix& m) {
  Vector out(m.cols());
  std::vector<double> buf(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    Eigen::Map<Vector>(buf.data(), m.rows()) = m.col(c);
    out(c) = ordered_sum(buf) / static_cast<double>(m.rows());
  }
  return out;
}

Matrix clip_count(Matrix z, double z_max, std::size_t& clips) {
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    for (Eigen::Index p = 0; p < z.rows(); ++p) {
      double& v = z(p, c);
      if (std::abs(v) > z_max) {
        v = std::copysign(z_max, v);
        ++clips;
      }
    }
  }
  return z;
}

}  // namespace

Vector regress(const Vector& values, const Matrix& features, double ridge_factor) {
  const std::size_t n = static_cast<std::size_t>(features.rows());
  const std::size_t d = static_cast<std::size_t>(features.cols());
  if (static_cast<std::size_t>(values.size()) != n) {
    throw InvalidArgument("regress: values and features differ in length");
  }
  if (d == 0 || n < 10 * d) throw InvalidArgument("regress: need at least 10 paths per feature");
  std::vector<Matrix> gram(block_count(n)), rhs(block_count(n));
  for_each_block(n, [&](const BlockRange& r) {
    const auto f = features.middleRows(static_cast<Eigen::Index>(r.begin),
                                       static_cast<Eigen::Index>(r.size()));
    gram[r.index] = f.transpose() * f;
    rhs[r.index] = f.transpose() * values.segment(static_cast<Eigen::Index>(r.begin),
                                                  static_cast<Eigen::Index>(r.size()));
  });
  const GramFactor g = factor_gram(sum_in_order(gram), ridge_factor * static_cast<double>(n));
  return g.ldlt.solve(sum_in_order(rhs));
}

// ---------------------------------------------------------------------------
// Solution evaluation

double BSDESolution::y0_standard_error(std::size_t equation) const {
  const Vector col = pathwise_total.col(static_cast<Eigen::Index>(equation));
  return estimate_from_samples({col.data(), static_cast<std::size_t>(col.size())}).se;
}

Matrix BSDESolution::z(std::size_t node, std::size_t equation, const Matrix& states) const {
  if (node >= z_coefficients.size()) throw InvalidArgument("BSDESolution::z: node out of range");
  std::vector<Matrix> f;
  basis->features(states, f);
  std::size_t clips = 0;
  return clip_count(f[basis->feature_set(equation)] * z_coefficients[node][equation],
                    options.z_max, clips);
}

Matrix BSDESolution::continuation(std::size_t node, const Matrix& states) const {
  if (node >= y_coefficients.size()) {
    throw InvalidArgument("BSDESolution::continuation: node out of range");
  }
  std::vector<Matrix> f;
  basis->features(states, f);
  Matrix out(states.rows(), static_cast<Eigen::Index>(n_equations));
  for (std::size_t i = 0; i < n_equations; ++i) {
    out.col(static_cast<Eigen::Index>(i)) =
        f[basis->feature_set(i)] * y_coefficients[node].row(static_cast<Eigen::Index>(i)).transpose();
  }
  return out;
}

Matrix BSDESolution::value(std::size_t node, const Matrix& states) const {
  Matrix y = continuation(node, states);
  std::vector<Matrix> zs;
  zs.reserve(n_equations);
  for (std::size_t i = 0; i < n_equations; ++i) zs.push_back(z(node, i, states));
  Matrix f;
  driver->evaluate_block(node, grid.t(node), states, zs, f);
  return y + grid.dt() * f;
}

// ---------------------------------------------------------------------------
// Backward recursion

BSDESolution solve_backward(const PathBundle& bundle, std::shared_ptr<const Driver> driver,
                            const TerminalFn& terminal, std::shared_ptr<const Basis> basis,
                            const BsdeOptions& options) {
  if (!driver || !basis || !terminal) throw InvalidArgument("solve_backward: missing input");
  if (!bundle.is_reference()) {
    throw InvalidArgument("solve_backward: bundle must be simulated under the reference measure");
  }
  if (driver->n_brownian() != bundle.dim()) {
    throw InvalidArgument("solve_backward: driver Brownian dimension does not match the bundle");
  }
  const std::size_t n = bundle.n_paths();
  const std::size_t n_eq = driver->n_equations();
  const std::size_t n_bm = driver->n_brownian();
  const std::size_t d = basis->dimension();
  const std::size_t n_sets = basis->n_feature_sets();
  if (n_sets != 1 && n_sets != n_eq) {
    throw InvalidArgument("solve_backward: basis feature sets do not match the equation count");
  }
  if (n < 10 * d) throw InvalidArgument("solve_backward: need at least 10 paths per feature");
  if (!(options.z_max > 0.0) || !(options.ridge_factor >= 0.0)) {
    throw InvalidArgument("solve_backward: z_max must be > 0 and ridge_factor >= 0");
  }

  const TimeGrid& grid = bundle.grid();
  const std::size_t K = grid.n_steps;
  const double dt = grid.dt();
  const double ridge = options.ridge_factor * static_cast<double>(n);
  const std::size_t table_size = n * (K + 1) * n_eq * (1 + n_bm);
  const bool store = options.store_paths.value_or(table_size <= options.auto_store_limit);
  const auto E = static_cast<Eigen::Index>(n_eq);
  const auto B = static_cast<Eigen::Index>(n_bm);
  const auto D = static_cast<Eigen::Index>(d);

  BSDESolution sol;
  sol.grid = grid;
  sol.n_equations = n_eq;
  sol.n_brownian = n_bm;
  sol.n_paths = n;
  sol.basis = basis;
  sol.driver = driver;
  sol.options = options;
  sol.y_coefficients.assign(K, Matrix::Zero(E, D));
  sol.z_coefficients.assign(K, std::vector<Matrix>(n_eq, Matrix::Zero(D, B)));
  sol.y_mean.resize(static_cast<Eigen::Index>(K + 1), E);
  sol.z_mean.assign(K, Matrix::Zero(E, B));
  sol.diagnostics.condition.assign(K, 0.0);
  sol.diagnostics.ridge = ridge;
  sol.diagnostics.z_estimator = to_string(options.z_estimator);
  if (store) {
    sol.y_paths.assign(K + 1, Matrix());
    sol.z_paths.assign(K, std::vector<Matrix>(n_eq));
  }

  Matrix y = terminal(bundle.states(K));
  if (y.rows() != static_cast<Eigen::Index>(n) || y.cols() != E) {
    throw InvalidArgument("solve_backward: terminal function returned the wrong shape");
  }
  if (!y.allFinite()) throw NumericalFailure("bsde", "non-finite terminal value", K);
  sol.pathwise_total = y;
  sol.y_mean.row(static_cast<Eigen::Index>(K)) = column_means(y).transpose();
  if (store) sol.y_paths[K] = y;

  const std::size_t nblocks = block_count(n);
  auto rows = [](const BlockRange& r) {
    return std::pair{static_cast<Eigen::Index>(r.begin), static_cast<Eigen::Index>(r.size())};
  };

  const bool pooled = options.pool_exchangeable && basis->exchangeable() && n_eq > 1 &&
                      n_eq == n_bm && n_sets == n_eq;
  sol.diagnostics.pooled = pooled;
  if (pooled) {
    // Stacked regressions over equations: Y and Z^{ii} use the rows (path, i),
    // Z^{ij} with j != i the rows (path, i, j). The off-diagonal Gram matrix is
    // (N - 1) times the stacked one. Z^{ij} only uses the leading
    // cross_dimension() features.
    const double pooled_ridge = ridge * static_cast<double>(n_eq);
    const double n_off = static_cast<double>(n_eq - 1);
    const auto D_off = static_cast<Eigen::Index>(basis->cross_dimension());
    sol.diagnostics.ridge = pooled_ridge;
    for (std::size_t kk = K; kk-- > 0;) {
      const Matrix& x = bundle.states(kk);
      const Matrix dw = bundle.increments(kk);
      const Vector dw_sum = dw.rowwise().sum();
      const bool plain = options.z_estimator == ZEstimator::kPlain;

      std::vector<Matrix> gram_parts(nblocks), y_rhs_parts(nblocks);
      std::vector<Matrix> zd_parts(nblocks), zo_parts(nblocks);
      for_each_block(n, [&](const BlockRange& r) {
        const auto [b0, bn] = rows(r);
        std::vector<Matrix> f;
        basis->features(x.middleRows(b0, bn), f);
        Matrix g = Matrix::Zero(D, D);
        Vector yr = Vector::Zero(D), zd = Vector::Zero(D), zo = Vector::Zero(D);
        const auto dwb = dw.middleRows(b0, bn);
        const auto sb = dw_sum.segment(b0, bn);
        for (std::size_t i = 0; i < n_eq; ++i) {
          const auto col = static_cast<Eigen::Index>(i);
          const Matrix& fi = f[i];
          const auto yi = y.col(col).segment(b0, bn);
          g.noalias() += fi.transpose() * fi;
          yr.noalias() += fi.transpose() * yi;
          if (plain) {
            zd.noalias() += fi.transpose() * yi.cwiseProduct(dwb.col(col));
            zo.noalias() += fi.transpose() * yi.cwiseProduct(sb - dwb.col(col));
          }
        }
        gram_parts[r.index] = std::move(g);
        y_rhs_parts[r.index] = std::move(yr);
        zd_parts[r.index] = std::move(zd);
        zo_parts[r.index] = std::move(zo);
      });
      const Matrix gram_full = sum_in_order(gram_parts);
      const GramFactor factor = factor_gram(gram_full, pooled_ridge);
      const GramFactor off_factor =
          D_off == D ? factor : factor_gram(gram_full.topLeftCorner(D_off, D_off), pooled_ridge);
      sol.diagnostics.condition[kk] = factor.condition;
      if (!std::isfinite(factor.condition) || factor.condition > options.max_condition) {
        throw NumericalFailure("bsde", "rank-deficient regression after ridge", kk);
      }
      Vector beta_y = factor.ldlt.solve(sum_in_order(y_rhs_parts));
      Vector beta_d = Vector::Zero(D), beta_o = Vector::Zero(D);

      auto z_pass = [&](bool correction) {
        for_each_block(n, [&](const BlockRange& r) {
          const auto [b0, bn] = rows(r);
          std::vector<Matrix> f;
          basis->features(x.middleRows(b0, bn), f);
          Vector zd = Vector::Zero(D), zo = Vector::Zero(D);
          const auto dwb = dw.middleRows(b0, bn);
          const auto sb = dw_sum.segment(b0, bn);
          for (std::size_t i = 0; i < n_eq; ++i) {
            const auto col = static_cast<Eigen::Index>(i);
            const Matrix& fi = f[i];
            const Vector others = sb - dwb.col(col);
            Vector resid = y.col(col).segment(b0, bn) - fi * beta_y;
            if (correction) {
              resid -= (fi * beta_d).cwiseProduct(dwb.col(col)) + (fi * beta_o).cwiseProduct(others);
            }
            zd.noalias() += fi.transpose() * resid.cwiseProduct(dwb.col(col));
            zo.noalias() += fi.transpose() * resid.cwiseProduct(others);
          }
          zd_parts[r.index] = std::move(zd);
          zo_parts[r.index] = std::move(zo);
        });
      };
      auto z_solve = [&]() {
        beta_d += factor.ldlt.solve(sum_in_order(zd_parts)) / dt;
        beta_o.head(D_off) += off_factor.ldlt.solve(sum_in_order(zo_parts).topRows(D_off)) / (dt * n_off);
      };
      if (!plain) z_pass(false);
      z_solve();
      if (options.z_estimator == ZEstimator::kDecorrelated) {
        z_pass(true);
        z_solve();
      }
      if (options.martingale_control && !plain) {
        for_each_block(n, [&](const BlockRange& r) {
          const auto [b0, bn] = rows(r);
          std::vector<Matrix> f;
          basis->features(x.middleRows(b0, bn), f);
          Vector yr = Vector::Zero(D);
          const auto dwb = dw.middleRows(b0, bn);
          const auto sb = dw_sum.segment(b0, bn);
          for (std::size_t i = 0; i < n_eq; ++i) {
            const auto col = static_cast<Eigen::Index>(i);
            const Matrix& fi = f[i];
            const Vector target = y.col(col).segment(b0, bn) -
                                  (fi * beta_d).cwiseProduct(dwb.col(col)) -
                                  (fi * beta_o).cwiseProduct(sb - dwb.col(col));
            yr.noalias() += fi.transpose() * target;
          }
          y_rhs_parts[r.index] = std::move(yr);
        });
        beta_y = factor.ldlt.solve(sum_in_order(y_rhs_parts));
      }

      Matrix& by = sol.y_coefficients[kk];
      by = beta_y.transpose().replicate(E, 1);
      for (std::size_t i = 0; i < n_eq; ++i) {
        Matrix& bz = sol.z_coefficients[kk][i];
        bz = beta_o.replicate(1, B);
        bz.col(static_cast<Eigen::Index>(i)) = beta_d;
      }

      if (store) {
        for (auto& zp : sol.z_paths[kk]) zp.resize(static_cast<Eigen::Index>(n), B);
      }
      Matrix y_new(static_cast<Eigen::Index>(n), E);
      std::vector<Matrix> z_sum_parts(nblocks);
      std::vector<std::size_t> clip_parts(nblocks, 0);
      std::vector<int> bad(nblocks, 0);
      const double t = grid.t(kk);
      for_each_block(n, [&](const BlockRange& r) {
        const auto [b0, bn] = rows(r);
        const Matrix xb = x.middleRows(b0, bn);
        std::vector<Matrix> f;
        basis->features(xb, f);
        Matrix zd(bn, E), zo(bn, E);
        for (std::size_t i = 0; i < n_eq; ++i) {
          const auto col = static_cast<Eigen::Index>(i);
          zd.col(col) = f[i] * beta_d;
          zo.col(col) = f[i] * beta_o;
        }
        zd = clip_count(std::move(zd), options.z_max, clip_parts[r.index]);
        zo = clip_count(std::move(zo), options.z_max, clip_parts[r.index]);
        // Row i: diagonal sum in column i, off-diagonal sum in every other column.
        const Vector zd_sum = zd.colwise().sum().transpose();
        const Vector zo_sum = zo.colwise().sum().transpose();
        Matrix zsum = zo_sum.replicate(1, B);
        zsum.diagonal() = zd_sum;
        z_sum_parts[r.index] = std::move(zsum);
        Matrix drift;
        driver->evaluate_exchangeable(kk, t, xb, zd, zo, drift);
        if (!drift.allFinite()) {
          bad[r.index] = 1;
          return;
        }
        for (std::size_t i = 0; i < n_eq; ++i) {
          const auto col = static_cast<Eigen::Index>(i);
          y_new.col(col).segment(b0, bn) = f[i] * beta_y + dt * drift.col(col);
        }
        sol.pathwise_total.middleRows(b0, bn) += dt * drift;
        if (store) {
          for (std::size_t i = 0; i < n_eq; ++i) {
            const auto col = static_cast<Eigen::Index>(i);
            Matrix& zp = sol.z_paths[kk][i];
            zp.middleRows(b0, bn) = zo.col(col).replicate(1, B);
            zp.col(col).segment(b0, bn) = zd.col(col);
          }
        }
      });
      if (std::any_of(bad.begin(), bad.end(), [](int b) { return b != 0; })) {
        throw NumericalFailure("bsde", "non-finite driver output", kk);
      }
      for (std::size_t c : clip_parts) sol.diagnostics.z_clips += c;
      sol.z_mean[kk] = sum_in_order(z_sum_parts) / static_cast<double>(n);
      y = std::move(y_new);
      sol.y_mean.row(static_cast<Eigen::Index>(kk)) = column_means(y).transpose();
      if (store) sol.y_paths[kk] = y;
    }
  } else {
    for (std::size_t kk = K; kk-- > 0;) {
      const Matrix& x = bundle.states(kk);
      const Matrix dw = bundle.increments(kk);

      // Gram matrices and regression right-hand sides, accumulated per block.
      std::vector<std::vector<Matrix>> gram_parts(n_sets, std::vector<Matrix>(nblocks));
      std::vector<Matrix> y_rhs_parts(nblocks);
      std::vector<std::vector<Matrix>> z_rhs_parts(n_eq, std::vector<Matrix>(nblocks));
      const bool plain = options.z_estimator == ZEstimator::kPlain;
      for_each_block(n, [&](const BlockRange& r) {
        const auto [b0, bn] = rows(r);
        std::vector<Matrix> f;
        basis->features(x.middleRows(b0, bn), f);
        for (std::size_t s = 0; s < n_sets; ++s) gram_parts[s][r.index] = f[s].transpose() * f[s];
        Matrix rhs(D, E);
        for (std::size_t i = 0; i < n_eq; ++i) {
          const Matrix& fi = f[basis->feature_set(i)];
          const auto yi = y.col(static_cast<Eigen::Index>(i)).segment(b0, bn);
          rhs.col(static_cast<Eigen::Index>(i)) = fi.transpose() * yi;
          if (plain) {
            z_rhs_parts[i][r.index] =
                fi.transpose() * (dw.middleRows(b0, bn).array().colwise() * yi.array()).matrix();
          }
        }
        y_rhs_parts[r.index] = std::move(rhs);
      });

      std::vector<GramFactor> factors;
      factors.reserve(n_sets);
      double worst = 0.0;
      for (std::size_t s = 0; s < n_sets; ++s) {
        factors.push_back(factor_gram(sum_in_order(gram_parts[s]), ridge));
        worst = std::max(worst, factors.back().condition);
      }
      sol.diagnostics.condition[kk] = worst;
      if (!std::isfinite(worst) || worst > options.max_condition) {
        throw NumericalFailure("bsde", "rank-deficient regression after ridge", kk);
      }
      auto solve = [&](std::size_t i, const Matrix& rhs) {
        return Matrix(factors[basis->feature_set(i)].ldlt.solve(rhs));
      };

      const Matrix y_rhs = sum_in_order(y_rhs_parts);
      Matrix& beta_y = sol.y_coefficients[kk];
      for (std::size_t i = 0; i < n_eq; ++i) {
        beta_y.row(static_cast<Eigen::Index>(i)) =
            solve(i, y_rhs.col(static_cast<Eigen::Index>(i))).transpose();
      }
      std::vector<Matrix>& beta_z = sol.z_coefficients[kk];

      auto z_pass = [&](bool correction) {
        for_each_block(n, [&](const BlockRange& r) {
          const auto [b0, bn] = rows(r);
          std::vector<Matrix> f;
          basis->features(x.middleRows(b0, bn), f);
          const Matrix dwb = dw.middleRows(b0, bn);
          for (std::size_t i = 0; i < n_eq; ++i) {
            const Matrix& fi = f[basis->feature_set(i)];
            Vector resid = y.col(static_cast<Eigen::Index>(i)).segment(b0, bn) -
                           fi * beta_y.row(static_cast<Eigen::Index>(i)).transpose();
            if (correction) {
              // Remove the part of the increment already explained by Z.
              resid -= (fi * beta_z[i]).cwiseProduct(dwb).rowwise().sum();
            }
            z_rhs_parts[i][r.index] =
                fi.transpose() * (dwb.array().colwise() * resid.array()).matrix();
          }
        });
      };
      auto z_solve = [&](bool accumulate) {
        for (std::size_t i = 0; i < n_eq; ++i) {
          const Matrix delta = solve(i, sum_in_order(z_rhs_parts[i])) / dt;
          if (accumulate) {
            beta_z[i] += delta;
          } else {
            beta_z[i] = delta;
          }
        }
      };
      if (!plain) z_pass(false);
      z_solve(false);
      if (options.z_estimator == ZEstimator::kDecorrelated) {
        z_pass(true);
        z_solve(true);
      }
      if (options.martingale_control && !plain) {
        for_each_block(n, [&](const BlockRange& r) {
          const auto [b0, bn] = rows(r);
          std::vector<Matrix> f;
          basis->features(x.middleRows(b0, bn), f);
          const Matrix dwb = dw.middleRows(b0, bn);
          Matrix rhs(D, E);
          for (std::size_t i = 0; i < n_eq; ++i) {
            const Matrix& fi = f[basis->feature_set(i)];
            const Vector target = y.col(static_cast<Eigen::Index>(i)).segment(b0, bn) -
                                  (fi * beta_z[i]).cwiseProduct(dwb).rowwise().sum();
            rhs.col(static_cast<Eigen::Index>(i)) = fi.transpose() * target;
          }
          y_rhs_parts[r.index] = std::move(rhs);
        });
        const Matrix rhs = sum_in_order(y_rhs_parts);
        for (std::size_t i = 0; i < n_eq; ++i) {
          beta_y.row(static_cast<Eigen::Index>(i)) =
              solve(i, rhs.col(static_cast<Eigen::Index>(i))).transpose();
        }
      }

      // Y update with the explicit driver.
      if (store) {
        for (auto& zp : sol.z_paths[kk]) zp.resize(static_cast<Eigen::Index>(n), B);
      }
      Matrix y_new(static_cast<Eigen::Index>(n), E);
      std::vector<Matrix> z_sum_parts(nblocks);
      std::vector<std::size_t> clip_parts(nblocks, 0);
      std::vector<int> bad(nblocks, 0);
      const double t = grid.t(kk);
      for_each_block(n, [&](const BlockRange& r) {
        const auto [b0, bn] = rows(r);
        const Matrix xb = x.middleRows(b0, bn);
        std::vector<Matrix> f;
        basis->features(xb, f);
        std::vector<Matrix> zb(n_eq);
        Matrix zsum(E, B);
        for (std::size_t i = 0; i < n_eq; ++i) {
          zb[i] = clip_count(f[basis->feature_set(i)] * beta_z[i], options.z_max, clip_parts[r.index]);
          zsum.row(static_cast<Eigen::Index>(i)) = zb[i].colwise().sum();
        }
        z_sum_parts[r.index] = std::move(zsum);
        Matrix drift;
        driver->evaluate_block(kk, t, xb, zb, drift);
        if (!drift.allFinite()) {
          bad[r.index] = 1;
          return;
        }
        for (std::size_t i = 0; i < n_eq; ++i) {
          const auto col = static_cast<Eigen::Index>(i);
          y_new.col(col).segment(b0, bn) =
              f[basis->feature_set(i)] * beta_y.row(col).transpose() + dt * drift.col(col);
        }
        sol.pathwise_total.middleRows(b0, bn) += dt * drift;
        if (store) {
          for (std::size_t i = 0; i < n_eq; ++i) sol.z_paths[kk][i].middleRows(b0, bn) = zb[i];
        }
      });
      if (std::any_of(bad.begin(), bad.end(), [](int b) { return b != 0; })) {
        throw NumericalFailure("bsde", "non-finite driver output", kk);
      }
      for (std::size_t c : clip_parts) sol.diagnostics.z_clips += c;
      sol.z_mean[kk] = sum_in_order(z_sum_parts) / static_cast<double>(n);
      y = std::move(y_new);
      sol.y_mean.row(static_cast<Eigen::Index>(kk)) = column_means(y).transpose();
      if (store) sol.y_paths[kk] = y;
    }
  }

  const Matrix x0 = bundle.states(0).colwise().mean();
  sol.y0_regression = sol.value(0, x0).row(0).transpose();
  sol.y0_sample_mean = sol.y_mean.row(0).transpose();
  sol.z0_regression.resize(E, B);
  for (std::size_t i = 0; i < n_eq; ++i) {
    sol.z0_regression.row(static_cast<Eigen::Index>(i)) = sol.z(0, i, x0).row(0);
  }
  return sol;
}

}  // namespace weakgame
