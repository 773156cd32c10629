#include "weakgame/convergence.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

namespace weakgame::convergence {

namespace {

GameSpec as_kind(GameSpec spec, GameKind kind, std::size_t n_players) {
  spec.kind = kind;
  spec.n_players = n_players;
  return spec;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

ValueGap value_gap(const nplayer::NPlayerSolution& np, const mfg::MFGSolution& mf) {
  if (np.numerics.seed != mf.numerics.seed || np.numerics.n_paths != mf.numerics.n_paths) {
    throw InvalidArgument("value_gap: solutions must share seed and path count");
  }
  ValueGap g;
  g.n_players = np.spec.n_players;
  g.nplayer_value = nplayer::player_value(np, 0);
  g.mfg_value = mf.value.mean;
  const Vector a = np.solution->pathwise_total.col(0);
  const Vector b = mf.solution->pathwise_total.col(0);
  const Estimate paired = paired_difference({a.data(), static_cast<std::size_t>(a.size())},
                                            {b.data(), static_cast<std::size_t>(b.size())});
  g.gap = {g.nplayer_value - g.mfg_value, paired.se};
  g.gap_sq = g.gap.mean * g.gap.mean;
  g.gap_sq_se = 2.0 * std::abs(g.gap.mean) * g.gap.se;
  g.oracle_gap = oracle_value_gap(np.spec, g.n_players, np.solution->grid);
  return g;
}

ValueGap value_gap(const GameSpec& spec, std::size_t n_players, const Numerics& numerics) {
  const mfg::MFGSolution mf =
      mfg::solve_mfg_fixed_point(as_kind(spec, GameKind::kMeanField, 1), numerics);
  const nplayer::NPlayerSolution np =
      nplayer::solve_nash_system(as_kind(spec, GameKind::kNPlayer, n_players), numerics);
  return value_gap(np, mf);
}

double oracle_value_gap(const GameSpec& spec, std::size_t n_players, const TimeGrid& grid) {
  const auto r = nplayer::riccati_oracle(as_kind(spec, GameKind::kNPlayer, n_players), grid);
  const auto m = mfg::mfg_closed_form(as_kind(spec, GameKind::kMeanField, 1), grid);
  return r.value(spec.x0) - m.value;
}

double wasserstein2_gaussian(double m1, double s1, double m2, double s2) {
  return std::sqrt((m1 - m2) * (m1 - m2) + (s1 - s2) * (s1 - s2));
}

double empirical_w2(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw InvalidArgument("empirical_w2: samples must be non-empty and of equal size");
  }
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  double s = 0.0;
  for (std::size_t i = 0; i < sa.size(); ++i) s += (sa[i] - sb[i]) * (sa[i] - sb[i]);
  return std::sqrt(s / static_cast<double>(sa.size()));
}

ControlLawGap control_law_gap(const nplayer::NPlayerSolution& np, const mfg::MFGSolution& mf,
                              std::size_t n_samples, std::uint64_t seed, std::size_t player) {
  constexpr std::size_t kBatches = 10;
  if (n_samples < kBatches * 10) throw InvalidArgument("control_law_gap: need at least 100 samples");
  if (player >= np.spec.n_players) throw InvalidArgument("control_law_gap: player out of range");
  const TimeGrid& grid = np.solution->grid;
  if (!(grid == mf.solution->grid)) throw InvalidArgument("control_law_gap: grids differ");
  const PathBundle xn = simulate_controlled(np.spec, grid, np.feedback(), n_samples, seed);
  const PathBundle xm = simulate_controlled(mf.spec, grid, mf.feedback(), n_samples, seed);
  const std::size_t K = grid.n_steps;
  const std::size_t batch = n_samples / kBatches;
  const auto col = static_cast<Eigen::Index>(player);

  std::vector<double> full(K);
  std::vector<std::vector<double>> parts(kBatches, std::vector<double>(K));
  for (std::size_t k = 0; k < K; ++k) {
    const Vector an = np.feedback_values(k, xn.states(k)).col(col);
    const Vector am = mf.feedback_values(k, xm.states(k)).col(0);
    const double w = empirical_w2({an.data(), n_samples}, {am.data(), n_samples});
    full[k] = w * w;
    for (std::size_t b = 0; b < kBatches; ++b) {
      const double wb = empirical_w2({an.data() + b * batch, batch}, {am.data() + b * batch, batch});
      parts[b][k] = wb * wb;
    }
  }
  ControlLawGap out;
  out.n_players = np.spec.n_players;
  std::vector<double> batch_values;
  for (const auto& p : parts) batch_values.push_back(trapezoid(p, grid.dt()));
  out.empirical = {trapezoid(full, grid.dt()), estimate_from_samples(batch_values).se};
  out.gaussian = gaussian_control_law_gap(np.spec, np.spec.n_players, grid);
  return out;
}

double gaussian_control_law_gap(const GameSpec& spec, std::size_t n_players, const TimeGrid& grid,
                                std::size_t substeps) {
  // Both feedbacks are affine in the own state with the same slope -2A and the
  // state variances agree, so W2 is the distance between the control means.
  const GameSpec ns = as_kind(spec, GameKind::kNPlayer, n_players);
  const auto r = nplayer::riccati_oracle(ns, grid, substeps);
  const double k = spec.dissipation;
  const double n = static_cast<double>(n_players);
  Vector init(4);
  init << r.A[0], r.C[0], spec.x0, spec.x0;  // A, C, m_N, m
  const auto path = rk4_forward(grid, init, [k, n](double, const Vector& y) {
    Vector d(4);
    d(0) = 2.0 * y(0) * y(0) + 2.0 * k * y(0);
    d(1) = (2.0 * y(0) + k) * y(1) - 1.0;
    d(2) = -(k + 2.0 * y(0)) * y(2) - y(1) / n;
    d(3) = -(k + 2.0 * y(0)) * y(3);
    return d;
  }, substeps);
  std::vector<double> sq;
  for (std::size_t i = 0; i < grid.n_steps; ++i) {
    const Vector& y = path[i];
    const double shift = 2.0 * y(0) * (y(2) - y(3)) + y(1) / n;
    sq.push_back(shift * shift);
  }
  return trapezoid(sq, grid.dt());
}

RateFit fit_rate(std::span<const double> n, std::span<const double> y) {
  if (n.size() != y.size()) throw InvalidArgument("fit_rate: N and gap lists differ in length");
  if (n.size() < 3) throw InvalidArgument("fit_rate: need at least three points");
  const double n_min = *std::min_element(n.begin(), n.end());
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < n.size(); ++i) {
    if (n[i] == n_min) continue;
    if (!(n[i] > 0.0) || !(y[i] > 0.0)) throw InvalidArgument("fit_rate: N and gaps must be > 0");
    lx.push_back(std::log(n[i]));
    ly.push_back(std::log(y[i]));
  }
  const double m = static_cast<double>(lx.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i] / m;
    my += ly[i] / m;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  if (!(sxx > 0.0)) throw InvalidArgument("fit_rate: need two distinct N after the smallest");
  RateFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  return f;
}

double clt_baseline(double variance, std::size_t n) {
  if (n < 1) throw InvalidArgument("clt_baseline: N must be >= 1");
  if (!(variance >= 0.0)) throw InvalidArgument("clt_baseline: variance must be >= 0");
  return variance / static_cast<double>(n);
}

std::string RateTable::csv() const {
  std::string out = "N,value_gap_sq,value_gap_se,w2_gap,w2_gap_se,clt_baseline\n";
  char buf[200];
  for (const RateRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.n_players,
                  r.value_gap_sq, r.value_gap_se, r.w2_gap, r.w2_gap_se, r.clt_baseline);
    out += buf;
  }
  return out;
}

RateTable run_convergence_suite(const GameSpec& spec, const std::vector<std::size_t>& n_list,
                                const Numerics& numerics, const SuiteOptions& options) {
  if (n_list.size() < 3) throw InvalidArgument("convergence: N_list needs at least three entries");
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    if (n_list[i] < 2 || n_list[i] > nplayer::kMaxPlayers) {
      throw InvalidArgument("convergence: every N must lie in [2, 64]");
    }
    if (i > 0 && n_list[i] <= n_list[i - 1]) {
      throw InvalidArgument("convergence: N_list must be strictly increasing");
    }
  }
  const auto t0 = std::chrono::steady_clock::now();
  RateTable table;
  table.spec = spec;
  table.numerics = numerics;
  const TimeGrid grid = make_time_grid(spec.horizon, numerics.n_steps);
  const std::uint64_t w2_seed = derive_seed(numerics.seed, 3);

  mfg::MFGSolution mf =
      mfg::solve_mfg_fixed_point(as_kind(spec, GameKind::kMeanField, 1), numerics, options.fixed_point);
  table.mfg_value = mf.value.mean;
  table.mfg_oracle_value = mfg::mfg_closed_form(mf.spec, grid).value;
  table.mfg_iterations = mf.iterations();
  mf.bundle.reset();
  {
    const PathBundle xm =
        simulate_controlled(mf.spec, grid, mf.feedback(), options.w2_samples, w2_seed);
    const Vector xt = xm.states(grid.n_steps).col(0);
    const double mean = xt.mean();
    table.terminal_variance =
        (xt.array() - mean).square().sum() / static_cast<double>(std::max<Eigen::Index>(xt.size() - 1, 1));
  }

  std::vector<double> ns, vg, wg, og;
  for (std::size_t N : n_list) {
    const auto tn = std::chrono::steady_clock::now();
    nplayer::NPlayerSolution np =
        nplayer::solve_nash_system(as_kind(spec, GameKind::kNPlayer, N), numerics);
    np.bundle.reset();
    const ValueGap v = value_gap(np, mf);
    const ControlLawGap w = control_law_gap(np, mf, options.w2_samples, w2_seed);
    if (N == 2) {
      table.player2_w2_gap = control_law_gap(np, mf, options.w2_samples, w2_seed, 1).empirical;
    }
    RateRow row;
    row.n_players = N;
    row.value_gap = v.gap.mean;
    row.value_gap_sq = v.gap_sq;
    row.value_gap_se = v.gap_sq_se;
    row.nplayer_value = v.nplayer_value;
    row.oracle_value_gap_sq = v.oracle_gap * v.oracle_gap;
    row.w2_gap = w.empirical.mean;
    row.w2_gap_se = w.empirical.se;
    row.gaussian_w2_gap = w.gaussian;
    row.clt_baseline = clt_baseline(table.terminal_variance, N);
    row.seconds = seconds_since(tn);
    table.rows.push_back(row);
    ns.push_back(static_cast<double>(N));
    vg.push_back(row.value_gap_sq);
    wg.push_back(row.w2_gap);
    og.push_back(row.oracle_value_gap_sq);
    table.c_hat = std::max(table.c_hat, static_cast<double>(N) * row.value_gap_sq);
    if (options.progress) options.progress(row);
  }
  table.value_fit = fit_rate(ns, vg);
  table.w2_fit = fit_rate(ns, wg);
  table.oracle_value_fit = fit_rate(ns, og);
  table.w2_monotone = true;
  for (std::size_t i = 1; i < table.rows.size(); ++i) {
    const RateRow& a = table.rows[i - 1];
    const RateRow& b = table.rows[i];
    const double se = std::sqrt(a.w2_gap_se * a.w2_gap_se + b.w2_gap_se * b.w2_gap_se);
    if (!(a.w2_gap - b.w2_gap > 2.0 * se)) table.w2_monotone = false;
  }
  table.seconds = seconds_since(t0);
  return table;
}

}  // namespace weakgame::convergence
