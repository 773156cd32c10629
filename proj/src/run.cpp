#include "weakgame/run.hpp"

#include <Eigen/Core>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "weakgame/convergence.hpp"
#include "weakgame/mfg.hpp"
#include "weakgame/nplayer.hpp"
#include "weakgame/parallel.hpp"
#include "weakgame/report.hpp"
#include "weakgame/zerosum.hpp"

namespace weakgame {

using nlohmann::json;
namespace fs = std::filesystem;

const std::vector<std::string>& artifact_names() {
  static const std::vector<std::string> names = {
      "report.json",    "manifest.json",    "error.json",     "yz.csv",
      "riccati.csv",    "mfg.csv",          "rate_table.csv", "rate_fit.json",
      "plots/yz.svg",   "plots/flow.svg",   "plots/value_gap.svg"};
  return names;
}

namespace {

using Clock = std::chrono::steady_clock;
using Artifacts = std::map<std::string, std::string>;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir) : path_(dir / ".lock") {
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) return;
    std::fprintf(f, "weakgame %s\n", kVersion);
    std::fclose(f);
    held_ = true;
  }
  ~DirectoryLock() {
    if (held_) {
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

  bool held() const { return held_; }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  bool held_ = false;
};

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

void remove_artifacts(const fs::path& dir) {
  std::error_code ec;
  for (const std::string& name : artifact_names()) fs::remove(dir / name, ec);
  if (fs::is_directory(dir / "plots", ec) && fs::is_empty(dir / "plots", ec)) {
    fs::remove(dir / "plots", ec);
  }
}

json config_json(const RunConfig& c) {
  return {{"kind", to_string(c.kind)},
          {"T", c.spec.horizon},
          {"x0", c.spec.x0},
          {"k", c.spec.dissipation},
          {"N", c.spec.n_players},
          {"x0_variance", c.spec.x0_variance},
          {"N_list", c.n_list},
          {"out", c.out_dir},
          {"numerics",
           {{"n_steps", c.numerics.n_steps},
            {"n_paths", c.numerics.n_paths},
            {"seed", c.numerics.seed},
            {"alpha_max", c.numerics.alpha_max},
            {"z_max", c.numerics.bsde.z_max},
            {"ridge", c.numerics.bsde.ridge_factor},
            {"z_estimator", to_string(c.numerics.bsde.z_estimator)},
            {"lambda", c.fixed_point.damping},
            {"tol", c.fixed_point.tol},
            {"max_iter", c.fixed_point.max_iter},
            {"w2_samples", c.w2_samples}}}};
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

/// Mean and variance of X_t under the reference measure.
struct Moments {
  double mean, var;
};

Moments reference_moments(const GameSpec& s, double t) {
  const double k = s.dissipation;
  const double decay = std::exp(-k * t);
  const double noise = k > 0.0 ? (1.0 - decay * decay) / (2.0 * k) : t;
  return {s.x0 * decay, s.x0_variance * decay * decay + noise};
}

/// Node means of Y and Z from the solver next to the oracle means under the
/// same measure. Z columns are empty at the terminal node.
struct Curves {
  std::vector<double> t, y, y_oracle, z, z_oracle;
};

template <class YOracle, class ZOracle>
Curves make_curves(const BSDESolution& s, const GameSpec& spec, YOracle y_oracle, ZOracle z_oracle) {
  Curves c;
  const std::size_t K = s.grid.n_steps;
  for (std::size_t k = 0; k <= K; ++k) {
    const double t = s.grid.t(k);
    const Moments m = reference_moments(spec, t);
    c.t.push_back(t);
    c.y.push_back(s.y_mean(static_cast<Eigen::Index>(k), 0));
    c.y_oracle.push_back(y_oracle(k, m));
    if (k < K) {
      c.z.push_back(s.z_mean[k](0, 0));
      c.z_oracle.push_back(z_oracle(k, m));
    }
  }
  return c;
}

void add_curves(Artifacts& out, const Curves& c, const std::string& title) {
  std::ostringstream csv;
  csv.precision(17);
  csv << "t,y_mean,y_oracle_mean,z_mean,z_oracle_mean\n";
  for (std::size_t k = 0; k < c.t.size(); ++k) {
    csv << c.t[k] << ',' << c.y[k] << ',' << c.y_oracle[k] << ',';
    if (k < c.z.size()) csv << c.z[k] << ',' << c.z_oracle[k];
    else csv << ',';
    csv << '\n';
  }
  out["yz.csv"] = csv.str();
  const std::vector<double> tz(c.t.begin(), c.t.begin() + static_cast<std::ptrdiff_t>(c.z.size()));
  out["plots/yz.svg"] = report::svg_plot(
      {{"mean Y", c.t, c.y, false},
       {"oracle Y", c.t, c.y_oracle, true},
       {"mean Z", tz, c.z, false},
       {"oracle Z", tz, c.z_oracle, true}},
      {.title = title, .x_label = "t", .y_label = "value"});
}

void log_stage(const RunContext& ctx, const std::string& what, double secs) {
  if (!ctx.verbose) return;
  std::fprintf(stderr, "[weakgame] %-28s %8.2f s\n", what.c_str(), secs);
}

json run_zerosum(const RunConfig& cfg, const RunContext& ctx, Artifacts& out, json& timing) {
  auto t0 = Clock::now();
  const zerosum::SaddleReport saddle = zerosum::solve_saddle(cfg.spec, cfg.numerics);
  timing["saddle"] = seconds_since(t0);
  log_stage(ctx, "saddle BSDE", timing["saddle"]);

  t0 = Clock::now();
  json deviations = json::array();
  for (const auto& row : zerosum::deviation_test(saddle, default_perturbations())) {
    deviations.push_back(report::to_json(row));
  }
  timing["deviations"] = seconds_since(t0);

  t0 = Clock::now();
  const zerosum::NashSystemReport nash = zerosum::solve_nash_system_2p(cfg.spec, cfg.numerics);
  timing["nash_system"] = seconds_since(t0);
  log_stage(ctx, "two-player Nash system", timing["nash_system"]);

  const double T = cfg.spec.horizon;
  const TimeGrid& grid = saddle.solution->grid;
  add_curves(out,
             make_curves(
                 *saddle.solution, cfg.spec,
                 [&](std::size_t k, Moments m) {
                   const double tau = T - grid.t(k);
                   return tau + m.mean * m.mean + m.var + tau * m.mean;
                 },
                 [&](std::size_t k, Moments m) { return 2.0 * m.mean + T - grid.t(k); }),
             "saddle: Y and Z node means");

  return {{"saddle", report::to_json(saddle)},
          {"deviations", deviations},
          {"nash_system", report::to_json(nash)}};
}

json run_nplayer(const RunConfig& cfg, const RunContext& ctx, Artifacts& out, json& timing) {
  auto t0 = Clock::now();
  const nplayer::NPlayerSolution sol = nplayer::solve_nash_system(cfg.spec, cfg.numerics);
  timing["nash_system"] = seconds_since(t0);
  log_stage(ctx, "N-player Nash system", timing["nash_system"]);

  const TimeGrid& grid = sol.solution->grid;
  const nplayer::RiccatiCoefficients ric = nplayer::riccati_oracle(cfg.spec, grid);
  const double oracle = ric.value(cfg.spec.x0);
  const auto N = static_cast<double>(cfg.spec.n_players);

  json values = json::array();
  double worst_rel = 0.0;
  for (const Estimate& v : sol.values) {
    values.push_back(report::to_json(v));
    worst_rel = std::max(worst_rel, std::abs(v.mean - oracle) / std::abs(oracle));
  }

  t0 = Clock::now();
  json deviations = json::array();
  for (const Perturbation& p : default_perturbations()) {
    const Estimate gap = nplayer::nash_deviation_gap(sol, 0, p);
    deviations.push_back({{"player", 0},
                          {"perturbation", p.label()},
                          {"gap", report::to_json(gap)},
                          {"epsilon", 3.0 * gap.se},
                          {"holds", gap.mean >= -3.0 * gap.se}});
  }
  timing["deviations"] = seconds_since(t0);
  log_stage(ctx, "deviation gaps", timing["deviations"]);

  add_curves(out,
             make_curves(
                 *sol.solution, cfg.spec,
                 [&](std::size_t k, Moments m) {
                   return ric.A[k] * (m.mean * m.mean + m.var) + (ric.B[k] + ric.C[k]) * m.mean + ric.D[k];
                 },
                 [&](std::size_t k, Moments m) { return 2.0 * ric.A[k] * m.mean + ric.B[k] + ric.C[k] / N; }),
             "player 1: Y and Z node means");
  out["riccati.csv"] = ric.csv();

  json result = {{"spec", report::to_json(cfg.spec)},
                 {"numerics", report::to_json(cfg.numerics)},
                 {"values", values},
                 {"value", report::to_json(sol.values.front())},
                 {"oracle_value", oracle},
                 {"max_rel_error", worst_rel},
                 {"deviations", deviations},
                 {"feedback_mismatch", nplayer::feedback_mismatch(sol, ric)},
                 {"riccati", report::to_json(ric)},
                 {"bsde", report::to_json(*sol.solution)}};
  if (cfg.spec.n_players >= 2) result["spread_01"] = report::to_json(nplayer::value_spread(sol, 0, 1));
  return result;
}

json run_mfg(const RunConfig& cfg, const RunContext& ctx, Artifacts& out, json& timing) {
  auto t0 = Clock::now();
  const mfg::MFGSolution sol = mfg::solve_mfg_fixed_point(cfg.spec, cfg.numerics, cfg.fixed_point);
  timing["fixed_point"] = seconds_since(t0);
  log_stage(ctx, "mean field fixed point", timing["fixed_point"]);

  const TimeGrid& grid = sol.solution->grid;
  const mfg::MfgClosedForm cf = mfg::mfg_closed_form(cfg.spec, grid);
  double flow_error = 0.0;
  for (std::size_t k = 0; k < cf.m.size(); ++k) {
    flow_error = std::max(flow_error, std::abs(sol.flow.values[k] - cf.m[k]));
  }

  std::ostringstream csv;
  csv.precision(17);
  csv << "t,m_hat,A,D\n";
  for (std::size_t k = 0; k < cf.m.size(); ++k) {
    csv << grid.t(k) << ',' << sol.flow.values[k] << ',' << cf.A[k] << ',' << cf.D[k] << '\n';
  }
  out["mfg.csv"] = csv.str();

  add_curves(out,
             make_curves(
                 *sol.solution, cfg.spec,
                 [&](std::size_t k, Moments m) { return cf.A[k] * (m.mean * m.mean + m.var) + cf.D[k]; },
                 [&](std::size_t k, Moments m) { return 2.0 * cf.A[k] * m.mean; }),
             "mean field: Y and Z node means");
  std::vector<double> t;
  for (std::size_t k = 0; k < cf.m.size(); ++k) t.push_back(grid.t(k));
  out["plots/flow.svg"] = report::svg_plot({{"flow", t, sol.flow.values, false}, {"oracle", t, cf.m, true}},
                                           {.title = "mean flow", .x_label = "t", .y_label = "m(t)"});

  return {{"solution", report::to_json(sol)},
          {"oracle", report::to_json(cf)},
          {"oracle_value", cf.value},
          {"rel_error", std::abs(sol.value.mean - cf.value) / std::abs(cf.value)},
          {"max_flow_error", flow_error}};
}

json run_converge(const RunConfig& cfg, const RunContext& ctx, Artifacts& out, json& timing) {
  convergence::SuiteOptions options;
  options.w2_samples = cfg.w2_samples;
  options.fixed_point = cfg.fixed_point;
  options.progress = [&](const convergence::RateRow& r) {
    log_stage(ctx, "N = " + std::to_string(r.n_players), r.seconds);
  };
  GameSpec spec = cfg.spec;
  spec.kind = GameKind::kNPlayer;
  const convergence::RateTable table = convergence::run_convergence_suite(spec, cfg.n_list, cfg.numerics, options);
  json rows = json::array();
  for (const auto& r : table.rows) rows.push_back({{"N", r.n_players}, {"seconds", r.seconds}});
  timing["rows"] = rows;
  timing["suite"] = table.seconds;

  out["rate_table.csv"] = table.csv();
  out["rate_fit.json"] = dump(report::rate_fit_json(table));

  std::vector<double> n, value, oracle, w2, gw2, clt;
  for (const auto& r : table.rows) {
    n.push_back(static_cast<double>(r.n_players));
    value.push_back(r.value_gap_sq);
    oracle.push_back(r.oracle_value_gap_sq);
    w2.push_back(r.w2_gap);
    gw2.push_back(r.gaussian_w2_gap);
    clt.push_back(r.clt_baseline);
  }
  out["plots/value_gap.svg"] = report::svg_plot(
      {{"value gap^2", n, value, false},
       {"oracle gap^2", n, oracle, true},
       {"W2^2 gap", n, w2, false},
       {"Gaussian W2^2", n, gw2, true},
       {"Var X_T / N", n, clt, true}},
      {.title = "N-player vs mean field", .x_label = "N", .y_label = "gap", .log_x = true, .log_y = true});
  return report::to_json(table);
}

json error_json(const std::string& type, const std::string& module, std::optional<std::size_t> node,
                const std::string& message) {
  json e = {{"type", type}, {"module", module}, {"message", message}};
  e["node"] = node ? json(*node) : json(nullptr);
  return e;
}

}  // namespace

int run(const RunConfig& config, const RunContext& ctx) {
  const std::string started = utc_now();
  const auto t_start = Clock::now();
  try {
    validate_config(config);
  } catch (const InvalidArgument& e) {
    std::cerr << dump(error_json("invalid_config", "cli", std::nullopt, e.what()));
    return kExitUsage;
  }

  const fs::path dir = config.out_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    std::cerr << dump(error_json("io_error", "cli", std::nullopt, "cannot create " + dir.string()));
    return kExitUsage;
  }
  DirectoryLock lock(dir);
  if (!lock.held()) {
    std::cerr << dump(error_json("locked", "cli", std::nullopt,
                                 lock.path().string() + " exists; another run is using this directory"));
    return kExitLocked;
  }

  const std::uint64_t seed = config.numerics.seed;
  json manifest = {{"tool", "weakgame"},
                   {"command", ctx.command},
                   {"config_path", ctx.config_path},
                   {"config", config_json(config)},
                   {"config_text", dump_config(config)},
                   {"seeds",
                    {{"base", seed},
                     {"reference_paths", seed},
                     {"mfg_flow", derive_seed(seed, 1)},
                     {"consistency", derive_seed(seed, 2)},
                     {"w2_samples", derive_seed(seed, 3)}}},
                   {"threads", thread_count()},
                   {"versions",
                    {{"weakgame", kVersion},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                   "." + std::to_string(EIGEN_MINOR_VERSION)},
                     {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                     {"compiler", __VERSION__},
                     {"cplusplus", __cplusplus}}},
                   {"started_utc", started}};

  Artifacts artifacts;
  json failure;
  try {
    json timing = json::object();
    json result;
    switch (config.kind) {
      case RunKind::kZeroSum:
        result = run_zerosum(config, ctx, artifacts, timing);
        break;
      case RunKind::kNPlayer:
        result = run_nplayer(config, ctx, artifacts, timing);
        break;
      case RunKind::kMeanField:
        result = run_mfg(config, ctx, artifacts, timing);
        break;
      case RunKind::kConverge:
        result = run_converge(config, ctx, artifacts, timing);
        break;
    }
    timing["total"] = seconds_since(t_start);
    artifacts["report.json"] = dump({{"tool", "weakgame"},
                                     {"version", kVersion},
                                     {"kind", to_string(config.kind)},
                                     {"result", result},
                                     {"timing", timing}});
  } catch (const mfg::IterationFailure& e) {
    failure = error_json("iteration_failure", "mfg", std::nullopt, e.what());
    json trace = json::array();
    for (const auto& r : e.trace()) {
      trace.push_back({{"iteration", r.iteration}, {"update", r.update}, {"value", r.value}});
    }
    failure["trace"] = trace;
  } catch (const NumericalFailure& e) {
    failure = error_json("numerical_failure", e.module(), e.node(), e.what());
  } catch (const InvalidArgument& e) {
    failure = error_json("invalid_argument", "cli", std::nullopt, e.what());
  } catch (const std::exception& e) {
    failure = error_json("internal_error", "cli", std::nullopt, e.what());
  }

  remove_artifacts(dir);
  manifest["finished_utc"] = utc_now();
  manifest["wall_clock_seconds"] = seconds_since(t_start);
  if (!failure.is_null()) {
    manifest["status"] = "error";
    manifest["artifacts"] = {"manifest.json", "error.json"};
    write_file(dir / "error.json", dump(failure));
    write_file(dir / "manifest.json", dump(manifest));
    std::cerr << dump(failure);
    return kExitFailure;
  }

  json names = json::array({"manifest.json"});
  for (const auto& [name, content] : artifacts) names.push_back(name);
  manifest["status"] = "ok";
  manifest["artifacts"] = names;
  try {
    for (const auto& [name, content] : artifacts) write_file(dir / name, content);
    write_file(dir / "manifest.json", dump(manifest));
  } catch (const std::exception& e) {
    remove_artifacts(dir);
    failure = error_json("io_error", "cli", std::nullopt, e.what());
    manifest["status"] = "error";
    manifest["artifacts"] = {"manifest.json", "error.json"};
    write_file(dir / "error.json", dump(failure));
    write_file(dir / "manifest.json", dump(manifest));
    std::cerr << dump(failure);
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace weakgame
