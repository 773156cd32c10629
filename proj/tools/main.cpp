#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "weakgame/config.hpp"
#include "weakgame/parallel.hpp"
#include "weakgame/run.hpp"
#include "weakgame/validate.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 0;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_config) {
  if (with_config) {
    cmd->add_option("--config", f.config_path, "config file (key = value lines)")->check(CLI::ExistingFile);
    cmd->add_option("--out", f.out_dir, "output directory (overrides 'out')");
  }
  cmd->add_option("--seed", f.seed, "base seed (overrides numerics.seed)");
  cmd->add_option("--threads", f.threads, "worker threads; 0 = hardware concurrency")
      ->check(CLI::NonNegativeNumber);
}

std::string read_text(const std::string& path) {
  if (path.empty()) return "";
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int usage_error(const std::string& message) {
  nlohmann::json e = {{"type", "invalid_config"}, {"module", "cli"}, {"node", nullptr}, {"message", message}};
  std::cerr << e.dump(2) << "\n";
  return weakgame::kExitUsage;
}

int solve(const CommonFlags& f, const std::string& command) {
  weakgame::RunConfig config;
  try {
    config = weakgame::parse_config(read_text(f.config_path));
    if (command == "converge" && config.kind != weakgame::RunKind::kConverge) {
      config.kind = weakgame::RunKind::kConverge;
      config.spec.kind = weakgame::GameKind::kNPlayer;
    }
    if (f.seed) config.numerics.seed = *f.seed;
    if (!f.out_dir.empty()) config.out_dir = f.out_dir;
    weakgame::validate_config(config);
  } catch (const weakgame::InvalidArgument& e) {
    return usage_error(e.what());
  }
  return weakgame::run(config, {.command = command, .config_path = f.config_path});
}

int validate(const CommonFlags& f) {
  weakgame::validate::ValidateOptions options;
  if (f.seed) options.seed = *f.seed;
  const weakgame::validate::ValidationReport report = weakgame::validate::run_validation(options);
  std::cout << report.table();
  return report.all_passed() ? weakgame::kExitOk : weakgame::kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weak-formulation BSDE solvers for linear-quadratic stochastic games"};
  app.set_version_flag("--version", std::string(weakgame::kVersion));
  app.require_subcommand(1);

  CommonFlags solve_flags, converge_flags, validate_flags;
  CLI::App* solve_cmd = app.add_subcommand("solve", "solve the game named by 'kind' in the config");
  add_common(solve_cmd, solve_flags, true);
  CLI::App* converge_cmd = app.add_subcommand("converge", "N-player vs mean field convergence suite");
  add_common(converge_cmd, converge_flags, true);
  CLI::App* validate_cmd = app.add_subcommand("validate", "oracle and invariant checks; prints a table");
  add_common(validate_cmd, validate_flags, false);

  CLI11_PARSE(app, argc, argv);

  const CommonFlags& active = solve_cmd->parsed()      ? solve_flags
                              : converge_cmd->parsed() ? converge_flags
                                                       : validate_flags;
  weakgame::set_thread_count(active.threads > 0 ? active.threads
                                                : std::max(1u, std::thread::hardware_concurrency()));

  if (solve_cmd->parsed()) return solve(solve_flags, "solve");
  if (converge_cmd->parsed()) return solve(converge_flags, "converge");
  return validate(validate_flags);
}
