#pragma once

#include <filesystem>
#include <string>

#include "weakgame/config.hpp"

namespace weakgame {

inline constexpr const char* kVersion = "1.0.0";

/// Exit codes of run().
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,  // computation failed; error.json written
  kExitUsage = 2,    // bad config or arguments; nothing computed
  kExitLocked = 3,   // another run holds the output directory
};

struct RunContext {
  std::string command = "solve";
  std::string config_path;
  /// Print one line per finished stage to stderr.
  bool verbose = true;
};

/// Solves the configured problem and writes into config.out_dir:
///
///   report.json    results; wall-clock seconds live under the "timing" key only
///   manifest.json  config echo, seeds, versions, threads, timestamps, status
///   *.csv          yz.csv for single games; riccati.csv (nplayer), mfg.csv (mfg),
///                  rate_table.csv and rate_fit.json (converge)
///   plots/*.svg    yz.svg for single games (plus flow.svg for mfg); value_gap.svg
///                  for converge
///
/// All artifacts are built in memory first. On failure any artifact of an
/// earlier run is removed and only manifest.json and error.json remain. A
/// `.lock` file guards the directory for the duration of the run.
int run(const RunConfig& config, const RunContext& context = {});

/// Artifact names this tool may write (relative to the output directory).
const std::vector<std::string>& artifact_names();

}  // namespace weakgame
