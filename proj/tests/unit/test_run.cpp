#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "nlohmann/json.hpp"
#include "weakgame/run.hpp"

using namespace weakgame;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("weakgame_test_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

RunConfig config(const std::string& text, const fs::path& out) {
  RunConfig c = parse_config(text);
  c.out_dir = out.string();
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

std::vector<std::string> listing(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) names.push_back(fs::relative(e.path(), dir).generic_string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

const RunContext kQuiet{"solve", "", false};

}  // namespace

TEST_CASE("zero-sum run writes its artifacts") {
  TempDir tmp;
  const RunConfig c = config("kind=zerosum, T=1, x0=0\nnumerics.n_paths=20000", tmp.path);
  REQUIRE(run(c, kQuiet) == kExitOk);
  CHECK(listing(tmp.path) ==
        std::vector<std::string>{"manifest.json", "plots/yz.svg", "report.json", "yz.csv"});
  const json report = read_json(tmp.path / "report.json");
  CHECK(report["kind"] == "zerosum");
  CHECK(report["result"]["saddle"]["y0"].get<double>() == doctest::Approx(1.0).epsilon(0.02));
  const json manifest = read_json(tmp.path / "manifest.json");
  CHECK(manifest["status"] == "ok");
  CHECK(manifest["seeds"]["base"] == c.numerics.seed);
  CHECK(manifest["config"]["numerics"]["n_paths"] == 20000);
  CHECK(parse_config(manifest["config_text"].get<std::string>()).numerics.n_paths == 20000);
  CHECK(slurp(tmp.path / "yz.csv").rfind("t,y_mean,y_oracle_mean,z_mean,z_oracle_mean\n", 0) == 0);
}

TEST_CASE("repeated runs agree outside the timing block") {
  TempDir a, b;
  const std::string text = "kind=nplayer, N=3, k=1\nnumerics.n_paths=4000";
  REQUIRE(run(config(text, a.path), kQuiet) == kExitOk);
  REQUIRE(run(config(text, b.path), kQuiet) == kExitOk);
  json ra = read_json(a.path / "report.json"), rb = read_json(b.path / "report.json");
  ra.erase("timing");
  rb.erase("timing");
  CHECK(ra == rb);
  CHECK(slurp(a.path / "riccati.csv") == slurp(b.path / "riccati.csv"));
  CHECK(slurp(a.path / "yz.csv") == slurp(b.path / "yz.csv"));
}

TEST_CASE("converge run") {
  TempDir tmp;
  const RunConfig c = config("kind=converge, N_list=[2,4,8]\nnumerics.n_paths=4000\nnumerics.w2_samples=2000",
                             tmp.path);
  REQUIRE(run(c, kQuiet) == kExitOk);
  const std::string csv = slurp(tmp.path / "rate_table.csv");
  CHECK(csv.rfind("N,value_gap_sq,value_gap_se,w2_gap,w2_gap_se,clt_baseline\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  const json fit = read_json(tmp.path / "rate_fit.json");
  CHECK(fit.contains("c_hat"));
  CHECK(fit.contains("w2_monotone"));
  CHECK(fs::exists(tmp.path / "plots/value_gap.svg"));
}

TEST_CASE("a failed run leaves only the manifest and the error") {
  TempDir tmp;
  std::ofstream(tmp.path / "report.json") << "{\"stale\": true}";
  std::ofstream(tmp.path / "notes.txt") << "kept";
  const RunConfig c = config("kind=mfg\nnumerics.n_paths=2000\nnumerics.max_iter=2", tmp.path);
  CHECK(run(c, kQuiet) == kExitFailure);
  CHECK(listing(tmp.path) == std::vector<std::string>{"error.json", "manifest.json", "notes.txt"});
  const json error = read_json(tmp.path / "error.json");
  CHECK(error["type"] == "iteration_failure");
  CHECK(error["module"] == "mfg");
  CHECK(error["trace"].size() == 2);
  CHECK(read_json(tmp.path / "manifest.json")["status"] == "error");
}

TEST_CASE("a locked directory is left alone") {
  TempDir tmp;
  std::ofstream(tmp.path / ".lock") << "";
  CHECK(run(config("kind=zerosum\nnumerics.n_paths=2000", tmp.path), kQuiet) == kExitLocked);
  CHECK(listing(tmp.path) == std::vector<std::string>{".lock"});
}
