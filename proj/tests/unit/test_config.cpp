#include <string>

#include "doctest.h"
#include "weakgame/config.hpp"

using namespace weakgame;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const InvalidArgument& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("minimal zero-sum config materializes every default") {
  const RunConfig c = parse_config("kind=zerosum, T=1, x0=0");
  CHECK(c.kind == RunKind::kZeroSum);
  CHECK(c.spec.kind == GameKind::kZeroSum);
  CHECK(c.spec.horizon == 1.0);
  CHECK(c.spec.x0 == 0.0);
  CHECK(c.spec.n_players == 2);
  CHECK(c.numerics.n_steps == 50);
  CHECK(c.numerics.n_paths == 100'000);
  CHECK(c.fixed_point.damping == 0.5);
  CHECK(c.fixed_point.tol == 1e-4);
  CHECK(c.n_list == std::vector<std::size_t>{2, 4, 8, 16, 32, 64});
  const std::string dumped = dump_config(c);
  for (const char* key : {"kind = zerosum", "n_paths = 100000", "lambda = 0.5", "z_estimator = decorrelated"}) {
    CHECK(dumped.find(key) != std::string::npos);
  }
}

TEST_CASE("constraint violations name the key") {
  const std::string e = error_of("T=-1");
  CHECK(e.find("'T'") != std::string::npos);
  CHECK(e.find("> 0") != std::string::npos);
  CHECK(error_of("kind=zerosum\nbogus=3").find("'bogus'") != std::string::npos);
  CHECK(error_of("T=1\nT=2").find("twice") != std::string::npos);
  CHECK(error_of("T=fast").find("number") != std::string::npos);
  CHECK(error_of("numerics.n_paths=-5").find("'numerics.n_paths'") != std::string::npos);
  CHECK(error_of("kind=mfg\n[numerics]\nlambda=1.5").find("'numerics.lambda'") != std::string::npos);
  CHECK(error_of("kind=nplayer, N=65").find("'N'") != std::string::npos);
  CHECK(error_of("kind=zerosum, k=1").find("'k'") != std::string::npos);
  CHECK(error_of("N_list=[2,8,4]").find("increasing") != std::string::npos);
  CHECK(error_of("kind=tournament").find("'kind'") != std::string::npos);
  CHECK(error_of("[solver]\nx=1").find("section") != std::string::npos);
  CHECK(error_of("T").find("key = value") != std::string::npos);
}

TEST_CASE("converge config") {
  const RunConfig c = parse_config("kind=converge, N_list=[2,4,8]");
  CHECK(c.kind == RunKind::kConverge);
  CHECK(c.spec.kind == GameKind::kNPlayer);
  CHECK(c.n_list == std::vector<std::size_t>{2, 4, 8});
}

TEST_CASE("numerics section, prefixes and comments") {
  const RunConfig c = parse_config(
      "# mean field run\n"
      "kind = mfg   # trailing comment\n"
      "k = 1, x0 = 0.5\n"
      "numerics.seed = 7\n"
      "out = \"results/mfg run\"\n"
      "[numerics]\n"
      "n_paths = 2000\n"
      "z_estimator = centered\n"
      "lambda = 0.25, tol = 1e-5, max_iter = 80\n");
  CHECK(c.kind == RunKind::kMeanField);
  CHECK(c.spec.n_players == 1);
  CHECK(c.spec.dissipation == 1.0);
  CHECK(c.numerics.seed == 7);
  CHECK(c.numerics.n_paths == 2000);
  CHECK(c.numerics.bsde.z_estimator == ZEstimator::kCentered);
  CHECK(c.fixed_point.damping == 0.25);
  CHECK(c.fixed_point.max_iter == 80);
  CHECK(c.out_dir == "results/mfg run");
  CHECK(error_of("[numerics]\nout = x").find("'numerics.out'") != std::string::npos);
}

TEST_CASE("dump_config round-trips") {
  RunConfig c = parse_config("kind=nplayer, N=8, k=1, x0=0.3\nnumerics.n_paths=12345\nnumerics.ridge=1e-9");
  c.out_dir = "some dir/with \"quotes\"";
  const RunConfig back = parse_config(dump_config(c));
  CHECK(dump_config(back) == dump_config(c));
  CHECK(back.spec.x0 == 0.3);
  CHECK(back.numerics.bsde.ridge_factor == 1e-9);
  CHECK(back.out_dir == c.out_dir);
}
