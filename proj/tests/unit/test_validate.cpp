#include <algorithm>

#include "doctest.h"
#include "weakgame/validate.hpp"

using namespace weakgame;
using namespace weakgame::validate;

TEST_CASE("Isaacs checks pass on their own") {
  CHECK(isaacs_identity().passed);
  const Check brute = isaacs_brute_force();
  CHECK(brute.passed);
  CHECK(brute.value <= 1e-2);
}

TEST_CASE("closed-form one-step residuals halve with the step") {
  for (std::size_t steps : {20u, 40u}) {
    CAPTURE(steps);
    const Estimate coarse = saddle_one_step_residual(1.0, 1.0, steps, 4'000, 3);
    const Estimate fine = saddle_one_step_residual(1.0, 1.0, 2 * steps, 4'000, 3);
    CHECK(fine.mean <= 0.5 * coarse.mean + 2.0 * std::hypot(fine.se, 0.5 * coarse.se));
  }
}

TEST_CASE("full validation is green") {
  const ValidationReport r = run_validation();
  for (const Check& c : r.checks) {
    CAPTURE(c.name);
    CAPTURE(c.detail);
    CHECK(c.passed);
  }
  CHECK(r.all_passed());
  const std::string table = r.table();
  CHECK(static_cast<std::size_t>(std::count(table.begin(), table.end(), '\n')) == r.checks.size());
  CHECK(table.find("FAIL") == std::string::npos);
}
