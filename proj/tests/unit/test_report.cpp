#include <string>

#include "doctest.h"
#include "weakgame/report.hpp"

using namespace weakgame;
using namespace weakgame::report;

namespace {

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("svg plot structure") {
  const std::string svg = svg_plot({{"a", {0, 1, 2}, {1, 2, 3}, false}, {"b", {0, 1, 2}, {3, 2, 1}, true}},
                                   {"demo", "t", "y", false, false});
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(count(svg, "<polyline") == 2);
  CHECK(count(svg, "stroke-dasharray") >= 1);
  CHECK(svg.find(">demo<") != std::string::npos);
  CHECK(svg.find(">a<") != std::string::npos);
  CHECK(svg.find(">b<") != std::string::npos);
}

TEST_CASE("log axes drop non-positive points") {
  const Series s{"gap", {1, 2, 4, 8}, {1.0, 0.0, -0.5, 0.25}, false};
  const std::string svg = svg_plot({s}, {"", "N", "gap", true, true});
  const std::size_t start = svg.find("points=\"");
  REQUIRE(start != std::string::npos);
  const std::string points = svg.substr(start + 8, svg.find('"', start + 8) - start - 8);
  CHECK(count(points, ",") == 2);
  CHECK(svg.find(">8<") != std::string::npos);
}

TEST_CASE("estimate and spec serialization") {
  const json e = to_json(Estimate{1.5, 0.25});
  CHECK(e["mean"] == 1.5);
  CHECK(e["se"] == 0.25);
  GameSpec spec;
  spec.kind = GameKind::kNPlayer;
  spec.n_players = 8;
  const json s = to_json(spec);
  CHECK(s["kind"] == "nplayer");
  CHECK(s["N"] == 8);
  CHECK(s["T"] == 1.0);
}
