#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "weakgame/convergence.hpp"
#include "weakgame/mfg.hpp"
#include "weakgame/nplayer.hpp"
#include "weakgame/validate.hpp"
#include "weakgame/zerosum.hpp"

/// JSON views of the solver outputs and static SVG plots.
namespace weakgame::report {

using nlohmann::json;

json to_json(const GameSpec& spec);
json to_json(const Numerics& numerics);
json to_json(const Estimate& e);
json to_json(const BsdeDiagnostics& d);
/// Coefficients are left out; the node means of Y and Z are included.
json to_json(const BSDESolution& s);
json to_json(const zerosum::SaddleReport& r);
json to_json(const zerosum::DeviationRow& r);
json to_json(const zerosum::NashSystemReport& r);
json to_json(const nplayer::RiccatiCoefficients& r);
json to_json(const mfg::MeanFlow& f);
json to_json(const mfg::MfgClosedForm& c);
json to_json(const mfg::MFGSolution& s);
json to_json(const convergence::RateTable& t);
json to_json(const validate::ValidationReport& r);

/// Slopes, intercepts and the witness constant.
json rate_fit_json(const convergence::RateTable& t);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  bool dashed = false;
};

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
};

/// Self-contained SVG line plot with axes, ticks and a legend. Non-positive
/// values are dropped on log axes.
std::string svg_plot(const std::vector<Series>& series, const PlotOptions& options);

}  // namespace weakgame::report
