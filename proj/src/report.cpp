#include "weakgame/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace weakgame::report {

json to_json(const GameSpec& s) {
  return {{"kind", to_string(s.kind)}, {"T", s.horizon},           {"k", s.dissipation},
          {"x0", s.x0},                {"N", s.n_players},        {"x0_variance", s.x0_variance}};
}

json to_json(const Numerics& n) {
  return {{"n_steps", n.n_steps},
          {"n_paths", n.n_paths},
          {"seed", n.seed},
          {"alpha_max", n.alpha_max},
          {"z_max", n.bsde.z_max},
          {"ridge", n.bsde.ridge_factor},
          {"z_estimator", to_string(n.bsde.z_estimator)},
          {"pool_exchangeable", n.bsde.pool_exchangeable},
          {"martingale_control", n.bsde.martingale_control}};
}

json to_json(const Estimate& e) { return {{"mean", e.mean}, {"se", e.se}}; }

json to_json(const BsdeDiagnostics& d) {
  double worst = 0.0;
  for (double c : d.condition) worst = std::max(worst, c);
  return {{"max_condition", worst},
          {"z_clips", d.z_clips},
          {"ridge", d.ridge},
          {"pooled", d.pooled},
          {"z_estimator", d.z_estimator}};
}

json to_json(const BSDESolution& s) {
  json y = json::array();
  for (Eigen::Index k = 0; k < s.y_mean.rows(); ++k) {
    std::vector<double> row;
    for (Eigen::Index i = 0; i < s.y_mean.cols(); ++i) row.push_back(s.y_mean(k, i));
    y.push_back(row);
  }
  json z = json::array();
  for (const Matrix& m : s.z_mean) z.push_back(m(0, 0));
  std::vector<double> y0(s.y0_regression.data(), s.y0_regression.data() + s.y0_regression.size());
  std::vector<double> y0s(s.y0_sample_mean.data(), s.y0_sample_mean.data() + s.y0_sample_mean.size());
  return {{"n_equations", s.n_equations},
          {"n_brownian", s.n_brownian},
          {"n_paths", s.n_paths},
          {"basis", s.basis ? s.basis->name() : ""},
          {"y0_regression", y0},
          {"y0_sample_mean", y0s},
          {"y_mean", y},
          {"z11_mean", z},
          {"diagnostics", to_json(s.diagnostics)}};
}

json to_json(const zerosum::SaddleReport& r) {
  return {{"spec", to_json(r.spec)},
          {"v_plus", r.v_plus},
          {"v_minus", r.v_minus},
          {"y0", r.y0},
          {"y0_sample_mean", r.y0_sample_mean},
          {"y0_se", r.y0_se},
          {"z0", r.z0},
          {"exact", {{"y0", r.exact.y}, {"z0", r.exact.z}}},
          {"y0_rel_error", r.y0_rel_error},
          {"z0_rel_error", r.z0_rel_error},
          {"bsde", to_json(*r.solution)}};
}

json to_json(const zerosum::DeviationRow& r) {
  return {{"player", r.player},
          {"perturbation", r.perturbation.label()},
          {"gap", to_json(r.gap)},
          {"epsilon", r.epsilon},
          {"holds", r.holds}};
}

json to_json(const zerosum::NashSystemReport& r) {
  return {{"cross_term", r.cross_term == zerosum::CrossTerm::kDerived ? "derived" : "printed"},
          {"y1_0", r.y1_0},
          {"y2_0", r.y2_0},
          {"y1_0_se", r.y1_0_se},
          {"antisymmetry", r.antisymmetry},
          {"max_abs_y1", r.max_abs_y1},
          {"exact_y0", r.exact.y}};
}

json to_json(const nplayer::RiccatiCoefficients& r) {
  return {{"N", r.n_players}, {"k", r.dissipation}, {"substeps", r.substeps},
          {"A", r.A},         {"B", r.B},           {"C", r.C},
          {"D", r.D},         {"A0", r.A.front()},  {"C0", r.C.front()},
          {"D0", r.D.front()}};
}

json to_json(const mfg::MeanFlow& f) { return {{"values", f.values}, {"se", f.se}}; }

json to_json(const mfg::MfgClosedForm& c) {
  return {{"A", c.A}, {"D", c.D}, {"m", c.m}, {"value", c.value}};
}

json to_json(const mfg::MFGSolution& s) {
  json trace = json::array();
  for (const auto& r : s.trace) {
    trace.push_back({{"iteration", r.iteration}, {"update", r.update}, {"value", r.value}});
  }
  return {{"spec", to_json(s.spec)},
          {"damping", s.options.damping},
          {"tol", s.options.tol},
          {"max_iter", s.options.max_iter},
          {"iterations", s.iterations()},
          {"value", to_json(s.value)},
          {"flow", to_json(s.flow)},
          {"trace", trace},
          {"consistency", {{"residual", s.consistency.residual}, {"max_se", s.consistency.max_se}}},
          {"bsde", to_json(*s.solution)}};
}

json rate_fit_json(const convergence::RateTable& t) {
  auto fit = [](const convergence::RateFit& f) {
    return json{{"slope", f.slope}, {"intercept", f.intercept}};
  };
  return {{"value_gap_sq", fit(t.value_fit)},
          {"w2_gap", fit(t.w2_fit)},
          {"oracle_value_gap_sq", fit(t.oracle_value_fit)},
          {"c_hat", t.c_hat},
          {"w2_monotone", t.w2_monotone},
          {"excluded_N", t.rows.empty() ? 0 : t.rows.front().n_players}};
}

json to_json(const convergence::RateTable& t) {
  json rows = json::array();
  for (const auto& r : t.rows) {
    rows.push_back({{"N", r.n_players},
                    {"value_gap", r.value_gap},
                    {"value_gap_sq", r.value_gap_sq},
                    {"value_gap_se", r.value_gap_se},
                    {"oracle_value_gap_sq", r.oracle_value_gap_sq},
                    {"nplayer_value", r.nplayer_value},
                    {"w2_gap", r.w2_gap},
                    {"w2_gap_se", r.w2_gap_se},
                    {"gaussian_w2_gap", r.gaussian_w2_gap},
                    {"clt_baseline", r.clt_baseline}});
  }
  json out = {{"spec", to_json(t.spec)},
              {"rows", rows},
              {"mfg_value", t.mfg_value},
              {"mfg_oracle_value", t.mfg_oracle_value},
              {"mfg_iterations", t.mfg_iterations},
              {"terminal_variance", t.terminal_variance},
              {"fit", rate_fit_json(t)}};
  if (t.player2_w2_gap) out["player2_w2_gap_N2"] = to_json(*t.player2_w2_gap);
  return out;
}

json to_json(const validate::ValidationReport& r) {
  json checks = json::array();
  for (const auto& c : r.checks) {
    checks.push_back({{"name", c.name},
                      {"group", c.group},
                      {"passed", c.passed},
                      {"value", c.value},
                      {"threshold", c.threshold},
                      {"detail", c.detail}});
  }
  return {{"all_passed", r.all_passed()}, {"checks", checks}};
}

// ---------------------------------------------------------------------------
// SVG

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 80, kRight = 170, kTop = 40, kBottom = 60;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

}  // namespace

std::string svg_plot(const std::vector<Series>& series, const PlotOptions& o) {
  auto tx = [&](double v) { return o.log_x ? std::log10(v) : v; };
  auto ty = [&](double v) { return o.log_y ? std::log10(v) : v; };
  auto usable = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!o.log_x || x > 0.0) && (!o.log_y || y > 0.0);
  };
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const Series& s : series) {
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!usable(s.x[i], s.y[i])) continue;
      x0 = std::min(x0, tx(s.x[i]));
      x1 = std::max(x1, tx(s.x[i]));
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  if (o.log_y) {
    y0 = std::floor(y0);
    y1 = std::ceil(y1);
  } else {
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
  }
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double v) { return kLeft + (tx(v) - x0) / (x1 - x0) * pw; };
  auto py = [&](double v) { return kTop + ph - (ty(v) - y0) / (y1 - y0) * ph; };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) +
                    "\" height=\"" + num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
         escape(o.title) + "</text>\n";
  svg += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(pw) + "\" height=\"" +
         num(ph) + "\" fill=\"none\" stroke=\"black\"/>\n";

  for (int i = 0; i <= 5; ++i) {
    const double vx = x0 + (x1 - x0) * i / 5.0;
    const double vy = y0 + (y1 - y0) * i / 5.0;
    const double gx = kLeft + pw * i / 5.0;
    const double gy = kTop + ph - ph * i / 5.0;
    svg += "<line x1=\"" + num(gx) + "\" y1=\"" + num(kTop + ph) + "\" x2=\"" + num(gx) + "\" y2=\"" +
           num(kTop + ph + 5) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + num(gx) + "\" y=\"" + num(kTop + ph + 18) + "\" text-anchor=\"middle\">" +
           tick_label(o.log_x ? std::pow(10.0, vx) : vx) + "</text>\n";
    svg += "<line x1=\"" + num(kLeft - 5) + "\" y1=\"" + num(gy) + "\" x2=\"" + num(kLeft) + "\" y2=\"" +
           num(gy) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(gy + 4) + "\" text-anchor=\"end\">" +
           tick_label(o.log_y ? std::pow(10.0, vy) : vy) + "</text>\n";
  }
  svg += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kHeight - 15) +
         "\" text-anchor=\"middle\">" + escape(o.x_label) + "</text>\n";
  svg += "<text transform=\"translate(18," + num(kTop + ph / 2) +
         ") rotate(-90)\" text-anchor=\"middle\">" + escape(o.y_label) +
         "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const Series& ser = series[s];
    const char* color = kColors[s % std::size(kColors)];
    std::string pts;
    for (std::size_t i = 0; i < std::min(ser.x.size(), ser.y.size()); ++i) {
      if (!usable(ser.x[i], ser.y[i])) continue;
      pts += num(px(ser.x[i])) + "," + num(py(ser.y[i])) + " ";
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.8\"" +
           (ser.dashed ? " stroke-dasharray=\"6,4\"" : "") + " points=\"" + pts + "\"/>\n";
    const double ly = kTop + 12 + 18.0 * static_cast<double>(s);
    const double lx = kLeft + pw + 12;
    svg += "<line x1=\"" + num(lx) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(lx + 24) + "\" y2=\"" +
           num(ly) + "\" stroke=\"" + color + "\" stroke-width=\"1.8\"" +
           (ser.dashed ? " stroke-dasharray=\"6,4\"" : "") + "/>\n";
    svg += "<text x=\"" + num(lx + 30) + "\" y=\"" + num(ly + 4) + "\">" + escape(ser.name) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace weakgame::report
