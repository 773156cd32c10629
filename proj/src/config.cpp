#include "weakgame/config.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include "json.hpp"
#include "weakgame/nplayer.hpp"

namespace weakgame {

using nlohmann::json;

std::string to_string(RunKind kind) {
  switch (kind) {
    case RunKind::kZeroSum:
      return "zerosum";
    case RunKind::kNPlayer:
      return "nplayer";
    case RunKind::kMeanField:
      return "mfg";
    case RunKind::kConverge:
      return "converge";
  }
  return "unknown";
}

namespace {

[[noreturn]] void fail(const std::string& key, const std::string& what) {
  throw InvalidArgument("config: '" + key + "' " + what);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Splits on commas outside brackets and quotes.
std::vector<std::string> split_entries(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') quoted = !quoted;
    if (!quoted && c == '[') ++depth;
    if (!quoted && c == ']') --depth;
    if (!quoted && depth == 0 && c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

json parse_value(const std::string& raw) {
  try {
    return json::parse(raw);
  } catch (const json::parse_error&) {
    return json(raw);  // bare word
  }
}

double as_double(const std::string& key, const json& v) {
  if (!v.is_number()) fail(key, "must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) fail(key, "must be finite");
  return d;
}

std::uint64_t as_uint(const std::string& key, const json& v) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) fail(key, "must be >= 0");
  fail(key, "must be a non-negative integer");
}

std::string as_string(const std::string& key, const json& v) {
  if (!v.is_string()) fail(key, "must be a word");
  return v.get<std::string>();
}

using Setter = std::function<void(RunConfig&, const std::string&, const json&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"kind",
       [](RunConfig& c, const std::string& k, const json& v) {
         const std::string s = as_string(k, v);
         if (s == "zerosum") c.kind = RunKind::kZeroSum;
         else if (s == "nplayer") c.kind = RunKind::kNPlayer;
         else if (s == "mfg") c.kind = RunKind::kMeanField;
         else if (s == "converge") c.kind = RunKind::kConverge;
         else fail(k, "must be one of zerosum, nplayer, mfg, converge");
       }},
      {"T", [](RunConfig& c, const std::string& k, const json& v) { c.spec.horizon = as_double(k, v); }},
      {"x0", [](RunConfig& c, const std::string& k, const json& v) { c.spec.x0 = as_double(k, v); }},
      {"k", [](RunConfig& c, const std::string& k, const json& v) { c.spec.dissipation = as_double(k, v); }},
      {"x0_variance",
       [](RunConfig& c, const std::string& k, const json& v) { c.spec.x0_variance = as_double(k, v); }},
      {"N", [](RunConfig& c, const std::string& k, const json& v) { c.spec.n_players = as_uint(k, v); }},
      {"N_list",
       [](RunConfig& c, const std::string& k, const json& v) {
         if (!v.is_array() || v.empty()) fail(k, "must be a non-empty list of integers");
         c.n_list.clear();
         for (const json& e : v) c.n_list.push_back(as_uint(k, e));
       }},
      {"out", [](RunConfig& c, const std::string& k, const json& v) { c.out_dir = as_string(k, v); }},
      {"numerics.n_steps",
       [](RunConfig& c, const std::string& k, const json& v) { c.numerics.n_steps = as_uint(k, v); }},
      {"numerics.n_paths",
       [](RunConfig& c, const std::string& k, const json& v) { c.numerics.n_paths = as_uint(k, v); }},
      {"numerics.seed",
       [](RunConfig& c, const std::string& k, const json& v) { c.numerics.seed = as_uint(k, v); }},
      {"numerics.alpha_max",
       [](RunConfig& c, const std::string& k, const json& v) { c.numerics.alpha_max = as_double(k, v); }},
      {"numerics.z_max",
       [](RunConfig& c, const std::string& k, const json& v) { c.numerics.bsde.z_max = as_double(k, v); }},
      {"numerics.ridge",
       [](RunConfig& c, const std::string& k, const json& v) {
         c.numerics.bsde.ridge_factor = as_double(k, v);
       }},
      {"numerics.z_estimator",
       [](RunConfig& c, const std::string& k, const json& v) {
         try {
           c.numerics.bsde.z_estimator = z_estimator_from_string(as_string(k, v));
         } catch (const InvalidArgument&) {
           fail(k, "must be one of plain, centered, decorrelated");
         }
       }},
      {"numerics.lambda",
       [](RunConfig& c, const std::string& k, const json& v) { c.fixed_point.damping = as_double(k, v); }},
      {"numerics.tol",
       [](RunConfig& c, const std::string& k, const json& v) { c.fixed_point.tol = as_double(k, v); }},
      {"numerics.max_iter",
       [](RunConfig& c, const std::string& k, const json& v) { c.fixed_point.max_iter = as_uint(k, v); }},
      {"numerics.w2_samples",
       [](RunConfig& c, const std::string& k, const json& v) { c.w2_samples = as_uint(k, v); }},
  };
  return table;
}

}  // namespace

void validate_config(const RunConfig& c) {
  if (!(c.spec.horizon > 0.0)) fail("T", "must be > 0");
  if (!(c.spec.dissipation >= 0.0)) fail("k", "must be >= 0");
  if (!(c.spec.x0_variance >= 0.0)) fail("x0_variance", "must be >= 0");
  if (c.kind == RunKind::kZeroSum && c.spec.n_players != 2) fail("N", "must be 2 for kind=zerosum");
  if (c.kind == RunKind::kZeroSum && c.spec.dissipation != 0.0) fail("k", "must be 0 for kind=zerosum");
  if (c.kind == RunKind::kNPlayer &&
      (c.spec.n_players < 1 || c.spec.n_players > nplayer::kMaxPlayers)) {
    fail("N", "must lie in [1, 64] for kind=nplayer");
  }
  if (c.numerics.n_steps < 1) fail("numerics.n_steps", "must be >= 1");
  if (c.numerics.n_paths < 100) fail("numerics.n_paths", "must be >= 100");
  if (!(c.numerics.alpha_max > 0.0)) fail("numerics.alpha_max", "must be > 0");
  if (!(c.numerics.bsde.z_max > 0.0)) fail("numerics.z_max", "must be > 0");
  if (!(c.numerics.bsde.ridge_factor >= 0.0)) fail("numerics.ridge", "must be >= 0");
  if (!(c.fixed_point.damping > 0.0 && c.fixed_point.damping <= 1.0)) {
    fail("numerics.lambda", "must lie in (0, 1]");
  }
  if (!(c.fixed_point.tol > 0.0)) fail("numerics.tol", "must be > 0");
  if (c.fixed_point.max_iter < 1) fail("numerics.max_iter", "must be >= 1");
  if (c.w2_samples < 100) fail("numerics.w2_samples", "must be >= 100");
  if (c.n_list.size() < 3) fail("N_list", "needs at least 3 entries");
  for (std::size_t i = 0; i < c.n_list.size(); ++i) {
    if (c.n_list[i] < 2 || c.n_list[i] > nplayer::kMaxPlayers) fail("N_list", "entries must lie in [2, 64]");
    if (i > 0 && c.n_list[i] <= c.n_list[i - 1]) fail("N_list", "must be strictly increasing");
  }
  if (c.out_dir.empty()) fail("out", "must not be empty");
}

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  bool n_given = false;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::map<std::string, bool> seen;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.find('=') == std::string::npos) {
      if (line != "[numerics]") throw InvalidArgument("config: unknown section " + line);
      section = "numerics.";
      continue;
    }
    for (const std::string& entry : split_entries(line)) {
      const std::string e = trim(entry);
      if (e.empty()) continue;
      const auto eq = e.find('=');
      if (eq == std::string::npos) throw InvalidArgument("config: expected key = value, got '" + e + "'");
      std::string key = trim(e.substr(0, eq));
      const std::string raw = trim(e.substr(eq + 1));
      if (!section.empty() && key.rfind("numerics.", 0) != 0) key = section + key;
      const auto it = setters().find(key);
      if (it == setters().end()) throw InvalidArgument("config: unknown key '" + key + "'");
      if (seen[key]) fail(key, "is given twice");
      seen[key] = true;
      if (raw.empty()) fail(key, "has no value");
      it->second(c, key, parse_value(raw));
      if (key == "N") n_given = true;
    }
  }
  switch (c.kind) {
    case RunKind::kZeroSum:
      c.spec.kind = GameKind::kZeroSum;
      if (!n_given) c.spec.n_players = 2;
      break;
    case RunKind::kNPlayer:
    case RunKind::kConverge:
      c.spec.kind = GameKind::kNPlayer;
      break;
    case RunKind::kMeanField:
      c.spec.kind = GameKind::kMeanField;
      if (!n_given) c.spec.n_players = 1;
      break;
  }
  validate_config(c);
  return c;
}

std::string dump_config(const RunConfig& c) {
  std::ostringstream o;
  o.precision(17);
  json list = c.n_list;
  o << "kind = " << to_string(c.kind) << "\n"
    << "T = " << c.spec.horizon << "\n"
    << "x0 = " << c.spec.x0 << "\n"
    << "k = " << c.spec.dissipation << "\n"
    << "N = " << c.spec.n_players << "\n"
    << "x0_variance = " << c.spec.x0_variance << "\n"
    << "N_list = " << list.dump() << "\n"
    << "out = " << json(c.out_dir).dump() << "\n"
    << "[numerics]\n"
    << "n_steps = " << c.numerics.n_steps << "\n"
    << "n_paths = " << c.numerics.n_paths << "\n"
    << "seed = " << c.numerics.seed << "\n"
    << "alpha_max = " << c.numerics.alpha_max << "\n"
    << "z_max = " << c.numerics.bsde.z_max << "\n"
    << "ridge = " << c.numerics.bsde.ridge_factor << "\n"
    << "z_estimator = " << to_string(c.numerics.bsde.z_estimator) << "\n"
    << "lambda = " << c.fixed_point.damping << "\n"
    << "tol = " << c.fixed_point.tol << "\n"
    << "max_iter = " << c.fixed_point.max_iter << "\n"
    << "w2_samples = " << c.w2_samples << "\n";
  return o.str();
}

}  // namespace weakgame
