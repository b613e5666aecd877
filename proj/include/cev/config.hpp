#pragma once

#include "cev/closures.hpp"
#include "cev/diagnostics.hpp"
#include "cev/errors.hpp"

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace cev {

enum class Scenario { offset_circles, taylor_green, quiescent };

enum class BetaMode { fixed, default_global, default_local, k41_3d, two_d };

/// One run of the harness. Optional fields fall back to the scenario's
/// defaults when the run is set up.
struct RunConfig {
  Scenario scenario = Scenario::offset_circles;
  std::string mesh_nodes;     // file path or "unit_square:N"; empty = scenario default
  std::string mesh_elements;  // required with a node file path
  std::optional<double> nu;
  std::optional<double> dt;
  std::optional<double> T;
  std::optional<double> beta;
  BetaMode beta_mode = BetaMode::fixed;
  std::vector<double> beta_args;  // (Re, delta/L) or (delta/L, delta/eta)
  Method method = Method::linearly_implicit;
  double cs = 0.1;
  GradientMode closure_mode = GradientMode::strain;
  DeltaPolicy delta_mode = DeltaPolicy::global_min_edge;
  double solver_tol = 1e-10;
  double audit_tol = 1e-8;
  bool strict = false;
  std::string out_csv;
  std::string out_fields;  // snapshot directory; empty = no snapshots
  long snapshot_every = 0; // 0 = initial and final states only (when out_fields is set)
  int ens_J = 0;           // 0 = single run
  double ens_amplitude = 1e-3;
  std::uint64_t ens_seed = 1;

  void validate() const {
    if (nu && !(*nu > 0.0)) throw ConfigError("nu must be > 0");
    if (dt && !(*dt > 0.0)) throw ConfigError("dt must be > 0");
    if (T && dt && !(*T >= *dt)) throw ConfigError("T must be >= dt");
    if (beta && !(*beta >= 0.0)) throw ConfigError("beta must be >= 0");
    if (!(cs > 0.0)) throw ConfigError("cs must be > 0");
    if (!(solver_tol > 0.0)) throw ConfigError("solver_tol must be > 0");
    if (!(audit_tol > 0.0)) throw ConfigError("audit_tol must be > 0");
    if (snapshot_every < 0) throw ConfigError("snapshot_every must be >= 0");
    if (ens_J == 1 || ens_J < 0) throw ConfigError("ens_J must be 0 (single run) or >= 2");
    if (!(ens_amplitude >= 0.0)) throw ConfigError("ens_amplitude must be >= 0");
    if (!mesh_nodes.empty() && mesh_nodes.rfind("unit_square:", 0) != 0 && mesh_elements.empty())
      throw ConfigError("mesh_nodes given without mesh_elements");
  }
};

inline std::string scenario_name(Scenario s) {
  switch (s) {
  case Scenario::offset_circles: return "offset_circles";
  case Scenario::taylor_green: return "taylor_green";
  case Scenario::quiescent: return "quiescent";
  }
  return "?";
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

inline double to_double(const std::string& v, const std::string& key, std::size_t line) {
  const char* begin = v.c_str();
  char* end = nullptr;
  const double x = std::strtod(begin, &end);
  if (v.empty() || end != begin + v.size() || !std::isfinite(x))
    throw ParseError("key '" + key + "' expects a number, got '" + v + "'", line);
  return x;
}

inline long to_long(const std::string& v, const std::string& key, std::size_t line) {
  const char* begin = v.c_str();
  char* end = nullptr;
  const long x = std::strtol(begin, &end, 10);
  if (v.empty() || end != begin + v.size()) throw ParseError("key '" + key + "' expects an integer, got '" + v + "'", line);
  return x;
}

inline bool to_bool(const std::string& v, const std::string& key, std::size_t line) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ParseError("key '" + key + "' expects true or false, got '" + v + "'", line);
}

} // namespace detail

/// Parse "key = value" lines. '#' starts a comment. `scenario` is required;
/// unknown, duplicate or ill-typed keys are errors naming the key and line.
///
/// beta_mode is one of: fixed | default-global | default-local |
/// k41-3d <Re> <delta/L> | 2d <delta/L> <delta/eta>.
inline RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::map<std::string, std::size_t> seen;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value', got '" + line + "'", line_no);
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError("missing key before '='", line_no);
    if (val.empty()) throw ParseError("key '" + key + "' has no value", line_no);
    if (auto [it, fresh] = seen.emplace(key, line_no); !fresh)
      throw ParseError("key '" + key + "' repeats line " + std::to_string(it->second), line_no);

    auto num = [&] { return detail::to_double(val, key, line_no); };
    auto integer = [&] { return detail::to_long(val, key, line_no); };
    if (key == "scenario") {
      if (val == "offset_circles") c.scenario = Scenario::offset_circles;
      else if (val == "taylor_green") c.scenario = Scenario::taylor_green;
      else if (val == "quiescent") c.scenario = Scenario::quiescent;
      else throw ParseError("unknown scenario '" + val + "'", line_no);
    } else if (key == "mesh_nodes") {
      c.mesh_nodes = val;
    } else if (key == "mesh_elements") {
      c.mesh_elements = val;
    } else if (key == "nu") {
      c.nu = num();
    } else if (key == "dt") {
      c.dt = num();
    } else if (key == "T") {
      c.T = num();
    } else if (key == "beta") {
      c.beta = num();
    } else if (key == "beta_mode") {
      const auto tok = detail::split_ws(val);
      const std::string& mode = tok.front();
      std::size_t nargs = 0;
      if (mode == "fixed") c.beta_mode = BetaMode::fixed;
      else if (mode == "default-global") c.beta_mode = BetaMode::default_global;
      else if (mode == "default-local") c.beta_mode = BetaMode::default_local;
      else if (mode == "k41-3d") c.beta_mode = BetaMode::k41_3d, nargs = 2;
      else if (mode == "2d") c.beta_mode = BetaMode::two_d, nargs = 2;
      else throw ParseError("unknown beta_mode '" + mode + "'", line_no);
      if (tok.size() != nargs + 1)
        throw ParseError("beta_mode " + mode + " takes " + std::to_string(nargs) + " arguments", line_no);
      c.beta_args.clear();
      for (std::size_t i = 1; i < tok.size(); ++i) c.beta_args.push_back(detail::to_double(tok[i], key, line_no));
    } else if (key == "method") {
      const long m = integer();
      if (m < 1 || m > 3) throw ParseError("method must be 1, 2 or 3", line_no);
      c.method = method_from_number(static_cast<int>(m));
    } else if (key == "cs") {
      c.cs = num();
    } else if (key == "closure_mode") {
      if (val == "strain") c.closure_mode = GradientMode::strain;
      else if (val == "gradient") c.closure_mode = GradientMode::gradient;
      else throw ParseError("closure_mode must be strain or gradient", line_no);
    } else if (key == "delta_mode") {
      if (val == "global") c.delta_mode = DeltaPolicy::global_min_edge;
      else if (val == "local") c.delta_mode = DeltaPolicy::local_width;
      else throw ParseError("delta_mode must be global or local", line_no);
    } else if (key == "solver_tol") {
      c.solver_tol = num();
    } else if (key == "audit_tol") {
      c.audit_tol = num();
    } else if (key == "strict") {
      c.strict = detail::to_bool(val, key, line_no);
    } else if (key == "out_csv") {
      c.out_csv = val;
    } else if (key == "out_fields") {
      c.out_fields = val;
    } else if (key == "snapshot_every") {
      c.snapshot_every = integer();
    } else if (key == "ens_J") {
      c.ens_J = static_cast<int>(integer());
    } else if (key == "ens_amplitude") {
      c.ens_amplitude = num();
    } else if (key == "ens_seed") {
      const long s = integer();
      if (s < 0) throw ParseError("ens_seed must be >= 0", line_no);
      c.ens_seed = static_cast<std::uint64_t>(s);
    } else {
      throw ParseError("unknown key '" + key + "'", line_no);
    }
  }
  if (!seen.count("scenario")) throw ParseError("missing required key 'scenario'", line_no);
  c.validate();
  return c;
}

} // namespace cev
