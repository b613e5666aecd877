#pragma once

#include "cev/calibration.hpp"
#include "cev/config.hpp"
#include "cev/diagnostics.hpp"
#include "cev/ensemble.hpp"
#include "cev/io.hpp"
#include "cev/scenarios.hpp"
#include "cev/stepping.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#ifndef CEV_DATA_DIR
#define CEV_DATA_DIR "data"
#endif

namespace cev {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitAudit = 2;
inline constexpr int kExitDivergence = 3;

struct RunOptions {
  bool quiet = false;
  bool fine_mesh = false;  // offset_circles: fine mesh instead of the desk mesh
  bool strict = false;      // or'ed with the config's `strict`
  std::string base_dir;     // relative paths in the config resolve against this
  std::ostream* log = nullptr;  // progress lines; null = silent
};

struct BetaReport {
  BetaMode mode = BetaMode::fixed;
  double beta = 0.0;  // scalar value, or the minimum of the local field
  double beta_max = 0.0;
  std::optional<K41Estimate> k41;
};

/// A scenario set up on its mesh, ready to be stepped.
struct Problem {
  Scenario scenario = Scenario::offset_circles;
  std::string mesh_label;
  std::shared_ptr<const SpacePair> space;
  StepperConfig stepper;
  Method method = Method::linearly_implicit;
  double T = 0.0;
  long steps = 0;
  FeFunction w0;
  std::function<FeFunction(double)> forcing;  // f sampled at a time level
  std::optional<ManufacturedVortex> exact;
  BetaReport beta;
};

struct RunOutcome {
  int exit_code = kExitOk;
  std::string failure;
  std::vector<DiagnosticsRecord> records;
  AuditReport audit;
  std::optional<TimeAverageReport> averages;
  std::vector<double> l2_errors;  // taylor_green: ||w^n - u(t_n)|| per step
  std::vector<EnsembleSnapshot> ensemble;
  std::optional<BetaBounds> bounds;
  std::size_t velocity_dofs = 0;
  std::size_t pressure_dofs = 0;
  std::string report;
};

namespace detail {

inline std::string resolve(const std::string& path, const std::string& base) {
  if (path.empty() || base.empty() || std::filesystem::path(path).is_absolute()) return path;
  return (std::filesystem::path(base) / path).string();
}

inline std::pair<Mesh, std::string> load_run_mesh(const RunConfig& cfg, const RunOptions& opt,
                                                  const std::string& default_nodes) {
  const std::string nodes = cfg.mesh_nodes.empty() ? default_nodes : cfg.mesh_nodes;
  const std::string prefix = "unit_square:";
  if (nodes.rfind(prefix, 0) == 0) {
    const std::string n = nodes.substr(prefix.size());
    char* end = nullptr;
    const long cells = std::strtol(n.c_str(), &end, 10);
    if (n.empty() || *end != '\0' || cells < 1) throw ConfigError("mesh_nodes: bad unit_square size '" + n + "'");
    return {unit_square_mesh(static_cast<int>(cells)), nodes};
  }
  std::string elements = cfg.mesh_elements;
  if (cfg.mesh_nodes.empty()) elements = nodes.substr(0, nodes.size() - 5) + ".ele";
  const std::string np = cfg.mesh_nodes.empty() ? nodes : resolve(nodes, opt.base_dir);
  const std::string ep = cfg.mesh_nodes.empty() ? elements : resolve(elements, opt.base_dir);
  return {load_mesh_files(np, ep), np};
}

inline long step_count(double T, double dt) {
  const double ratio = T / dt;
  const long steps = std::lround(ratio);
  if (steps < 1 || std::abs(ratio - static_cast<double>(steps)) > 1e-9 * ratio)
    throw ConfigError("T must be a positive multiple of dt");
  return steps;
}

inline void resolve_beta(const RunConfig& cfg, double scenario_beta, Problem& p) {
  if (cfg.beta && cfg.beta_mode != BetaMode::fixed) throw ConfigError("beta is set but beta_mode is not 'fixed'");
  BetaReport& b = p.beta;
  b.mode = cfg.beta_mode;
  switch (cfg.beta_mode) {
  case BetaMode::fixed: b.beta = cfg.beta.value_or(scenario_beta); break;
  case BetaMode::default_global: b.beta = beta_default_global(p.space->mesh()); break;
  case BetaMode::default_local: {
    auto field = beta_default_local(p.space->mesh());
    b.beta = *std::min_element(field.begin(), field.end());
    b.beta_max = *std::max_element(field.begin(), field.end());
    p.stepper.beta_field = std::move(field);
    p.stepper.beta = 1.0;
    return;
  }
  case BetaMode::k41_3d:
    b.k41 = beta_k41_3d(cfg.beta_args.at(0), cfg.beta_args.at(1));
    b.beta = b.k41->beta;
    break;
  case BetaMode::two_d: b.beta = beta_2d(cfg.beta_args.at(0), cfg.beta_args.at(1)); break;
  }
  b.beta_max = b.beta;
  p.stepper.beta = b.beta;
}

inline void common_setup(const RunConfig& cfg, Problem& p, double nu, double dt, double T, double beta) {
  p.method = cfg.method;
  p.T = cfg.T.value_or(T);
  p.stepper.k = cfg.dt.value_or(dt);
  if (!(p.stepper.k > 0.0)) throw ConfigError("dt must be > 0");
  if (!(p.T >= p.stepper.k)) throw ConfigError("T must be >= dt");
  p.steps = step_count(p.T, p.stepper.k);
  p.stepper.solver_tol = cfg.solver_tol;
  p.stepper.closure.nu = cfg.nu.value_or(nu);
  p.stepper.closure.cs = cfg.cs;
  p.stepper.closure.mode = cfg.closure_mode;
  p.stepper.closure.policy = cfg.delta_mode;
  p.stepper.closure.delta = min_edge(p.space->mesh());
  resolve_beta(cfg, beta, p);
  p.stepper.validate();
}

} // namespace detail

/// Flow between offset circles driven by a rotational body force, starting
/// from rest. Defaults: nu = 1e-4, dt = 0.01, T = 10, beta = 8e-5.
inline Problem scenario_offset_circles(const RunConfig& cfg, const RunOptions& opt = {}) {
  Problem p;
  p.scenario = Scenario::offset_circles;
  const std::string def = std::string(CEV_DATA_DIR) + (opt.fine_mesh ? "/offset_circles_fine.node" : "/offset_circles_desk.node");
  auto [mesh, label] = detail::load_run_mesh(cfg, opt, def);
  p.mesh_label = label;
  p.space = std::make_shared<SpacePair>(std::make_shared<Mesh>(std::move(mesh)));
  detail::common_setup(cfg, p, 1e-4, 0.01, 10.0, 8e-5);
  p.w0 = FeFunction::zero(p.space, SpaceTag::velocity);
  const FeFunction f = interpolate_velocity(p.space, offset_circles_forcing);
  p.forcing = [f](double) { return f; };
  return p;
}

/// Manufactured vortex on the unit square with the eddy viscosity switched
/// off (frozen weight 0), so the exact solution is known for every method.
/// Defaults: unit_square:16, nu = 1e-2, dt = 1/32, T = 1.
inline Problem scenario_taylor_green(const RunConfig& cfg, const RunOptions& opt = {}) {
  Problem p;
  p.scenario = Scenario::taylor_green;
  auto [mesh, label] = detail::load_run_mesh(cfg, opt, "unit_square:16");
  p.mesh_label = label;
  p.space = std::make_shared<SpacePair>(std::make_shared<Mesh>(std::move(mesh)));
  detail::common_setup(cfg, p, 1e-2, 1.0 / 32.0, 1.0, 0.0);
  p.stepper.frozen_a = 0.0;
  ManufacturedVortex mv;
  mv.nu = p.stepper.closure.nu;
  mv.beta = 0.0;
  mv.c = 0.0;
  mv.omega = 3.0;
  p.exact = mv;
  p.w0 = interpolate_velocity(p.space, [mv](double x, double y) { return mv.exact(0.0, x, y); });
  auto sp = p.space;
  p.forcing = [sp, mv](double t) {
    return interpolate_velocity(sp, [&mv, t](double x, double y) { return mv.forcing(t, x, y); });
  };
  return p;
}

/// No forcing and no initial flow: every diagnostic stays zero.
inline Problem scenario_quiescent(const RunConfig& cfg, const RunOptions& opt = {}) {
  Problem p;
  p.scenario = Scenario::quiescent;
  auto [mesh, label] = detail::load_run_mesh(cfg, opt, "unit_square:8");
  p.mesh_label = label;
  p.space = std::make_shared<SpacePair>(std::make_shared<Mesh>(std::move(mesh)));
  detail::common_setup(cfg, p, 1e-3, 0.01, 0.1, 0.0);
  p.w0 = FeFunction::zero(p.space, SpaceTag::velocity);
  const FeFunction f = FeFunction::zero(p.space, SpaceTag::velocity);
  p.forcing = [f](double) { return f; };
  return p;
}

inline Problem setup_problem(const RunConfig& cfg, const RunOptions& opt = {}) {
  switch (cfg.scenario) {
  case Scenario::offset_circles: return scenario_offset_circles(cfg, opt);
  case Scenario::taylor_green: return scenario_taylor_green(cfg, opt);
  case Scenario::quiescent: return scenario_quiescent(cfg, opt);
  }
  throw ConfigError("unknown scenario");
}

namespace detail {

inline std::string report_path(const std::string& csv) {
  std::filesystem::path p(csv);
  p.replace_extension(".report.txt");
  return p.string();
}

inline std::string sibling_path(const std::string& csv, const std::string& suffix) {
  std::filesystem::path p(csv);
  const std::string stem = p.stem().string();
  return (p.parent_path() / (stem + suffix)).string();
}

inline void check_finite(const DiagnosticsRecord& r) {
  for (double v : {r.MD, r.TMD, r.EVD, r.VD, r.KE, r.CKE, r.residual})
    if (!std::isfinite(v)) throw DivergenceError("non-finite diagnostics", r.step);
}

inline void write_fields(const std::string& dir, const std::string& name, long step, double t, const FeFunction& w) {
  std::ostringstream s;
  write_snapshot(s, step, t, {&w});
  write_text_file((std::filesystem::path(dir) / (name + "_" + std::to_string(step) + ".txt")).string(), s.str());
}

inline const char* beta_mode_name(BetaMode m) {
  switch (m) {
  case BetaMode::fixed: return "fixed";
  case BetaMode::default_global: return "default-global";
  case BetaMode::default_local: return "default-local";
  case BetaMode::k41_3d: return "k41-3d";
  case BetaMode::two_d: return "2d";
  }
  return "?";
}

inline std::string build_report(const Problem& p, const RunConfig& cfg, const RunOutcome& o) {
  std::ostringstream r;
  r << std::setprecision(6);
  const Mesh& mesh = p.space->mesh();
  r << "scenario        " << scenario_name(p.scenario) << "\n";
  r << "mesh            " << p.mesh_label << " (" << mesh.num_vertices() << " vertices, " << mesh.num_triangles()
    << " triangles, min edge " << min_edge(mesh) << ")\n";
  r << "dofs            velocity " << o.velocity_dofs << ", pressure " << o.pressure_dofs << "\n";
  r << "method          " << method_number(p.method) << ", k = " << p.stepper.k << ", T = " << p.T << ", "
    << o.records.size() << "/" << p.steps << " steps\n";
  r << "closure         nu = " << p.stepper.closure.nu << ", cs = " << p.stepper.closure.cs << ", "
    << (p.stepper.closure.mode == GradientMode::strain ? "strain" : "gradient") << ", delta "
    << (p.stepper.closure.policy == DeltaPolicy::global_min_edge ? "global" : "local") << "\n";
  r << "beta            " << beta_mode_name(p.beta.mode) << ": ";
  if (p.beta.mode == BetaMode::default_local) r << "min " << p.beta.beta << ", max " << p.beta.beta_max << "\n";
  else r << p.beta.beta << "\n";
  if (p.beta.k41) {
    r << "  k41           I(u) " << p.beta.k41->I_u << ", I(grad u) " << p.beta.k41->I_grad_u << ", eta/L "
      << p.beta.k41->eta_over_L << ", sqrt(I(u)/I(grad u)) " << p.beta.k41->intensity_ratio << "\n";
    for (const auto& w : p.beta.k41->warnings) r << "  warning       " << w << "\n";
  }
  if (p.scenario == Scenario::taylor_green) r << "  note          eddy viscosity and correction frozen at zero\n";
  if (o.averages) {
    const auto& a = *o.averages;
    r << "MD average      " << a.mean_MD << " over (" << a.t_begin << ", " << a.t_end << "], min " << a.min_MD
      << ", negative fraction " << a.negative_fraction << ", sign changes " << a.sign_changes << "\n";
  }
  if (!o.records.empty()) {
    r << "audit           " << (o.audit.passed ? "passed" : "FAILED") << " (tol " << cfg.audit_tol
      << "): max step residual " << o.audit.max_step_residual << ", max MD identity residual "
      << o.audit.max_identity_residual << ", telescoped " << o.audit.telescoped_residual << ", flagged steps "
      << o.audit.flagged_steps.size() << "\n";
  }
  if (!o.l2_errors.empty())
    r << "L2 error        final " << o.l2_errors.back() << ", max "
      << *std::max_element(o.l2_errors.begin(), o.l2_errors.end()) << "\n";
  if (!o.ensemble.empty()) {
    const auto& last = o.ensemble.back();
    r << "ensemble        J = " << cfg.ens_J << ", RS(T) " << last.stats.RS << ", fluctuation energy "
      << last.stats.fluct_energy << "\n";
    if (last.intensity)
      r << "  intensities   I(u) " << last.intensity->I_u << ", I(grad u) " << last.intensity->I_grad_u
        << ", beta_h " << last.intensity->beta << ", L " << last.intensity->L << "\n";
    if (o.bounds)
      r << "  bracket       " << o.bounds->lower << " <= beta_h <= " << o.bounds->upper << " : "
        << (o.bounds->within ? "inside" : "outside") << " (C_PF " << o.bounds->constants.C_PF << ", C_INV "
        << o.bounds->constants.C_INV << ")\n";
  }
  if (!o.failure.empty()) r << "failure         " << o.failure << "\n";
  return r.str();
}

} // namespace detail

/// Set up the scenario, step it, audit the energy budget and write the
/// artifacts named in the config. Exit codes: 0 ok, 2 audit failure in strict
/// mode, 3 divergence or solver breakdown. Configuration problems throw.
inline RunOutcome run(const RunConfig& cfg, const RunOptions& opt = {}) {
  cfg.validate();
  Problem p = setup_problem(cfg, opt);
  RunOutcome o;
  o.velocity_dofs = p.space->num_velocity_dofs();
  o.pressure_dofs = p.space->num_pressure_dofs();
  const bool strict = cfg.strict || opt.strict;

  const std::string csv_path = detail::resolve(cfg.out_csv, opt.base_dir);
  const std::string fields_dir = detail::resolve(cfg.out_fields, opt.base_dir);
  std::ofstream csv;
  if (!csv_path.empty()) {
    csv.open(csv_path, std::ios::binary);
    if (!csv) throw ConfigError("out_csv: cannot write '" + csv_path + "'");
  }
  if (!fields_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(fields_dir, ec);
    if (ec) throw ConfigError("out_fields: cannot create '" + fields_dir + "'");
  }
  const long every = cfg.snapshot_every > 0 ? cfg.snapshot_every : p.steps;
  auto progress = [&](long n) {
    if (opt.log && !opt.quiet && (n == p.steps || n % std::max<long>(1, p.steps / 10) == 0))
      *opt.log << "step " << n << "/" << p.steps << "  t = " << n * p.stepper.k << "\n";
  };

  try {
    if (cfg.ens_J >= 2) {
      EnsembleConfig ens;
      ens.members = cfg.ens_J;
      ens.amplitude = cfg.ens_amplitude;
      ens.seed = cfg.ens_seed;
      ens.method = p.method;
      ens.steps = p.steps;
      ens.snapshot_every = every;
      ens.threads = std::max(1u, std::thread::hardware_concurrency());
      EnsembleResult res = advance_ensemble(p.space, p.stepper, ens, p.w0, p.forcing);
      o.records = res.records.front();
      o.audit = audit_energy_equality(o.records, p.method, cfg.audit_tol);
      for (std::size_t j = 1; j < res.records.size(); ++j) {
        const AuditReport a = audit_energy_equality(res.records[j], p.method, cfg.audit_tol);
        o.audit.passed = o.audit.passed && a.passed;
        o.audit.max_step_residual = std::max(o.audit.max_step_residual, a.max_step_residual);
        o.audit.max_identity_residual = std::max(o.audit.max_identity_residual, a.max_identity_residual);
        o.audit.telescoped_residual = std::max(o.audit.telescoped_residual, a.telescoped_residual);
        o.audit.flagged_steps.insert(o.audit.flagged_steps.end(), a.flagged_steps.begin(), a.flagged_steps.end());
      }
      o.ensemble = res.series;
      if (o.ensemble.back().intensity) o.bounds = beta_bounds(res.fields.back());
      if (!fields_dir.empty())
        for (std::size_t i = 0; i < res.fields.size(); ++i)
          for (std::size_t j = 0; j < res.fields[i].size(); ++j)
            detail::write_fields(fields_dir, "member" + std::to_string(j), res.series[i].step, res.series[i].t,
                                 res.fields[i][j]);
      if (!csv_path.empty()) {
        std::ostringstream e;
        e << "t,RS,fluct_energy,I_u,I_grad_u,beta_h,variance_residual\n" << std::setprecision(17);
        const double nan = std::numeric_limits<double>::quiet_NaN();
        for (const auto& s : res.series)
          e << s.t << ',' << s.stats.RS << ',' << s.stats.fluct_energy << ',' << (s.intensity ? s.intensity->I_u : nan)
            << ',' << (s.intensity ? s.intensity->I_grad_u : nan) << ',' << (s.intensity ? s.intensity->beta : nan)
            << ',' << s.variance_residual.value_or(nan) << '\n';
        write_text_file(detail::sibling_path(csv_path, "_ensemble.csv"), e.str());
      }
      for (const auto& r : o.records) detail::check_finite(r);
    } else {
      Stepper stepper(p.space, p.stepper);
      StepperState s = stepper.initial_state(p.w0);
      if (!fields_dir.empty()) detail::write_fields(fields_dir, "velocity", 0, 0.0, s.current());
      for (long n = 1; n <= p.steps; ++n) {
        auto r = stepper.step(p.method, s, p.forcing(static_cast<double>(n) * p.stepper.k));
        detail::check_finite(r.record);
        o.records.push_back(r.record);
        s = std::move(r.state);
        if (p.exact) {
          const ManufacturedVortex mv = *p.exact;
          const double t = s.t;
          o.l2_errors.push_back(l2_error(s.current(), [&](double x, double y) { return mv.exact(t, x, y); }));
        }
        if (!fields_dir.empty() && (n % every == 0 || n == p.steps))
          detail::write_fields(fields_dir, "velocity", n, s.t, s.current());
        progress(n);
      }
      o.audit = audit_energy_equality(o.records, p.method, cfg.audit_tol);
    }
    if (!o.records.empty()) o.averages = time_average(o.records);
    if (!o.audit.passed && strict) {
      o.exit_code = kExitAudit;
      o.failure = "energy audit failed at " + std::to_string(o.audit.flagged_steps.size()) + " step(s)";
    }
  } catch (const DivergenceError& e) {
    o.exit_code = kExitDivergence;
    o.failure = scenario_name(p.scenario) + ": diverged at step " + std::to_string(e.step()) + " (t = " +
                std::to_string(e.step() * p.stepper.k) + "): " + e.what();
  } catch (const SolverError& e) {
    o.exit_code = kExitDivergence;
    o.failure = scenario_name(p.scenario) + ": solver failure after step " + std::to_string(o.records.size()) +
                " (t = " + std::to_string(o.records.size() * p.stepper.k) + "): " + e.what();
  }

  if (csv) {
    write_diagnostics_csv(csv, o.records);
    csv.close();
  }
  o.report = detail::build_report(p, cfg, o);
  if (!csv_path.empty()) write_text_file(detail::report_path(csv_path), o.report);
  return o;
}

} // namespace cev
