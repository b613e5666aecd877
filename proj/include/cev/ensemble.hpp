#pragma once

#include "cev/calibration.hpp"
#include "cev/diagnostics.hpp"
#include "cev/errors.hpp"
#include "cev/linear_solve.hpp"
#include "cev/stepping.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace cev {

/// Uniform random coefficients on the free velocity dofs, L2-projected onto
/// discretely divergence-free fields: [M B^T; B 0](v, p) = (M z, 0).
inline FeFunction solenoidal_random_field(std::shared_ptr<const SpacePair> sp, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto& mask = sp->dirichlet_mask();
  Eigen::VectorXd z = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sp->num_velocity_dofs()));
  for (Eigen::Index i = 0; i < z.size(); ++i)
    if (!mask[static_cast<std::size_t>(i)]) z[i] = u(rng);
  SaddleSystem sys;
  sys.A = assemble_mass(*sp);
  sys.B = assemble_div(*sp);
  sys.rhs_velocity = sys.A * z;
  sys.dirichlet = mask;
  sys.pressure_weights = pressure_mean_weights(*sp);
  const auto sol = solve_saddle(sys, 1e-12);
  return FeFunction(std::move(sp), SpaceTag::velocity, sol.velocity);
}

/// base + p with p solenoidal, zero on the boundary and
/// ||p|| = amplitude * ||base|| (amplitude itself when base is zero).
inline FeFunction perturb_initial(const FeFunction& base, double amplitude, std::uint64_t seed) {
  require_velocity(base, "perturb_initial");
  if (!(amplitude >= 0.0) || !std::isfinite(amplitude))
    throw ConfigError("perturb_initial: amplitude must be finite and >= 0");
  if (amplitude == 0.0) return base;
  const SparseMatrix M = assemble_mass(*base.space);
  const double base_norm = std::sqrt(base.coeffs.dot(M * base.coeffs));
  const double target = base_norm > 0.0 ? amplitude * base_norm : amplitude;
  FeFunction p = solenoidal_random_field(base.space, seed);
  const double pn = std::sqrt(p.coeffs.dot(M * p.coeffs));
  if (!(pn > 0.0)) throw InvariantError("perturb_initial: projected perturbation vanished");
  return FeFunction(base.space, SpaceTag::velocity, base.coeffs + (target / pn) * p.coeffs);
}

struct EnsembleConfig {
  int members = 2;
  double amplitude = 1e-3;
  std::uint64_t seed = 1;
  Method method = Method::linearly_implicit;
  long steps = 0;
  long snapshot_every = 1;
  unsigned threads = 1;

  void validate() const {
    if (members < 2) throw ConfigError("ensemble: need at least 2 members");
    if (steps < 0) throw ConfigError("ensemble: steps must be >= 0");
    if (snapshot_every < 1) throw ConfigError("ensemble: snapshot interval must be >= 1");
  }
};

struct EnsembleSnapshot {
  long step = 0;
  double t = 0.0;
  EnsembleStatistics stats;
  std::optional<IntensityReport> intensity;  // absent while the mean vanishes
  std::optional<double> variance_residual;   // against the previous snapshot
};

struct EnsembleResult {
  std::vector<EnsembleSnapshot> series;
  std::vector<std::vector<FeFunction>> fields;        // [snapshot][member]
  std::vector<std::vector<DiagnosticsRecord>> records; // [member][step]
};

/// Advance J perturbed copies of w0 independently and collect ensemble
/// statistics every `snapshot_every` steps (and at step 0). Member j starts
/// from perturb_initial(w0, amplitude, seed + j). Members are distributed over
/// `threads` workers; results do not depend on the thread count.
inline EnsembleResult advance_ensemble(std::shared_ptr<const SpacePair> sp, const StepperConfig& cfg,
                                       const EnsembleConfig& ens, const FeFunction& w0,
                                       const std::function<FeFunction(double)>& forcing) {
  ens.validate();
  cfg.validate();
  const auto J = static_cast<std::size_t>(ens.members);
  std::vector<long> snap_steps;
  for (long n = 0; n <= ens.steps; n += ens.snapshot_every) snap_steps.push_back(n);
  if (snap_steps.back() != ens.steps) snap_steps.push_back(ens.steps);

  EnsembleResult res;
  res.fields.assign(snap_steps.size(), std::vector<FeFunction>(J));
  res.records.assign(J, {});
  std::vector<std::exception_ptr> errors(J);
  std::vector<double> snap_t(snap_steps.size(), 0.0);

  auto run_member = [&](std::size_t j) {
    try {
      Stepper stepper(sp, cfg);
      StepperState s = stepper.initial_state(perturb_initial(w0, ens.amplitude, ens.seed + j));
      std::size_t next = 0;
      for (long n = 0;; ++n) {
        if (next < snap_steps.size() && snap_steps[next] == n) {
          res.fields[next][j] = s.current();
          snap_t[next] = s.t;
          ++next;
        }
        if (n == ens.steps) break;
        auto r = stepper.step(ens.method, s, forcing(static_cast<double>(n + 1) * cfg.k));
        res.records[j].push_back(r.record);
        s = std::move(r.state);
      }
    } catch (...) {
      errors[j] = std::current_exception();
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(ens.threads, 1, J);
  if (workers == 1) {
    for (std::size_t j = 0; j < J; ++j) run_member(j);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t j = w; j < J; j += workers) run_member(j);
      });
    for (auto& th : pool) th.join();
  }

  for (std::size_t j = 0; j < J; ++j) {
    if (!errors[j]) continue;
    try {
      std::rethrow_exception(errors[j]);
    } catch (const DivergenceError& e) {
      throw DivergenceError("ensemble member " + std::to_string(j) + ": " + e.what(), e.step());
    } catch (const SolverError& e) {
      throw SolverError("ensemble member " + std::to_string(j) + ": " + e.what(), e.achieved_residual());
    }
  }

  for (std::size_t i = 0; i < snap_steps.size(); ++i) {
    EnsembleSnapshot snap;
    snap.step = snap_steps[i];
    snap.t = snap_t[i];
    snap.stats = ensemble_rs(res.fields[i]);
    if (snap.stats.mean_l2 > 0.0 && snap.stats.mean_grad_l2 > 0.0) snap.intensity = intensities(snap.stats);
    if (i > 0)
      snap.variance_residual =
          variance_equation_residual(res.series.back().stats, snap.stats, snap.t - res.series.back().t, cfg.closure.nu);
    res.series.push_back(snap);
  }
  return res;
}

} // namespace cev
