#pragma once

#include "cev/assembly.hpp"
#include "cev/closures.hpp"
#include "cev/diagnostics.hpp"
#include "cev/errors.hpp"
#include "cev/linear_solve.hpp"
#include "cev/spaces.hpp"

#include <cmath>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace cev {

struct StepperConfig {
  double k = 0.01;     // timestep
  double beta = 0.0;   // correction scale
  ClosureSpec closure;
  double solver_tol = 1e-10;
  bool reuse_factorization = true;  // lagged-LU refinement between steps

  // Spatially varying correction scale: beta_e per element replaces the
  // scalar beta when set.
  std::optional<std::vector<double>> beta_field;

  // Test hooks. A frozen weight replaces a(w) by a constant c (and nu_T by
  // nu c^2); the flags drop the convective or viscous operator entirely.
  std::optional<double> frozen_a;
  bool convection = true;
  bool viscous = true;

  void validate() const {
    if (!(k > 0.0)) throw ConfigError("stepper: timestep must be > 0");
    if (!(beta >= 0.0)) throw ConfigError("stepper: beta must be >= 0");
    if (!(solver_tol > 0.0)) throw ConfigError("stepper: solver tolerance must be > 0");
    if (beta_field)
      for (double b : *beta_field)
        if (!(b >= 0.0) || !std::isfinite(b)) throw ConfigError("stepper: beta field must be finite and >= 0");
    closure.validate();
  }
};

/// Time-level history. Index 0 is the newest level: w[0] = w^n, w[1] = w^{n-1};
/// closure[0] = (nu_T^n, a^n), closure[1] = level n-1, ... (up to 4 levels, so
/// the BDF2 extrapolants a*^{n+1}, a*^n, a*^{n-1} are available).
struct StepperState {
  long n = 0;
  double t = 0.0;
  std::deque<FeFunction> w;
  FeFunction q;
  std::deque<ClosureField> closure;

  const FeFunction& current() const { return w.front(); }
};

struct StepResult {
  StepperState state;
  DiagnosticsRecord record;
  std::optional<FeFunction> w_temp;  // Method 2 Step 1 iterate
};

/// phi* = 2 phi^n - phi^{n-1}, pointwise on the quadrature layout.
inline QuadField extrapolate(const QuadField& newer, const QuadField& older) {
  if (!newer.same_layout(older)) throw std::invalid_argument("extrapolate: layout mismatch");
  QuadField out(newer.num_elements, 0.0);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = 2.0 * newer[k] - older[k];
  return out;
}

inline FeFunction extrapolate(const FeFunction& newer, const FeFunction& older) {
  return FeFunction(newer.space, newer.tag, 2.0 * newer.coeffs - older.coeffs);
}

/// Linearly implicit steppers for the corrected eddy-viscosity model on a
/// fixed Taylor-Hood space. Owns the constant operators (mass, divergence)
/// and a solver that keeps its symbolic factorization between steps.
class Stepper {
public:
  static constexpr std::size_t kHistory = 4;

  Stepper(std::shared_ptr<const SpacePair> space, StepperConfig cfg)
      : space_(std::move(space)), cfg_(std::move(cfg)), solver_(cfg_.solver_tol, cfg_.reuse_factorization),
        projection_solver_(cfg_.solver_tol, cfg_.reuse_factorization) {
    cfg_.validate();
    if (cfg_.beta_field && cfg_.beta_field->size() != space_->num_elements())
      throw ConfigError("stepper: beta field needs one value per element");
    M_ = assemble_mass(*space_);
    B_ = assemble_div(*space_);
    mean_ = pressure_mean_weights(*space_);
  }

  const StepperConfig& config() const { return cfg_; }
  const SpacePair& space() const { return *space_; }
  std::shared_ptr<const SpacePair> space_ptr() const { return space_; }
  const SparseMatrix& mass() const { return M_; }
  const SparseMatrix& divergence() const { return B_; }

  ClosureField closure_of(const FeFunction& w) const {
    if (cfg_.frozen_a) {
      const double c = *cfg_.frozen_a;
      ClosureField f{QuadField(space_->num_elements(), cfg_.closure.nu * c * c), QuadField(space_->num_elements(), c),
                     w};
      return f;
    }
    return closure_field(cfg_.closure, w);
  }

  /// State at n = 0 with a^{-1} = a^0 = a(w^0).
  StepperState initial_state(const FeFunction& w0) const {
    require_velocity(w0, "initial_state");
    StepperState s;
    s.n = 0;
    s.t = 0.0;
    s.w.push_back(w0);
    s.q = FeFunction::zero(space_, SpaceTag::pressure);
    const ClosureField c0 = closure_of(w0);
    s.closure.push_back(c0);
    s.closure.push_back(c0);
    return s;
  }

  /// Method 1: backward Euler with lagged convection, viscosity and weights.
  StepResult method1_step(const StepperState& s, const FeFunction& f_next) {
    return backward_euler_step(s, f_next, cfg_.beta, Method::linearly_implicit);
  }

  /// Method 2: legacy EV backward-Euler solve followed by the weighted
  /// projection [M + beta^2 W(a^n,a^n)] w + B^T q = M w_temp + beta^2 W(a^n,a^{n-1}) w^n.
  StepResult method2_step(const StepperState& s, const FeFunction& f_next) {
    StepResult step1 = backward_euler_step(s, f_next, 0.0, Method::linearly_implicit, /*finalize=*/false);
    const FeFunction& w_temp = step1.state.w.front();
    const FeFunction& wn = s.w.front();
    const QuadField an = scaled(s.closure[0].a);
    const QuadField aprev = scaled(s.closure[1].a);
    const double b2 = effective_beta(cfg_.beta) * effective_beta(cfg_.beta);

    FeFunction w_next = w_temp;
    FeFunction q_next = step1.state.q;
    if (b2 > 0.0) {
      SaddleSystem sys;
      sys.A = M_ + b2 * assemble_weighted_mass(*space_, an, an);
      sys.B = B_;
      sys.rhs_velocity = M_ * w_temp.coeffs + b2 * (assemble_weighted_mass(*space_, an, aprev) * wn.coeffs);
      sys.dirichlet = space_->dirichlet_mask();
      sys.pressure_weights = mean_;
      const auto sol = solve_checked(projection_solver_, sys, s.n + 1);
      w_next = FeFunction(space_, SpaceTag::velocity, sol.velocity);
      q_next = FeFunction(space_, SpaceTag::pressure, sol.pressure);
    }

    StepResult out;
    out.w_temp = w_temp;
    out.state = advance(s, std::move(w_next), std::move(q_next));
    BudgetInputs in = budget_base(Method::modular, s);
    in.beta = effective_beta(cfg_.beta);
    in.w_new = &out.state.w.front();
    in.w_old = &wn;
    in.w_temp = &*out.w_temp;
    in.forcing = &f_next;
    in.a_new = &an;
    in.a_old = &aprev;
    in.nu_t = &s.closure[0].nu_t;
    out.record = compute_budget(in);
    return out;
  }

  /// Method 3: BDF2 in time with extrapolated convection, viscosity and weights.
  /// Requires n >= 3 (history from startup_method3).
  StepResult method3_step(const StepperState& s, const FeFunction& f_next) {
    if (s.n < 3 || s.w.size() < 2 || s.closure.size() < 4)
      throw std::logic_error("method3_step: needs n >= 3 with startup history (n = " + std::to_string(s.n) + ")");
    const double k = cfg_.k, b2 = effective_beta(cfg_.beta) * effective_beta(cfg_.beta);
    const FeFunction& wn = s.w[0];
    const FeFunction& wm = s.w[1];
    const QuadField a_next = scaled(extrapolate(s.closure[0].a, s.closure[1].a));  // a*^{n+1}
    const QuadField a_cur = scaled(extrapolate(s.closure[1].a, s.closure[2].a));   // a*^n
    const QuadField a_prev = scaled(extrapolate(s.closure[2].a, s.closure[3].a));  // a*^{n-1}
    QuadField nut = extrapolate(s.closure[0].nu_t, s.closure[1].nu_t);
    for (auto& v : nut.values) v = std::max(v, 0.0);

    SaddleSystem sys;
    sys.A = (1.5 / k) * M_;
    sys.rhs_velocity = M_ * ((2.0 / k) * wn.coeffs - (0.5 / k) * wm.coeffs + f_next.coeffs);
    if (b2 > 0.0) {
      sys.A += (1.5 * b2 / k) * assemble_weighted_mass(*space_, a_next, a_next);
      sys.rhs_velocity += (2.0 * b2 / k) * (assemble_weighted_mass(*space_, a_next, a_cur) * wn.coeffs) -
                          (0.5 * b2 / k) * (assemble_weighted_mass(*space_, a_next, a_prev) * wm.coeffs);
    }
    if (cfg_.convection) sys.A += assemble_convection_skew(*space_, extrapolate(wn, wm));
    if (cfg_.viscous) sys.A += assemble_total_stiffness(*space_, cfg_.closure.nu, nut, cfg_.closure.mode);
    sys.B = B_;
    sys.dirichlet = space_->dirichlet_mask();
    sys.pressure_weights = mean_;
    const auto sol = solve_checked(solver_, sys, s.n + 1);

    StepResult out;
    out.state = advance(s, FeFunction(space_, SpaceTag::velocity, sol.velocity),
                        FeFunction(space_, SpaceTag::pressure, sol.pressure));
    BudgetInputs in = budget_base(Method::bdf2_ab2, s);
    in.beta = effective_beta(cfg_.beta);
    in.w_new = &out.state.w.front();
    in.w_old = &wn;
    in.w_older = &wm;
    in.forcing = &f_next;
    in.a_new = &a_next;
    in.a_old = &a_cur;
    in.a_older = &a_prev;
    in.nu_t = &nut;
    out.record = compute_budget(in);
    return out;
  }

  /// Dispatch by method; Method 3 falls back to Method 1 while n < 3.
  StepResult step(Method m, const StepperState& s, const FeFunction& f_next) {
    switch (m) {
    case Method::linearly_implicit: return method1_step(s, f_next);
    case Method::modular: return method2_step(s, f_next);
    case Method::bdf2_ab2: return s.n < 3 ? method1_step(s, f_next) : method3_step(s, f_next);
    }
    throw std::logic_error("unknown method");
  }

  /// w^1..w^3 by Method 1 with the same k; returns the state at n = 3.
  StepperState startup_method3(const FeFunction& w0, const std::function<FeFunction(double)>& forcing,
                               std::vector<DiagnosticsRecord>* records = nullptr) {
    StepperState s = initial_state(w0);
    for (int i = 0; i < 3; ++i) {
      auto r = method1_step(s, forcing(static_cast<double>(s.n + 1) * cfg_.k));
      if (records) records->push_back(r.record);
      s = std::move(r.state);
    }
    return s;
  }

private:
  // With a beta field the element values are folded into the weights and the
  // scalar factor becomes 1 (or 0 when the correction is switched off).
  double effective_beta(double beta) const {
    if (!cfg_.beta_field) return beta;
    return beta > 0.0 ? 1.0 : 0.0;
  }

  QuadField scaled(QuadField a) const {
    if (!cfg_.beta_field) return a;
    for (std::size_t t = 0; t < a.num_elements; ++t)
      for (int q = 0; q < SpacePair::kQuad; ++q) a[t * SpacePair::kQuad + q] *= (*cfg_.beta_field)[t];
    return a;
  }

  BudgetInputs budget_base(Method m, const StepperState& s) const {
    BudgetInputs in;
    in.method = m;
    in.step = s.n + 1;
    in.t = static_cast<double>(s.n + 1) * cfg_.k;
    in.k = cfg_.k;
    in.beta = cfg_.beta;
    in.nu = cfg_.closure.nu;
    in.mode = cfg_.closure.mode;
    in.viscous = cfg_.viscous;
    return in;
  }

  static SaddleSolution solve_checked(SaddleSolver& solver, const SaddleSystem& sys, long step) {
    SaddleSolution sol = solver.solve(sys);
    if (!sol.velocity.allFinite() || !sol.pressure.allFinite())
      throw DivergenceError("non-finite solution at step " + std::to_string(step), step);
    return sol;
  }

  StepperState advance(const StepperState& s, FeFunction w_next, FeFunction q_next) const {
    StepperState out;
    out.n = s.n + 1;
    out.t = static_cast<double>(s.n + 1) * cfg_.k;
    out.closure = s.closure;
    out.closure.push_front(closure_of(w_next));
    while (out.closure.size() > kHistory) out.closure.pop_back();
    out.w = s.w;
    out.w.push_front(std::move(w_next));
    while (out.w.size() > 2) out.w.pop_back();
    out.q = std::move(q_next);
    return out;
  }

  StepResult backward_euler_step(const StepperState& s, const FeFunction& f_next, double beta, Method tag,
                                 bool finalize = true) {
    if (s.w.empty() || s.closure.size() < 2) throw std::logic_error("backward_euler_step: incomplete state");
    require_velocity(f_next, "forcing");
    const double k = cfg_.k, b2 = effective_beta(beta) * effective_beta(beta);
    const FeFunction& wn = s.w.front();
    const QuadField an = scaled(s.closure[0].a);
    const QuadField aprev = scaled(s.closure[1].a);

    SaddleSystem sys;
    sys.A = (1.0 / k) * M_;
    sys.rhs_velocity = M_ * (f_next.coeffs + (1.0 / k) * wn.coeffs);
    if (b2 > 0.0) {
      sys.A += (b2 / k) * assemble_weighted_mass(*space_, an, an);
      sys.rhs_velocity += (b2 / k) * (assemble_weighted_mass(*space_, an, aprev) * wn.coeffs);
    }
    if (cfg_.convection) sys.A += assemble_convection_skew(*space_, wn);
    if (cfg_.viscous) sys.A += assemble_total_stiffness(*space_, cfg_.closure.nu, s.closure[0].nu_t, cfg_.closure.mode);
    sys.B = B_;
    sys.dirichlet = space_->dirichlet_mask();
    sys.pressure_weights = mean_;
    const auto sol = solve_checked(solver_, sys, s.n + 1);

    StepResult out;
    FeFunction w_next(space_, SpaceTag::velocity, sol.velocity);
    FeFunction q_next(space_, SpaceTag::pressure, sol.pressure);
    if (!finalize) {
      out.state.w.push_front(std::move(w_next));
      out.state.q = std::move(q_next);
      return out;
    }
    out.state = advance(s, std::move(w_next), std::move(q_next));
    BudgetInputs in = budget_base(tag, s);
    in.beta = effective_beta(beta);
    in.w_new = &out.state.w.front();
    in.w_old = &wn;
    in.forcing = &f_next;
    in.a_new = &an;
    in.a_old = &aprev;
    in.nu_t = &s.closure[0].nu_t;
    out.record = compute_budget(in);
    return out;
  }

  std::shared_ptr<const SpacePair> space_;
  StepperConfig cfg_;
  SaddleSolver solver_;
  SaddleSolver projection_solver_;  // Method 2, Step 2
  SparseMatrix M_;
  SparseMatrix B_;
  Eigen::VectorXd mean_;
};

} // namespace cev
