#pragma once

#include "cev/errors.hpp"
#include "cev/spaces.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace cev {

/// Which velocity-gradient measure drives the eddy viscosity (and the
/// viscous form): the full gradient or the symmetric strain rate.
enum class GradientMode { gradient, strain };

/// How the filter width delta is chosen.
enum class DeltaPolicy { global_min_edge, local_width };

/// Smagorinsky closure parameters: nu_T = (cs * delta)^2 * |grad w| (or |S~|).
struct ClosureSpec {
  double cs = 0.1;
  double delta = 1.0;  // used when policy == global_min_edge
  GradientMode mode = GradientMode::strain;
  DeltaPolicy policy = DeltaPolicy::global_min_edge;
  double nu = 1e-4;

  void validate() const {
    if (!(cs > 0.0)) throw ConfigError("closure: cs must be > 0");
    if (!(delta > 0.0)) throw ConfigError("closure: delta must be > 0");
    if (!(nu > 0.0)) throw ConfigError("closure: nu must be > 0");
  }
};

/// Magnitude of the velocity gradient in the given mode: Frobenius norm of the
/// gradient, or |S~| = sqrt(2 S:S) with S the symmetric part.
inline double gradient_magnitude(const Grad2& g, GradientMode mode) {
  if (mode == GradientMode::gradient) return std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2] + g[3] * g[3]);
  const double s01 = 0.5 * (g[1] + g[2]);
  return std::sqrt(2.0 * (g[0] * g[0] + 2.0 * s01 * s01 + g[3] * g[3]));
}

/// Pointwise dissipation density matching the viscous form: |grad w|^2 or 2 S:S.
inline double dissipation_density(const Grad2& g, GradientMode mode) {
  if (mode == GradientMode::gradient) return g[0] * g[0] + g[1] * g[1] + g[2] * g[2] + g[3] * g[3];
  const double s01 = 0.5 * (g[1] + g[2]);
  return 2.0 * (g[0] * g[0] + 2.0 * s01 * s01 + g[3] * g[3]);
}

/// Eddy viscosity at one point for filter width `delta`.
inline double eval_nu_t(const ClosureSpec& spec, const Grad2& grad_w, double delta) {
  for (double v : grad_w)
    if (!std::isfinite(v)) throw InvariantError("eval_nu_t: non-finite velocity gradient");
  const double cd = spec.cs * delta;
  return cd * cd * gradient_magnitude(grad_w, spec.mode);
}

inline double eval_nu_t(const ClosureSpec& spec, const Grad2& grad_w) { return eval_nu_t(spec, grad_w, spec.delta); }

/// Correction weight a = sqrt(nu_T / nu).
inline double eval_a(const ClosureSpec& spec, double nu_t) {
  if (nu_t < 0.0) throw InvariantError("eval_a: negative eddy viscosity " + std::to_string(nu_t));
  return std::sqrt(nu_t / spec.nu);
}

/// nu_T and a at every quadrature point, evaluated from one velocity iterate.
struct ClosureField {
  QuadField nu_t;
  QuadField a;
  std::optional<FeFunction> source;  // iterate the field was evaluated from, if any

  static ClosureField zero(std::size_t num_elements) {
    return {QuadField(num_elements, 0.0), QuadField(num_elements, 0.0), std::nullopt};
  }
};

/// Filter width per element under `spec.policy`.
inline std::vector<double> element_deltas(const ClosureSpec& spec, const Mesh& mesh) {
  std::vector<double> d(mesh.num_triangles(), spec.delta);
  if (spec.policy == DeltaPolicy::local_width)
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) d[t] = mesh.local_width(t);
  return d;
}

inline ClosureField closure_field(const ClosureSpec& spec, const FeFunction& w) {
  require_velocity(w, "closure_field");
  spec.validate();
  const SpacePair& sp = *w.space;
  const auto grads = gradients_at_quad(w);
  const auto deltas = element_deltas(spec, sp.mesh());
  ClosureField field = ClosureField::zero(sp.num_elements());
  for (std::size_t t = 0; t < sp.num_elements(); ++t)
    for (int q = 0; q < SpacePair::kQuad; ++q) {
      const std::size_t k = t * SpacePair::kQuad + q;
      const double nt = eval_nu_t(spec, grads[k], deltas[t]);
      field.nu_t[k] = nt;
      field.a[k] = eval_a(spec, nt);
    }
  field.source = w;
  return field;
}

} // namespace cev
