#pragma once

#include "cev/errors.hpp"
#include "cev/mesh.hpp"
#include "cev/spaces.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace cev {

/// Space-time vector field f(t, x, y).
using TimeField = std::function<std::array<double, 2>(double t, double x, double y)>;

/// Flow between a unit circle and a circle of radius 0.1 centred at (1/2, 0),
/// driven by a rotational body force that vanishes on the outer circle.
inline std::array<double, 2> offset_circles_forcing(double x, double y) {
  const double r = 1.0 - x * x - y * y;
  return {-4.0 * y * r, 4.0 * x * r};
}

/// Manufactured vortex on the unit square vanishing on the boundary:
///   u = g(t) Phi,  Phi = (pi sin^2(pi x) sin(2 pi y), -pi sin(2 pi x) sin^2(pi y)),
/// the curl of sin^2(pi x) sin^2(pi y), and g(t) = cos(omega t).
/// With the correction weight frozen at a constant c (so nu_T = nu c^2) the
/// model reduces to (1 + beta^2 c^2) u_t + u.grad u - nu (1 + c^2) lap u +
/// grad p = f, and `forcing` returns the f that makes u exact with p = 0.
struct ManufacturedVortex {
  double nu = 1e-2;
  double beta = 0.0;
  double c = 0.0;
  double omega = 1.0;

  double g(double t) const { return std::cos(omega * t); }
  double dg(double t) const { return -omega * std::sin(omega * t); }

  static std::array<double, 2> phi(double x, double y) {
    const double sx = std::sin(kPi * x), sy = std::sin(kPi * y);
    return {kPi * sx * sx * std::sin(2 * kPi * y), -kPi * std::sin(2 * kPi * x) * sy * sy};
  }

  // row-major gradient {d1/dx, d1/dy, d2/dx, d2/dy}
  static std::array<double, 4> grad_phi(double x, double y) {
    const double sx = std::sin(kPi * x), sy = std::sin(kPi * y);
    const double s2x = std::sin(2 * kPi * x), s2y = std::sin(2 * kPi * y);
    const double c2x = std::cos(2 * kPi * x), c2y = std::cos(2 * kPi * y);
    const double p2 = kPi * kPi;
    return {p2 * s2x * s2y, 2 * p2 * sx * sx * c2y, -2 * p2 * c2x * sy * sy, -p2 * s2x * s2y};
  }

  static std::array<double, 2> lap_phi(double x, double y) {
    const double sx = std::sin(kPi * x), sy = std::sin(kPi * y);
    const double p3 = kPi * kPi * kPi;
    return {2 * p3 * std::sin(2 * kPi * y) * (1 - 4 * sx * sx), 2 * p3 * std::sin(2 * kPi * x) * (4 * sy * sy - 1)};
  }

  std::array<double, 2> exact(double t, double x, double y) const {
    const auto p = phi(x, y);
    return {g(t) * p[0], g(t) * p[1]};
  }

  std::array<double, 2> forcing(double t, double x, double y) const {
    const auto p = phi(x, y);
    const auto G = grad_phi(x, y);
    const auto L = lap_phi(x, y);
    const double m = 1.0 + beta * beta * c * c, nu_eff = nu * (1.0 + c * c);
    const double gt = g(t), dgt = dg(t);
    const double conv0 = p[0] * G[0] + p[1] * G[1], conv1 = p[0] * G[2] + p[1] * G[3];
    return {m * dgt * p[0] + gt * gt * conv0 - nu_eff * gt * L[0], m * dgt * p[1] + gt * gt * conv1 - nu_eff * gt * L[1]};
  }

  static constexpr double kPi = 3.14159265358979323846;
};

/// L2 distance between a discrete velocity and an exact field, by the space's
/// quadrature rule.
inline double l2_error(const FeFunction& w, const std::function<std::array<double, 2>(double, double)>& exact) {
  const auto vals = values_at_quad(w);
  const SpacePair& sp = *w.space;
  double s = 0.0;
  for (std::size_t k = 0; k < vals.size(); ++k) {
    const auto e = exact(sp.quad_point(k).x, sp.quad_point(k).y);
    const double d0 = vals[k][0] - e[0], d1 = vals[k][1] - e[1];
    s += sp.jxw(k) * (d0 * d0 + d1 * d1);
  }
  return std::sqrt(s);
}

} // namespace cev
