#pragma once

#include "cev/closures.hpp"
#include "cev/errors.hpp"
#include "cev/spaces.hpp"

#include <Eigen/Sparse>

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace cev {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplets = std::vector<Eigen::Triplet<double>>;

namespace detail {

// Scatter a 6x6 scalar element block into both velocity components.
inline void scatter_diagonal_blocks(Triplets& trip, const SpacePair& sp, std::size_t t,
                                    const std::array<std::array<double, 6>, 6>& local) {
  const auto& nodes = sp.element_nodes(t);
  const int ns = static_cast<int>(sp.num_scalar_nodes());
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      trip.emplace_back(nodes[i], nodes[j], local[i][j]);
      trip.emplace_back(ns + nodes[i], ns + nodes[j], local[i][j]);
    }
}

inline SparseMatrix from_triplets(Eigen::Index rows, Eigen::Index cols, const Triplets& trip) {
  SparseMatrix m(rows, cols);
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

} // namespace detail

/// Velocity mass matrix: entries (phi_i e_a, phi_j e_b) in L2.
inline SparseMatrix assemble_mass(const SpacePair& sp) {
  Triplets trip;
  trip.reserve(sp.num_elements() * 72);
  for (std::size_t t = 0; t < sp.num_elements(); ++t) {
    std::array<std::array<double, 6>, 6> local{};
    for (int q = 0; q < SpacePair::kQuad; ++q) {
      const double jw = sp.jxw(t * SpacePair::kQuad + q);
      const auto& phi = sp.phi(q);
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) local[i][j] += jw * phi[i] * phi[j];
    }
    detail::scatter_diagonal_blocks(trip, sp, t, local);
  }
  const auto n = static_cast<Eigen::Index>(sp.num_velocity_dofs());
  return detail::from_triplets(n, n, trip);
}

/// Weighted velocity mass: entries integral of left * right * phi_i * phi_j
/// by the shared quadrature rule.
inline SparseMatrix assemble_weighted_mass(const SpacePair& sp, const QuadField& left, const QuadField& right) {
  require_layout(left, sp, "assemble_weighted_mass(left)");
  require_layout(right, sp, "assemble_weighted_mass(right)");
  Triplets trip;
  trip.reserve(sp.num_elements() * 72);
  for (std::size_t t = 0; t < sp.num_elements(); ++t) {
    std::array<std::array<double, 6>, 6> local{};
    for (int q = 0; q < SpacePair::kQuad; ++q) {
      const std::size_t k = t * SpacePair::kQuad + q;
      const double jw = sp.jxw(k) * left[k] * right[k];
      const auto& phi = sp.phi(q);
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) local[i][j] += jw * phi[i] * phi[j];
    }
    detail::scatter_diagonal_blocks(trip, sp, t, local);
  }
  const auto n = static_cast<Eigen::Index>(sp.num_velocity_dofs());
  return detail::from_triplets(n, n, trip);
}

/// Viscous operator with coefficient nu + nu_t at each quadrature point.
/// gradient mode: (c grad u, grad v); strain mode: (2 c S(u), S(v)).
inline SparseMatrix assemble_total_stiffness(const SpacePair& sp, double nu, const QuadField& nu_t, GradientMode mode) {
  if (!(nu > 0.0)) throw std::invalid_argument("assemble_total_stiffness: nu must be > 0");
  require_layout(nu_t, sp, "assemble_total_stiffness");
  const int ns = static_cast<int>(sp.num_scalar_nodes());
  Triplets trip;
  trip.reserve(sp.num_elements() * (mode == GradientMode::gradient ? 72 : 144));
  for (std::size_t t = 0; t < sp.num_elements(); ++t) {
    // local[a][b][i][j]: row component a / node i, column component b / node j
    std::array<std::array<std::array<std::array<double, 6>, 6>, 2>, 2> local{};
    for (int q = 0; q < SpacePair::kQuad; ++q) {
      const std::size_t k = t * SpacePair::kQuad + q;
      if (!(nu_t[k] >= 0.0))
        throw InvariantError("assemble_total_stiffness: negative or non-finite eddy viscosity at element " +
                             std::to_string(t));
      const double cw = sp.jxw(k) * (nu + nu_t[k]);
      const auto& d = sp.dphi(k);
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) {
          const double lap = cw * (d[i][0] * d[j][0] + d[i][1] * d[j][1]);
          local[0][0][i][j] += lap;
          local[1][1][i][j] += lap;
          if (mode == GradientMode::strain)
            for (int a = 0; a < 2; ++a)
              for (int b = 0; b < 2; ++b) local[a][b][i][j] += cw * d[j][a] * d[i][b];
        }
    }
    const auto& nodes = sp.element_nodes(t);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        if (mode == GradientMode::gradient && a != b) continue;
        for (int i = 0; i < 6; ++i)
          for (int j = 0; j < 6; ++j) trip.emplace_back(a * ns + nodes[i], b * ns + nodes[j], local[a][b][i][j]);
      }
  }
  const auto n = static_cast<Eigen::Index>(sp.num_velocity_dofs());
  return detail::from_triplets(n, n, trip);
}

inline SparseMatrix assemble_total_stiffness(const SpacePair& sp, double nu, const ClosureField& closure,
                                             GradientMode mode) {
  return assemble_total_stiffness(sp, nu, closure.nu_t, mode);
}

/// Skew-symmetrized convection: row (a,i), column (a,j) holds
/// 1/2 (u.grad phi_j, phi_i) - 1/2 (u.grad phi_i, phi_j). Exactly antisymmetric.
inline SparseMatrix assemble_convection_skew(const SpacePair& sp, const FeFunction& advecting) {
  if (advecting.tag != SpaceTag::velocity) throw std::invalid_argument("assemble_convection_skew: advecting field must be a velocity");
  if (advecting.space.get() != &sp && advecting.space->num_velocity_dofs() != sp.num_velocity_dofs())
    throw std::invalid_argument("assemble_convection_skew: advecting field lives on another space");
  const auto u = values_at_quad(advecting);
  Triplets trip;
  trip.reserve(sp.num_elements() * 72);
  for (std::size_t t = 0; t < sp.num_elements(); ++t) {
    std::array<std::array<double, 6>, 6> c{};  // c[i][j] = (u.grad phi_j, phi_i)
    for (int q = 0; q < SpacePair::kQuad; ++q) {
      const std::size_t k = t * SpacePair::kQuad + q;
      const double jw = sp.jxw(k);
      const auto& phi = sp.phi(q);
      const auto& d = sp.dphi(k);
      for (int j = 0; j < 6; ++j) {
        const double adv = jw * (u[k][0] * d[j][0] + u[k][1] * d[j][1]);
        for (int i = 0; i < 6; ++i) c[i][j] += adv * phi[i];
      }
    }
    std::array<std::array<double, 6>, 6> local{};
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) local[i][j] = 0.5 * (c[i][j] - c[j][i]);
    detail::scatter_diagonal_blocks(trip, sp, t, local);
  }
  const auto n = static_cast<Eigen::Index>(sp.num_velocity_dofs());
  return detail::from_triplets(n, n, trip);
}

/// Divergence operator B: (B w)_k = -(psi_k, div w).
inline SparseMatrix assemble_div(const SpacePair& sp) {
  const int ns = static_cast<int>(sp.num_scalar_nodes());
  Triplets trip;
  trip.reserve(sp.num_elements() * 36);
  for (std::size_t t = 0; t < sp.num_elements(); ++t) {
    std::array<std::array<std::array<double, 6>, 3>, 2> local{};
    for (int q = 0; q < SpacePair::kQuad; ++q) {
      const std::size_t k = t * SpacePair::kQuad + q;
      const double jw = sp.jxw(k);
      const auto& psi = sp.psi(q);
      const auto& d = sp.dphi(k);
      for (int p = 0; p < 3; ++p)
        for (int j = 0; j < 6; ++j) {
          local[0][p][j] -= jw * psi[p] * d[j][0];
          local[1][p][j] -= jw * psi[p] * d[j][1];
        }
    }
    const auto& pn = sp.element_pressure(t);
    const auto& vn = sp.element_nodes(t);
    for (int a = 0; a < 2; ++a)
      for (int p = 0; p < 3; ++p)
        for (int j = 0; j < 6; ++j) trip.emplace_back(pn[p], a * ns + vn[j], local[a][p][j]);
  }
  return detail::from_triplets(static_cast<Eigen::Index>(sp.num_pressure_dofs()),
                               static_cast<Eigen::Index>(sp.num_velocity_dofs()), trip);
}

/// Integrals of the pressure basis functions; m.q is the integral of q.
inline Eigen::VectorXd pressure_mean_weights(const SpacePair& sp) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sp.num_pressure_dofs()));
  for (std::size_t t = 0; t < sp.num_elements(); ++t) {
    const auto& pn = sp.element_pressure(t);
    for (int q = 0; q < SpacePair::kQuad; ++q) {
      const double jw = sp.jxw(t * SpacePair::kQuad + q);
      for (int p = 0; p < 3; ++p) m[pn[p]] += jw * sp.psi(q)[p];
    }
  }
  return m;
}

struct LebesgueNorms {
  double l2 = 0.0;       // ||w||
  double l3 = 0.0;       // ||w||_{L^3}
  double grad_l2 = 0.0;  // ||grad w||
  double grad_l3 = 0.0;  // ||grad w||_{L^3}, Frobenius pointwise
};

inline LebesgueNorms lebesgue_norms(const FeFunction& w) {
  require_velocity(w, "lebesgue_norms");
  const SpacePair& sp = *w.space;
  const auto u = values_at_quad(w);
  const auto g = gradients_at_quad(w);
  double s2 = 0.0, s3 = 0.0, g2 = 0.0, g3 = 0.0;
  for (std::size_t k = 0; k < sp.num_quad_points(); ++k) {
    const double jw = sp.jxw(k);
    const double m = std::hypot(u[k][0], u[k][1]);
    const double gm = gradient_magnitude(g[k], GradientMode::gradient);
    s2 += jw * m * m;
    s3 += jw * m * m * m;
    g2 += jw * gm * gm;
    g3 += jw * gm * gm * gm;
  }
  return {std::sqrt(s2), std::cbrt(s3), std::sqrt(g2), std::cbrt(g3)};
}

} // namespace cev
