#pragma once

#include "cev/errors.hpp"
#include "cev/mesh.hpp"

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace cev {

/// Symmetric quadrature on the reference triangle {(r,s): r,s >= 0, r+s <= 1}.
/// Weights sum to the reference area 1/2.
struct QuadratureRule {
  std::vector<std::array<double, 2>> points;
  std::vector<double> weights;
  int degree = 0;
};

/// Radon's 7-point rule, exact for polynomials of degree <= 5.
inline const QuadratureRule& triangle_rule_degree5() {
  static const QuadratureRule rule = [] {
    const double s15 = std::sqrt(15.0);
    const double a1 = (6.0 - s15) / 21.0, b1 = (9.0 + 2.0 * s15) / 21.0;
    const double a2 = (6.0 + s15) / 21.0, b2 = (9.0 - 2.0 * s15) / 21.0;
    const double w0 = 9.0 / 80.0;
    const double w1 = (155.0 - s15) / 2400.0;
    const double w2 = (155.0 + s15) / 2400.0;
    QuadratureRule r;
    r.degree = 5;
    r.points = {{1.0 / 3.0, 1.0 / 3.0}, {a1, a1}, {b1, a1}, {a1, b1}, {a2, a2}, {b2, a2}, {a2, b2}};
    r.weights = {w0, w1, w1, w1, w2, w2, w2};
    return r;
  }();
  return rule;
}

/// Quadratic Lagrange basis on the reference triangle. Nodes 0..2 are the
/// vertices, 3..5 the midpoints of edges (0,1), (1,2), (2,0).
struct P2Basis {
  static std::array<double, 6> values(double r, double s) {
    const double l0 = 1.0 - r - s, l1 = r, l2 = s;
    return {l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), 4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0};
  }
  /// d/dr, d/ds of each basis function.
  static std::array<std::array<double, 2>, 6> gradients(double r, double s) {
    const double l0 = 1.0 - r - s, l1 = r, l2 = s;
    return {{{-(4 * l0 - 1), -(4 * l0 - 1)},
             {4 * l1 - 1, 0.0},
             {0.0, 4 * l2 - 1},
             {4 * (l0 - l1), -4 * l1},
             {4 * l2, 4 * l1},
             {-4 * l2, 4 * (l0 - l2)}}};
  }
};

enum class SpaceTag { velocity, pressure };

/// Taylor-Hood P2/P1 spaces on a mesh with precomputed per-element quadrature data.
///
/// Scalar P2 nodes: vertices first, then edge midpoints. Velocity dofs are
/// blocked by component: dof = component * num_scalar_nodes() + node.
/// Pressure dofs are the vertices.
class SpacePair {
public:
  static constexpr int kQuad = 7;

  explicit SpacePair(std::shared_ptr<const Mesh> mesh, const QuadratureRule& rule = triangle_rule_degree5())
      : mesh_(std::move(mesh)), rule_(rule) {
    if (!mesh_) throw std::invalid_argument("SpacePair: null mesh");
    if (static_cast<int>(rule_.points.size()) != kQuad)
      throw std::invalid_argument("SpacePair: quadrature rule must have 7 points");
    const auto& m = *mesh_;
    const std::size_t ne = m.num_triangles();
    nv_ = m.num_vertices();
    ns_ = nv_ + m.num_edges();

    node_xy_.resize(ns_);
    for (std::size_t v = 0; v < nv_; ++v) node_xy_[v] = m.vertices()[v];
    for (std::size_t e = 0; e < m.num_edges(); ++e) {
      const Point& a = m.vertices()[m.edges()[e].v0];
      const Point& b = m.vertices()[m.edges()[e].v1];
      node_xy_[nv_ + e] = {0.5 * (a.x + b.x), 0.5 * (a.y + b.y)};
    }

    dirichlet_.assign(2 * ns_, 0);
    for (std::size_t v = 0; v < nv_; ++v)
      if (m.on_boundary(v)) dirichlet_[v] = dirichlet_[ns_ + v] = 1;
    for (std::size_t e = 0; e < m.num_edges(); ++e)
      if (m.edges()[e].multiplicity == 1) dirichlet_[nv_ + e] = dirichlet_[ns_ + nv_ + e] = 1;

    for (int q = 0; q < kQuad; ++q) {
      const auto& p = rule_.points[q];
      ref_phi_[q] = P2Basis::values(p[0], p[1]);
      ref_psi_[q] = {1.0 - p[0] - p[1], p[0], p[1]};
    }

    elem_nodes_.resize(ne);
    jxw_.resize(ne * kQuad);
    qxy_.resize(ne * kQuad);
    dphi_.resize(ne * kQuad);
    for (std::size_t t = 0; t < ne; ++t) {
      const auto& tri = m.triangles()[t];
      const auto& te = m.triangle_edges(t);
      elem_nodes_[t] = {tri[0], tri[1], tri[2], static_cast<int>(nv_) + te[0], static_cast<int>(nv_) + te[1],
                        static_cast<int>(nv_) + te[2]};
      const Point& p0 = m.vertices()[tri[0]];
      const Point& p1 = m.vertices()[tri[1]];
      const Point& p2 = m.vertices()[tri[2]];
      // x = p0 + J (r,s)
      const double j00 = p1.x - p0.x, j01 = p2.x - p0.x, j10 = p1.y - p0.y, j11 = p2.y - p0.y;
      const double det = j00 * j11 - j01 * j10;
      // inverse transpose maps reference gradients to physical ones
      const double i00 = j11 / det, i01 = -j10 / det, i10 = -j01 / det, i11 = j00 / det;
      for (int q = 0; q < kQuad; ++q) {
        const auto& p = rule_.points[q];
        const std::size_t k = t * kQuad + q;
        jxw_[k] = rule_.weights[q] * det;
        qxy_[k] = {p0.x + j00 * p[0] + j01 * p[1], p0.y + j10 * p[0] + j11 * p[1]};
        const auto g = P2Basis::gradients(p[0], p[1]);
        for (int i = 0; i < 6; ++i)
          dphi_[k][i] = {i00 * g[i][0] + i01 * g[i][1], i10 * g[i][0] + i11 * g[i][1]};
      }
    }
  }

  const Mesh& mesh() const { return *mesh_; }
  std::shared_ptr<const Mesh> mesh_ptr() const { return mesh_; }
  const QuadratureRule& rule() const { return rule_; }

  std::size_t num_elements() const { return elem_nodes_.size(); }
  std::size_t num_scalar_nodes() const { return ns_; }
  std::size_t num_velocity_dofs() const { return 2 * ns_; }
  std::size_t num_pressure_dofs() const { return nv_; }
  std::size_t num_dofs(SpaceTag tag) const {
    return tag == SpaceTag::velocity ? num_velocity_dofs() : num_pressure_dofs();
  }

  int velocity_dof(int component, int node) const { return component * static_cast<int>(ns_) + node; }
  const Point& node(std::size_t s) const { return node_xy_[s]; }

  /// Scalar P2 node ids of element t in local basis order.
  const std::array<int, 6>& element_nodes(std::size_t t) const { return elem_nodes_[t]; }
  /// P1 pressure dofs of element t (its vertices).
  const std::array<int, 3>& element_pressure(std::size_t t) const { return mesh_->triangles()[t]; }

  /// Velocity dofs on no-slip boundaries (1) or free (0).
  const std::vector<char>& dirichlet_mask() const { return dirichlet_; }

  // Quadrature data, indexed by k = t * kQuad + q.
  double jxw(std::size_t k) const { return jxw_[k]; }
  const Point& quad_point(std::size_t k) const { return qxy_[k]; }
  const std::array<double, 6>& phi(int q) const { return ref_phi_[q]; }
  const std::array<double, 3>& psi(int q) const { return ref_psi_[q]; }
  const std::array<std::array<double, 2>, 6>& dphi(std::size_t k) const { return dphi_[k]; }
  std::size_t num_quad_points() const { return jxw_.size(); }

private:
  std::shared_ptr<const Mesh> mesh_;
  QuadratureRule rule_;
  std::size_t nv_ = 0;
  std::size_t ns_ = 0;
  std::vector<Point> node_xy_;
  std::vector<char> dirichlet_;
  std::array<std::array<double, 6>, kQuad> ref_phi_{};
  std::array<std::array<double, 3>, kQuad> ref_psi_{};
  std::vector<std::array<int, 6>> elem_nodes_;
  std::vector<double> jxw_;
  std::vector<Point> qxy_;
  std::vector<std::array<std::array<double, 2>, 6>> dphi_;
};

/// Coefficient vector over one of the spaces of a SpacePair.
struct FeFunction {
  std::shared_ptr<const SpacePair> space;
  SpaceTag tag = SpaceTag::velocity;
  Eigen::VectorXd coeffs;

  FeFunction() = default;
  FeFunction(std::shared_ptr<const SpacePair> sp, SpaceTag t, Eigen::VectorXd c)
      : space(std::move(sp)), tag(t), coeffs(std::move(c)) {
    if (!space) throw std::invalid_argument("FeFunction: null space");
    if (static_cast<std::size_t>(coeffs.size()) != space->num_dofs(tag))
      throw std::invalid_argument("FeFunction: coefficient length " + std::to_string(coeffs.size()) +
                                  " does not match space size " + std::to_string(space->num_dofs(tag)));
  }

  static FeFunction zero(std::shared_ptr<const SpacePair> sp, SpaceTag t) {
    const auto n = static_cast<Eigen::Index>(sp->num_dofs(t));
    return FeFunction(std::move(sp), t, Eigen::VectorXd::Zero(n));
  }
};

using VectorField = std::function<std::array<double, 2>(double x, double y)>;
using ScalarField = std::function<double(double x, double y)>;

/// Nodal P2 interpolant of a vector field.
inline FeFunction interpolate_velocity(std::shared_ptr<const SpacePair> sp, const VectorField& f) {
  const std::size_t ns = sp->num_scalar_nodes();
  Eigen::VectorXd c(static_cast<Eigen::Index>(2 * ns));
  for (std::size_t s = 0; s < ns; ++s) {
    const auto v = f(sp->node(s).x, sp->node(s).y);
    c[static_cast<Eigen::Index>(s)] = v[0];
    c[static_cast<Eigen::Index>(ns + s)] = v[1];
  }
  return FeFunction(std::move(sp), SpaceTag::velocity, std::move(c));
}

inline FeFunction interpolate_pressure(std::shared_ptr<const SpacePair> sp, const ScalarField& f) {
  const auto& verts = sp->mesh().vertices();
  Eigen::VectorXd c(static_cast<Eigen::Index>(verts.size()));
  for (std::size_t v = 0; v < verts.size(); ++v) c[static_cast<Eigen::Index>(v)] = f(verts[v].x, verts[v].y);
  return FeFunction(std::move(sp), SpaceTag::pressure, std::move(c));
}

inline void require_velocity(const FeFunction& w, const char* who) {
  if (w.tag != SpaceTag::velocity || !w.space)
    throw std::invalid_argument(std::string(who) + ": expected a velocity function");
}

/// Scalar values on the quadrature layout of a SpacePair (element-major).
struct QuadField {
  std::size_t num_elements = 0;
  std::vector<double> values;

  QuadField() = default;
  QuadField(std::size_t elements, double fill) : num_elements(elements), values(elements * SpacePair::kQuad, fill) {}

  double& operator[](std::size_t k) { return values[k]; }
  double operator[](std::size_t k) const { return values[k]; }
  std::size_t size() const { return values.size(); }

  bool same_layout(const QuadField& o) const { return num_elements == o.num_elements && size() == o.size(); }
};

inline void require_layout(const QuadField& f, const SpacePair& sp, const char* who) {
  if (f.num_elements != sp.num_elements() || f.size() != sp.num_quad_points())
    throw std::invalid_argument(std::string(who) + ": quadrature layout mismatch");
}

using Vec2 = std::array<double, 2>;
/// Row-major 2x2 velocity gradient: {du/dx, du/dy, dv/dx, dv/dy}.
using Grad2 = std::array<double, 4>;

/// Velocity values at every quadrature point.
inline std::vector<Vec2> values_at_quad(const FeFunction& w) {
  require_velocity(w, "values_at_quad");
  const SpacePair& sp = *w.space;
  const auto ns = static_cast<Eigen::Index>(sp.num_scalar_nodes());
  std::vector<Vec2> out(sp.num_quad_points());
  for (std::size_t t = 0; t < sp.num_elements(); ++t) {
    const auto& nodes = sp.element_nodes(t);
    for (int q = 0; q < SpacePair::kQuad; ++q) {
      const auto& phi = sp.phi(q);
      double u = 0.0, v = 0.0;
      for (int i = 0; i < 6; ++i) {
        u += w.coeffs[nodes[i]] * phi[i];
        v += w.coeffs[ns + nodes[i]] * phi[i];
      }
      out[t * SpacePair::kQuad + q] = {u, v};
    }
  }
  return out;
}

inline std::vector<Grad2> gradients_at_quad(const FeFunction& w) {
  require_velocity(w, "gradients_at_quad");
  const SpacePair& sp = *w.space;
  const auto ns = static_cast<Eigen::Index>(sp.num_scalar_nodes());
  std::vector<Grad2> out(sp.num_quad_points());
  for (std::size_t t = 0; t < sp.num_elements(); ++t) {
    const auto& nodes = sp.element_nodes(t);
    for (int q = 0; q < SpacePair::kQuad; ++q) {
      const std::size_t k = t * SpacePair::kQuad + q;
      const auto& d = sp.dphi(k);
      Grad2 g{0.0, 0.0, 0.0, 0.0};
      for (int i = 0; i < 6; ++i) {
        const double u = w.coeffs[nodes[i]], v = w.coeffs[ns + nodes[i]];
        g[0] += u * d[i][0];
        g[1] += u * d[i][1];
        g[2] += v * d[i][0];
        g[3] += v * d[i][1];
      }
      out[k] = g;
    }
  }
  return out;
}

} // namespace cev
