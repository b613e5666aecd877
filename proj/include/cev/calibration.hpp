#pragma once

#include "cev/assembly.hpp"
#include "cev/diagnostics.hpp"
#include "cev/errors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cev {

/// Turbulence intensities of an ensemble snapshot:
///   I(u)      = <||u'||^2> / ||<u>||^2
///   I(grad u) = <||grad u'||^2> / ||grad <u>||^2
/// and the calibrated scale beta_h = sqrt(I(u) / I(grad u)), which equals
/// sqrt(<||u'||^2> / <||grad u'||^2>) / L with L = ||<u>|| / ||grad <u>||.
struct IntensityReport {
  double I_u = 0.0;
  double I_grad_u = 0.0;
  double L = 0.0;
  double beta = 0.0;
  double fluct_l2_sq = 0.0;
  double fluct_grad_l2_sq = 0.0;
};

inline IntensityReport intensities(const EnsembleStatistics& st) {
  if (!(st.mean_l2 > 0.0) || !(st.mean_grad_l2 > 0.0))
    throw std::domain_error("intensities: ensemble mean is zero, intensities undefined");
  IntensityReport r;
  r.fluct_l2_sq = st.fluct_l2_sq;
  r.fluct_grad_l2_sq = st.fluct_grad_l2_sq;
  r.I_u = st.fluct_l2_sq / (st.mean_l2 * st.mean_l2);
  r.I_grad_u = st.fluct_grad_l2_sq / (st.mean_grad_l2 * st.mean_grad_l2);
  r.L = st.mean_l2 / st.mean_grad_l2;
  r.beta = r.I_grad_u > 0.0 ? std::sqrt(r.I_u / r.I_grad_u) : 0.0;
  return r;
}

inline IntensityReport intensities(std::span<const FeFunction> members) { return intensities(ensemble_rs(members)); }

/// K41 phenomenology in 3D for a filter width delta in the inertial range.
struct K41Estimate {
  double beta = 0.0;            // Re^{-1/2} (delta/L)^{-2/3}
  double I_u = 0.0;             // (delta/L)^{2/3}
  double I_grad_u = 0.0;        // (delta/eta)^{4/3}
  double eta_over_L = 0.0;      // Re^{-3/4}
  double intensity_ratio = 0.0; // sqrt(I_u / I_grad_u) = beta (delta/L)^{1/3}
  std::vector<std::string> warnings;
};

inline K41Estimate beta_k41_3d(double Re, double delta_over_L) {
  if (!(Re > 0.0) || !(delta_over_L > 0.0)) throw std::domain_error("beta_k41_3d: Re and delta/L must be > 0");
  K41Estimate e;
  e.eta_over_L = std::pow(Re, -0.75);
  const double delta_over_eta = delta_over_L / e.eta_over_L;
  e.beta = std::pow(Re, -0.5) * std::pow(delta_over_L, -2.0 / 3.0);
  e.I_u = std::pow(delta_over_L, 2.0 / 3.0);
  e.I_grad_u = std::pow(delta_over_eta, 4.0 / 3.0);
  e.intensity_ratio = std::sqrt(e.I_u / e.I_grad_u);
  if (delta_over_L >= 1.0) e.warnings.push_back("delta >= L: filter width outside the inertial range");
  if (delta_over_eta <= 1.0) e.warnings.push_back("delta <= eta: filter width below the Kolmogorov scale");
  return e;
}

/// 2D (enstrophy cascade) estimate beta = (delta/L) (ln(delta/eta))^{-1/2}.
inline double beta_2d(double delta_over_L, double delta_over_eta) {
  if (!(delta_over_L > 0.0)) throw std::domain_error("beta_2d: delta/L must be > 0");
  if (!(delta_over_eta > 1.0))
    throw std::domain_error("beta_2d: needs delta/eta > 1, got " + std::to_string(delta_over_eta));
  return delta_over_L / std::sqrt(std::log(delta_over_eta));
}

/// Default beta = h^2 with h the global min edge length.
inline double beta_default_global(const Mesh& mesh) {
  const double h = min_edge(mesh);
  return h * h;
}

inline double beta_default_global(double min_edge_length) {
  if (!(min_edge_length > 0.0)) throw std::domain_error("beta_default: edge length must be > 0");
  return min_edge_length * min_edge_length;
}

/// Per-element default beta_e = h_e^2 with h_e the element's local width.
inline std::vector<double> beta_default_local(const Mesh& mesh) {
  std::vector<double> b(mesh.num_triangles());
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) b[t] = mesh.local_width(t) * mesh.local_width(t);
  return b;
}

/// Extreme eigenvalues of ||grad v||^2 / ||v||^2 over discrete velocities with
/// zero boundary values, and the constants they induce:
///   ||v|| <= C_PF ||grad v||,   ||grad v|| <= C_INV h^{-1} ||v||.
/// lambda_min comes from inverse iteration (relative change below 1e-13);
/// lambda_max is bounded above by the largest element eigenvalue, so
/// C_INV is a valid (possibly pessimistic) inverse-inequality constant.
struct DiscreteConstants {
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double h = 0.0;
  double C_PF = 0.0;
  double C_INV = 0.0;
};

inline DiscreteConstants discrete_constants(const SpacePair& sp) {
  const QuadField zero(sp.num_elements(), 0.0);
  const SparseMatrix K = assemble_total_stiffness(sp, 1.0, zero, GradientMode::gradient);
  const SparseMatrix M = assemble_mass(sp);
  const auto& mask = sp.dirichlet_mask();
  std::vector<Eigen::Index> map(mask.size(), -1);
  Eigen::Index nf = 0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (!mask[i]) map[i] = nf++;
  if (nf == 0) throw std::domain_error("discrete_constants: no free velocity dofs");
  Triplets tk, tm;
  for (Eigen::Index c = 0; c < K.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(K, c); it; ++it)
      if (map[it.row()] >= 0 && map[it.col()] >= 0) tk.emplace_back(map[it.row()], map[it.col()], it.value());
  for (Eigen::Index c = 0; c < M.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(M, c); it; ++it)
      if (map[it.row()] >= 0 && map[it.col()] >= 0) tm.emplace_back(map[it.row()], map[it.col()], it.value());
  const SparseMatrix Kf = detail::from_triplets(nf, nf, tk);
  const SparseMatrix Mf = detail::from_triplets(nf, nf, tm);

  Eigen::SimplicialLDLT<SparseMatrix> ldlt(Kf);
  if (ldlt.info() != Eigen::Success) throw SolverError("discrete_constants: stiffness factorization failed", 0.0);
  Eigen::VectorXd x = Eigen::VectorXd::Ones(nf);
  double lambda = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 500; ++it) {
    x = ldlt.solve(Mf * x);
    x /= std::sqrt(x.dot(Mf * x));
    const double next = x.dot(Kf * x);
    const bool done = std::abs(next - lambda) <= 1e-13 * next;
    lambda = next;
    if (done) break;
  }

  // element bound: v^T K v = sum_e v_e^T K_e v_e <= max_e lambda_e v^T M v
  double lmax = 0.0;
  for (std::size_t t = 0; t < sp.num_elements(); ++t) {
    Eigen::Matrix<double, 6, 6> Ke = Eigen::Matrix<double, 6, 6>::Zero(), Me = Eigen::Matrix<double, 6, 6>::Zero();
    for (int q = 0; q < SpacePair::kQuad; ++q) {
      const std::size_t k = t * SpacePair::kQuad + q;
      const double w = sp.jxw(k);
      const auto& d = sp.dphi(k);
      const auto& phi = sp.phi(q);
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) {
          Ke(i, j) += w * (d[i][0] * d[j][0] + d[i][1] * d[j][1]);
          Me(i, j) += w * phi[i] * phi[j];
        }
    }
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(Ke, Me, Eigen::EigenvaluesOnly);
    lmax = std::max(lmax, es.eigenvalues().maxCoeff());
  }

  DiscreteConstants c;
  c.lambda_min = lambda;
  c.lambda_max = lmax;
  c.h = min_edge(sp.mesh());
  c.C_PF = 1.0 / std::sqrt(lambda);
  c.C_INV = c.h * std::sqrt(lmax);
  return c;
}

/// The calibrated beta_h of an ensemble against the mesh-induced bracket
///   h / (C_INV L) <= beta_h <= C_PF / L.
struct BetaBounds {
  IntensityReport intensity;
  DiscreteConstants constants;
  double lower = 0.0;
  double upper = 0.0;
  bool within = false;
};

inline BetaBounds beta_bounds(std::span<const FeFunction> members, const DiscreteConstants& c) {
  BetaBounds b;
  b.intensity = intensities(members);
  b.constants = c;
  b.lower = c.h / (c.C_INV * b.intensity.L);
  b.upper = c.C_PF / b.intensity.L;
  const double slack = 1e-10;
  b.within = b.intensity.beta >= b.lower * (1.0 - slack) && b.intensity.beta <= b.upper * (1.0 + slack);
  return b;
}

inline BetaBounds beta_bounds(std::span<const FeFunction> members) {
  if (members.empty()) throw std::invalid_argument("beta_bounds: empty ensemble");
  return beta_bounds(members, discrete_constants(*members.front().space));
}

} // namespace cev
