#pragma once

#include "cev/assembly.hpp"
#include "cev/errors.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace cev {

/// Velocity-pressure system  [A B^T; B 0] (w, q) = (f, g)  with homogeneous
/// Dirichlet conditions on masked velocity dofs. Operators are full-size;
/// masked rows and columns are eliminated by the solver.
struct SaddleSystem {
  SparseMatrix A;                     // velocity x velocity
  SparseMatrix B;                     // pressure x velocity (may have zero rows)
  Eigen::VectorXd rhs_velocity;
  Eigen::VectorXd rhs_pressure;       // empty means zero
  std::vector<char> dirichlet;        // velocity mask, 1 = fixed to zero
  Eigen::VectorXd pressure_weights;   // m with m.q = mean constraint; empty disables it
};

struct SaddleSolution {
  Eigen::VectorXd velocity;
  Eigen::VectorXd pressure;
  double relative_residual = 0.0;
};

/// Sparse direct solver for SaddleSystem. Keeps the symbolic factorization
/// while the sparsity pattern of the block system is unchanged, so a time
/// stepper pays for ordering only once. One instance per thread.
///
/// With `reuse_factorization`, a later system with the same pattern is first
/// solved by iterative refinement preconditioned with the previous LU factors;
/// it stops as soon as the residual is below tol and refactorizes only when
/// that stalls. A loose tol therefore yields a correspondingly loose solution.
class SaddleSolver {
public:
  explicit SaddleSolver(double tol = 1e-10, bool reuse_factorization = false)
      : tol_(tol), reuse_(reuse_factorization) {
    if (!(tol > 0.0)) throw std::invalid_argument("SaddleSolver: tol must be > 0");
  }

  double tolerance() const { return tol_; }
  long factorizations() const { return factorizations_; }

  SaddleSolution solve(const SaddleSystem& sys) {
    const Eigen::Index nu = sys.A.rows();
    const Eigen::Index np = sys.B.rows();
    if (sys.A.cols() != nu) throw std::invalid_argument("solve_saddle: A must be square");
    if (np > 0 && sys.B.cols() != nu) throw std::invalid_argument("solve_saddle: B column count must match A");
    if (sys.rhs_velocity.size() != nu) throw std::invalid_argument("solve_saddle: velocity rhs size mismatch");
    if (static_cast<Eigen::Index>(sys.dirichlet.size()) != nu)
      throw std::invalid_argument("solve_saddle: Dirichlet mask size mismatch");
    const bool pin = np > 0 && sys.pressure_weights.size() == np;

    std::vector<Eigen::Index> map(static_cast<std::size_t>(nu), -1);
    Eigen::Index nf = 0;
    for (Eigen::Index i = 0; i < nu; ++i)
      if (!sys.dirichlet[i]) map[i] = nf++;
    const Eigen::Index n = nf + np + (pin ? 1 : 0);

    Triplets trip;
    trip.reserve(static_cast<std::size_t>(sys.A.nonZeros() + 2 * sys.B.nonZeros() + 2 * np));
    for (Eigen::Index c = 0; c < sys.A.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(sys.A, c); it; ++it)
        if (map[it.row()] >= 0 && map[it.col()] >= 0) trip.emplace_back(map[it.row()], map[it.col()], it.value());
    for (Eigen::Index c = 0; c < sys.B.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(sys.B, c); it; ++it)
        if (map[it.col()] >= 0) {
          trip.emplace_back(nf + it.row(), map[it.col()], it.value());
          trip.emplace_back(map[it.col()], nf + it.row(), it.value());
        }
    if (pin)
      for (Eigen::Index k = 0; k < np; ++k) {
        trip.emplace_back(nf + np, nf + k, sys.pressure_weights[k]);
        trip.emplace_back(nf + k, nf + np, sys.pressure_weights[k]);
      }
    SparseMatrix K(n, n);
    K.setFromTriplets(trip.begin(), trip.end());
    K.makeCompressed();

    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < nu; ++i)
      if (map[i] >= 0) b[map[i]] = sys.rhs_velocity[i];
    if (sys.rhs_pressure.size() == np && np > 0) b.segment(nf, np) = sys.rhs_pressure;

    SaddleSolution out;
    out.velocity = Eigen::VectorXd::Zero(nu);
    out.pressure = Eigen::VectorXd::Zero(np);
    const double bnorm = b.norm();
    if (n == 0 || bnorm == 0.0) return out;

    Eigen::VectorXd x;
    double rel = std::numeric_limits<double>::infinity();
    const bool same = same_pattern(K);
    if (reuse_ && same) {
      x = Eigen::VectorXd::Zero(n);
      Eigen::VectorXd r = b;
      for (int it = 0; it < kLaggedIterations; ++it) {
        x += lu_->solve(r);
        r = b - K * x;
        const double next = r.norm() / bnorm;
        if (!(next < rel)) break;
        rel = next;
        if (rel <= tol_) break;
      }
    }
    if (!(rel <= tol_)) {
      if (!same) {
        lu_ = std::make_unique<Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>>();
        lu_->analyzePattern(K);
        store_pattern(K);
      }
      lu_->factorize(K);
      ++factorizations_;
      if (lu_->info() != Eigen::Success) {
        rows_ = -1;
        throw ConfigError("solve_saddle: singular block system (" + lu_->lastErrorMessage() + ")");
      }
      x = lu_->solve(b);
      rel = (K * x - b).norm() / bnorm;
      for (int refine = 0; refine < 3 && !(rel <= tol_); ++refine) {
        x += lu_->solve(b - K * x);
        rel = (K * x - b).norm() / bnorm;
      }
    }
    if (!std::isfinite(rel) || rel > tol_)
      throw SolverError("solve_saddle: relative residual " + std::to_string(rel) + " above tolerance " +
                            std::to_string(tol_),
                        rel);

    for (Eigen::Index i = 0; i < nu; ++i)
      if (map[i] >= 0) out.velocity[i] = x[map[i]];
    if (np > 0) out.pressure = x.segment(nf, np);
    out.relative_residual = rel;
    return out;
  }

private:
  bool same_pattern(const SparseMatrix& K) const {
    if (!lu_ || K.rows() != rows_ || K.nonZeros() != static_cast<Eigen::Index>(inner_.size())) return false;
    for (Eigen::Index i = 0; i <= K.outerSize(); ++i)
      if (K.outerIndexPtr()[i] != outer_[static_cast<std::size_t>(i)]) return false;
    for (Eigen::Index i = 0; i < K.nonZeros(); ++i)
      if (K.innerIndexPtr()[i] != inner_[static_cast<std::size_t>(i)]) return false;
    return true;
  }

  void store_pattern(const SparseMatrix& K) {
    rows_ = K.rows();
    outer_.assign(K.outerIndexPtr(), K.outerIndexPtr() + K.outerSize() + 1);
    inner_.assign(K.innerIndexPtr(), K.innerIndexPtr() + K.nonZeros());
  }

  static constexpr int kLaggedIterations = 12;

  double tol_;
  bool reuse_;
  long factorizations_ = 0;
  std::unique_ptr<Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>> lu_;
  Eigen::Index rows_ = -1;
  std::vector<int> outer_;
  std::vector<int> inner_;
};

/// One-shot solve; relative residual of the full block system <= tol.
inline SaddleSolution solve_saddle(const SaddleSystem& sys, double tol = 1e-10) {
  SaddleSolver solver(tol);
  return solver.solve(sys);
}

} // namespace cev
