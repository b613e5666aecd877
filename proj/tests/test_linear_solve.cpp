#include "cev/linear_solve.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

using namespace cev;

namespace {

struct Stokes {
  std::shared_ptr<const SpacePair> sp;
  SaddleSystem sys;
};

Stokes stokes_problem(int n, double shift) {
  Stokes s;
  s.sp = std::make_shared<SpacePair>(std::make_shared<Mesh>(unit_square_mesh(n)));
  const QuadField zero(s.sp->num_elements(), 0.0);
  s.sys.A = shift * assemble_mass(*s.sp) + assemble_total_stiffness(*s.sp, 1.0, zero, GradientMode::gradient);
  s.sys.B = assemble_div(*s.sp);
  const auto f = interpolate_velocity(s.sp, [](double x, double y) {
    return std::array<double, 2>{std::sin(3 * x) + y, x * y - 1.0};
  });
  s.sys.rhs_velocity = assemble_mass(*s.sp) * f.coeffs;
  s.sys.dirichlet = s.sp->dirichlet_mask();
  s.sys.pressure_weights = pressure_mean_weights(*s.sp);
  return s;
}

// Dense oracle: eliminate the Dirichlet rows, append the mean constraint, full-pivot LU.
Eigen::VectorXd dense_solve(const SaddleSystem& sys) {
  const Eigen::MatrixXd A(sys.A), B(sys.B);
  std::vector<Eigen::Index> free;
  for (std::size_t i = 0; i < sys.dirichlet.size(); ++i)
    if (!sys.dirichlet[i]) free.push_back(static_cast<Eigen::Index>(i));
  const Eigen::Index nf = static_cast<Eigen::Index>(free.size()), np = B.rows(), n = nf + np + 1;
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < nf; ++i) {
    b[i] = sys.rhs_velocity[free[i]];
    for (Eigen::Index j = 0; j < nf; ++j) K(i, j) = A(free[i], free[j]);
    for (Eigen::Index p = 0; p < np; ++p) K(nf + p, i) = K(i, nf + p) = B(p, free[i]);
  }
  for (Eigen::Index p = 0; p < np; ++p) K(n - 1, nf + p) = K(nf + p, n - 1) = sys.pressure_weights[p];
  const Eigen::VectorXd x = K.fullPivLu().solve(b);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(A.rows() + np);
  for (Eigen::Index i = 0; i < nf; ++i) out[free[i]] = x[i];
  out.tail(np) = x.segment(nf, np);
  return out;
}

} // namespace

TEST(SaddleSolver, StokesMatchesDenseOracle) {
  const Stokes s = stokes_problem(2, 0.0);
  const auto sol = solve_saddle(s.sys);
  const Eigen::VectorXd ref = dense_solve(s.sys);
  const Eigen::Index nu = sol.velocity.size();
  EXPECT_LE((sol.velocity - ref.head(nu)).norm(), 1e-10 * ref.head(nu).norm());
  EXPECT_LE((sol.pressure - ref.tail(sol.pressure.size())).norm(), 1e-10 * std::max(1.0, ref.tail(sol.pressure.size()).norm()));
  EXPECT_LE(sol.relative_residual, 1e-10);
  EXPECT_NEAR(pressure_mean_weights(*s.sp).dot(sol.pressure), 0.0, 1e-12);
  EXPECT_LT((s.sys.B * sol.velocity).norm(), 1e-12);
  for (std::size_t i = 0; i < s.sys.dirichlet.size(); ++i)
    if (s.sys.dirichlet[i]) {
      EXPECT_EQ(sol.velocity[static_cast<Eigen::Index>(i)], 0.0);
    }
}

TEST(SaddleSolver, ZeroRightHandSideGivesZero) {
  Stokes s = stokes_problem(3, 1.0);
  s.sys.rhs_velocity.setZero();
  const auto sol = solve_saddle(s.sys);
  EXPECT_EQ(sol.velocity.norm(), 0.0);
  EXPECT_EQ(sol.pressure.norm(), 0.0);
}

TEST(SaddleSolver, LaggedReuseMeetsToleranceAndSavesFactorizations) {
  Stokes s = stokes_problem(4, 10.0);
  SaddleSolver solver(1e-10, true);
  solver.solve(s.sys);
  s.sys.A = s.sys.A + 0.01 * assemble_mass(*s.sp);  // same pattern, nearby values
  const auto sol = solver.solve(s.sys);
  EXPECT_EQ(solver.factorizations(), 1);
  EXPECT_LE(sol.relative_residual, 1e-10);
  const Eigen::VectorXd ref = dense_solve(s.sys);
  EXPECT_LE((sol.velocity - ref.head(sol.velocity.size())).norm(), 1e-8 * ref.head(sol.velocity.size()).norm());
}

TEST(SaddleSolver, LooseToleranceStopsEarly) {
  Stokes s = stokes_problem(4, 10.0);
  SaddleSolver solver(1e-2, true);
  solver.solve(s.sys);
  s.sys.A = s.sys.A + 1.0 * assemble_mass(*s.sp);
  const auto sol = solver.solve(s.sys);
  EXPECT_EQ(solver.factorizations(), 1);
  EXPECT_LE(sol.relative_residual, 1e-2);
  EXPECT_GT(sol.relative_residual, 1e-12);
}

TEST(SaddleSolver, SizeMismatchesAreRejected) {
  Stokes s = stokes_problem(1, 1.0);
  s.sys.rhs_velocity.resize(3);
  EXPECT_THROW(solve_saddle(s.sys), std::invalid_argument);
  EXPECT_THROW(SaddleSolver(0.0), std::invalid_argument);
}
