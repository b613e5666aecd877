#include "cev/calibration.hpp"
#include "cev/ensemble.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <random>

using namespace cev;

namespace {

std::shared_ptr<const SpacePair> square_space(int n) {
  return std::make_shared<SpacePair>(std::make_shared<Mesh>(unit_square_mesh(n)));
}

std::vector<FeFunction> random_ensemble(const std::shared_ptr<const SpacePair>& sp, int J, std::uint64_t seed) {
  const FeFunction base = solenoidal_random_field(sp, seed);
  std::vector<FeFunction> out;
  for (int j = 0; j < J; ++j) out.push_back(perturb_initial(base, 0.3, seed + 100 + j));
  return out;
}

} // namespace

TEST(Calibration, K41ClosedForm) {
  const auto e = beta_k41_3d(1e4, 0.1);
  EXPECT_NEAR(e.beta, 1e-2 * std::pow(0.1, -2.0 / 3.0), 1e-12);
  EXPECT_NEAR(e.beta, 4.6416e-2, 1e-6);
  EXPECT_TRUE(e.warnings.empty());
  // the intensity quotient carries one power (delta/L)^{1/3} fewer
  EXPECT_NEAR(e.intensity_ratio, e.beta * std::cbrt(0.1), 1e-15);
  EXPECT_NEAR(e.I_u, std::pow(0.1, 2.0 / 3.0), 1e-15);
  EXPECT_NEAR(e.I_grad_u, std::pow(0.1 * std::pow(1e4, 0.75), 4.0 / 3.0), 1e-9);
  EXPECT_FALSE(beta_k41_3d(1e4, 2.0).warnings.empty());
  EXPECT_THROW(beta_k41_3d(0.0, 0.1), std::domain_error);
}

TEST(Calibration, TwoDimensionalEstimate) {
  EXPECT_NEAR(beta_2d(0.1, std::exp(1.0)), 0.1, 1e-15);
  EXPECT_NEAR(beta_2d(0.05, std::exp(4.0)), 0.025, 1e-15);
  EXPECT_THROW(beta_2d(0.1, 1.0), std::domain_error);
  EXPECT_THROW(beta_2d(0.1, 0.5), std::domain_error);
}

TEST(Calibration, DefaultBeta) {
  EXPECT_NEAR(beta_default_global(0.0110964), 1.2313e-4, 1e-8);
  EXPECT_EQ(beta_default_global(0.0110964), 0.0110964 * 0.0110964);
  const Mesh m = unit_square_mesh(8);
  EXPECT_NEAR(beta_default_global(m), 1.0 / 64.0, 1e-17);
  const auto local = beta_default_local(m);
  EXPECT_EQ(*std::min_element(local.begin(), local.end()), beta_default_global(m));
  EXPECT_THROW(beta_default_global(0.0), std::domain_error);
}

TEST(Calibration, IntensityRearrangementIdentity) {
  const auto sp = square_space(4);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto members = random_ensemble(sp, 4, seed);
    const auto st = ensemble_rs(members);
    const auto r = intensities(st);
    const double lhs = r.I_u / r.I_grad_u;
    const double rhs = (st.fluct_l2_sq / st.fluct_grad_l2_sq) / (r.L * r.L);
    EXPECT_LE(std::abs(lhs - rhs), 1e-14 * lhs);
  }
}

TEST(Calibration, ProportionalEnsemble) {
  const auto sp = square_space(4);
  const FeFunction phi = solenoidal_random_field(sp, 5);
  const double eps = 0.1;
  const std::vector<FeFunction> members{FeFunction(sp, SpaceTag::velocity, (1 + eps) * phi.coeffs),
                                        FeFunction(sp, SpaceTag::velocity, (1 - eps) * phi.coeffs)};
  const auto r = intensities(members);
  EXPECT_NEAR(r.I_u, eps * eps, 1e-14);
  EXPECT_NEAR(r.I_grad_u, eps * eps, 1e-14);
  EXPECT_NEAR(r.beta, 1.0, 1e-12);
}

TEST(Calibration, IdenticalMembersAndZeroMean) {
  const auto sp = square_space(3);
  const FeFunction phi = solenoidal_random_field(sp, 6);
  const auto r = intensities(std::vector<FeFunction>{phi, phi});
  EXPECT_EQ(r.I_u, 0.0);
  EXPECT_EQ(r.I_grad_u, 0.0);
  const std::vector<FeFunction> opposite{phi, FeFunction(sp, SpaceTag::velocity, -phi.coeffs)};
  EXPECT_THROW(intensities(opposite), std::domain_error);
}

TEST(Calibration, DiscreteConstantsAgainstDenseEigensolve) {
  const auto sp = square_space(3);
  const auto c = discrete_constants(*sp);
  const QuadField zero(sp->num_elements(), 0.0);
  const Eigen::MatrixXd K(assemble_total_stiffness(*sp, 1.0, zero, GradientMode::gradient));
  const Eigen::MatrixXd M(assemble_mass(*sp));
  std::vector<Eigen::Index> free;
  for (std::size_t i = 0; i < sp->dirichlet_mask().size(); ++i)
    if (!sp->dirichlet_mask()[i]) free.push_back(static_cast<Eigen::Index>(i));
  const auto n = static_cast<Eigen::Index>(free.size());
  Eigen::MatrixXd Kf(n, n), Mf(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      Kf(i, j) = K(free[i], free[j]);
      Mf(i, j) = M(free[i], free[j]);
    }
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(Kf, Mf);
  EXPECT_NEAR(c.lambda_min, es.eigenvalues().minCoeff(), 1e-10 * c.lambda_min);
  EXPECT_GE(c.lambda_max, es.eigenvalues().maxCoeff() * (1 - 1e-12));
  EXPECT_NEAR(c.C_PF, 1.0 / std::sqrt(es.eigenvalues().minCoeff()), 1e-9);
}

TEST(Calibration, RayleighBracketHoldsMemberwiseAndForBeta) {
  const auto sp = square_space(4);
  const auto c = discrete_constants(*sp);
  const SparseMatrix M = assemble_mass(*sp);
  const QuadField zero(sp->num_elements(), 0.0);
  const SparseMatrix K = assemble_total_stiffness(*sp, 1.0, zero, GradientMode::gradient);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto members = random_ensemble(sp, 5, seed);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(members[0].coeffs.size());
    for (const auto& m : members) mean += m.coeffs / 5.0;
    for (const auto& m : members) {
      const Eigen::VectorXd d = m.coeffs - mean;
      const double ratio = std::sqrt(d.dot(K * d) / d.dot(M * d));
      EXPECT_GE(ratio, (1.0 / c.C_PF) * (1 - 1e-10));
      EXPECT_LE(ratio, (c.C_INV / c.h) * (1 + 1e-10));
    }
    const auto b = beta_bounds(members, c);
    EXPECT_TRUE(b.within) << b.lower << " " << b.intensity.beta << " " << b.upper;
  }
}
