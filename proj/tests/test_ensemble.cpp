#include "cev/ensemble.hpp"

#include <gtest/gtest.h>

using namespace cev;

namespace {

std::shared_ptr<const SpacePair> square_space(int n) {
  return std::make_shared<SpacePair>(std::make_shared<Mesh>(unit_square_mesh(n)));
}

StepperConfig small_config() {
  StepperConfig cfg;
  cfg.k = 0.05;
  cfg.beta = 0.05;
  cfg.closure.nu = 1e-2;
  cfg.closure.delta = 0.25;
  return cfg;
}

} // namespace

TEST(Perturbation, RelativeAmplitudeAndSolenoidal) {
  const auto sp = square_space(4);
  const FeFunction base = solenoidal_random_field(sp, 1);
  const SparseMatrix M = assemble_mass(*sp);
  const SparseMatrix B = assemble_div(*sp);
  for (double amp : {1e-3, 0.1, 1.0}) {
    const FeFunction p = perturb_initial(base, amp, 42);
    const Eigen::VectorXd d = p.coeffs - base.coeffs;
    const double rel = std::sqrt(d.dot(M * d) / base.coeffs.dot(M * base.coeffs));
    EXPECT_NEAR(rel, amp, 1e-12 * amp);
    EXPECT_LE((B * d).norm(), 1e-10 * d.norm());
  }
  const FeFunction zero = FeFunction::zero(sp, SpaceTag::velocity);
  const FeFunction pz = perturb_initial(zero, 0.5, 3);
  EXPECT_NEAR(std::sqrt(pz.coeffs.dot(M * pz.coeffs)), 0.5, 1e-12);
  EXPECT_EQ(perturb_initial(base, 0.0, 9).coeffs, base.coeffs);
  EXPECT_THROW(perturb_initial(base, -1.0, 9), ConfigError);
}

TEST(Perturbation, SeedsAreDeterministicAndDistinct) {
  const auto sp = square_space(3);
  const FeFunction base = solenoidal_random_field(sp, 1);
  EXPECT_EQ(perturb_initial(base, 0.1, 7).coeffs, perturb_initial(base, 0.1, 7).coeffs);
  EXPECT_GT((perturb_initial(base, 0.1, 7).coeffs - perturb_initial(base, 0.1, 8).coeffs).norm(), 0.0);
}

TEST(Ensemble, ZeroAmplitudeMembersStayIdentical) {
  const auto sp = square_space(3);
  EnsembleConfig ens;
  ens.members = 2;
  ens.amplitude = 0.0;
  ens.steps = 4;
  const FeFunction w0 = solenoidal_random_field(sp, 2);
  const auto res = advance_ensemble(sp, small_config(), ens, w0,
                                    [&](double) { return FeFunction::zero(sp, SpaceTag::velocity); });
  ASSERT_EQ(res.series.size(), 5u);
  for (const auto& s : res.series) {
    EXPECT_EQ(s.stats.fluct_l2_sq, 0.0);
    EXPECT_EQ(s.stats.fluct_grad_l2_sq, 0.0);
  }
}

TEST(Ensemble, ThreadCountDoesNotChangeResults) {
  const auto sp = square_space(3);
  EnsembleConfig ens;
  ens.members = 3;
  ens.amplitude = 0.2;
  ens.steps = 5;
  ens.snapshot_every = 2;
  ens.method = Method::modular;
  const FeFunction w0 = solenoidal_random_field(sp, 3);
  auto forcing = [&](double) { return FeFunction::zero(sp, SpaceTag::velocity); };
  const auto a = advance_ensemble(sp, small_config(), ens, w0, forcing);
  ens.threads = 3;
  const auto b = advance_ensemble(sp, small_config(), ens, w0, forcing);
  ASSERT_EQ(a.series.size(), 4u);  // steps 0, 2, 4, 5
  EXPECT_EQ(a.series.back().step, 5);
  for (std::size_t i = 0; i < a.series.size(); ++i) {
    EXPECT_EQ(a.series[i].stats.RS, b.series[i].stats.RS);
    EXPECT_EQ(a.series[i].stats.fluct_energy, b.series[i].stats.fluct_energy);
    EXPECT_EQ(a.series[i].variance_residual.has_value(), i > 0);
  }
  EXPECT_TRUE(a.series[0].intensity.has_value());
}

TEST(Ensemble, RejectsBadConfiguration) {
  const auto sp = square_space(2);
  EnsembleConfig ens;
  ens.members = 1;
  const FeFunction w0 = FeFunction::zero(sp, SpaceTag::velocity);
  auto forcing = [&](double) { return w0; };
  EXPECT_THROW(advance_ensemble(sp, small_config(), ens, w0, forcing), ConfigError);
}
