#include "cev/run.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace cev;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("cev_harness_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) { return read_text_file(p.string()); }

RunOptions quiet_in(const fs::path& dir) {
  RunOptions o;
  o.quiet = true;
  o.base_dir = dir.string();
  return o;
}

} // namespace

TEST(Config, MinimalConfigFillsDefaults) {
  const RunConfig c = parse_config("scenario = offset_circles\n");
  EXPECT_EQ(c.method, Method::linearly_implicit);
  EXPECT_DOUBLE_EQ(c.cs, 0.1);
  EXPECT_EQ(c.closure_mode, GradientMode::strain);
  EXPECT_EQ(c.delta_mode, DeltaPolicy::global_min_edge);
  EXPECT_FALSE(c.beta.has_value());
  EXPECT_EQ(c.beta_mode, BetaMode::fixed);
}

TEST(Config, ParsesEveryKey) {
  const RunConfig c = parse_config(R"(# comment line
scenario = taylor_green   # trailing comment
mesh_nodes = unit_square:6
nu = 2e-3
dt = 0.05
T = 0.5
beta = 8e-5
method = 3
cs = 0.17
closure_mode = gradient
delta_mode = local
solver_tol = 1e-11
audit_tol = 1e-9
strict = true
out_csv = a.csv
out_fields = snaps
snapshot_every = 5
ens_J = 3
ens_amplitude = 0.01
ens_seed = 11
)");
  EXPECT_EQ(c.scenario, Scenario::taylor_green);
  EXPECT_EQ(c.mesh_nodes, "unit_square:6");
  EXPECT_DOUBLE_EQ(*c.nu, 2e-3);
  EXPECT_DOUBLE_EQ(*c.beta, 8e-5);
  EXPECT_EQ(c.method, Method::bdf2_ab2);
  EXPECT_EQ(c.closure_mode, GradientMode::gradient);
  EXPECT_EQ(c.delta_mode, DeltaPolicy::local_width);
  EXPECT_TRUE(c.strict);
  EXPECT_EQ(c.snapshot_every, 5);
  EXPECT_EQ(c.ens_J, 3);
  EXPECT_EQ(c.ens_seed, 11u);
}

TEST(Config, BetaModes) {
  const RunConfig k = parse_config("scenario = quiescent\nbeta_mode = k41-3d 1e4 0.1\n");
  EXPECT_EQ(k.beta_mode, BetaMode::k41_3d);
  ASSERT_EQ(k.beta_args.size(), 2u);
  EXPECT_DOUBLE_EQ(k.beta_args[0], 1e4);
  EXPECT_EQ(parse_config("scenario = quiescent\nbeta_mode = default-local\n").beta_mode, BetaMode::default_local);
  EXPECT_THROW(parse_config("scenario = quiescent\nbeta_mode = k41-3d 1e4\n"), ParseError);
  EXPECT_THROW(parse_config("scenario = quiescent\nbeta_mode = magic\n"), ParseError);
}

TEST(Config, ErrorsNameKeyAndLine) {
  auto message = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const std::exception& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_EQ(message("scenario = quiescent\n\nbogus = 1\n"), "line 3: unknown key 'bogus'");
  EXPECT_NE(message("scenario = quiescent\nnu = fast\n").find("'nu'"), std::string::npos);
  EXPECT_NE(message("scenario = quiescent\nnu = 1\nnu = 2\n").find("line 3"), std::string::npos);
  EXPECT_NE(message("nu = 1\n").find("'scenario'"), std::string::npos);
  EXPECT_NE(message("scenario = quiescent\nmethod = 4\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("scenario = quiescent\nstrict = maybe\n").find("'strict'"), std::string::npos);
  EXPECT_NE(message("scenario = quiescent\njust words\n").find("line 2"), std::string::npos);
}

TEST(Config, RejectsInvalidValues) {
  EXPECT_THROW(parse_config("scenario = quiescent\ndt = 0\n"), ConfigError);
  EXPECT_THROW(parse_config("scenario = quiescent\nnu = -1\n"), ConfigError);
  EXPECT_THROW(parse_config("scenario = quiescent\nbeta = -1e-3\n"), ConfigError);
  EXPECT_THROW(parse_config("scenario = quiescent\ndt = 0.1\nT = 0.05\n"), ConfigError);
  EXPECT_THROW(parse_config("scenario = quiescent\nens_J = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("scenario = quiescent\nmesh_nodes = a.node\n"), ConfigError);
  EXPECT_THROW(run(parse_config("scenario = quiescent\ndt = 0.03\nT = 0.1\n")), ConfigError);
  EXPECT_THROW(run(parse_config("scenario = quiescent\nbeta = 1\nbeta_mode = default-global\n")), ConfigError);
}

TEST(Scenario, OffsetCirclesForcing) {
  auto f = offset_circles_forcing(0.0, 0.0);
  EXPECT_EQ(f[0], 0.0);
  EXPECT_EQ(f[1], 0.0);
  f = offset_circles_forcing(1.0, 0.0);
  EXPECT_EQ(f[0], 0.0);
  EXPECT_EQ(f[1], 0.0);
  f = offset_circles_forcing(0.5, 0.5);
  EXPECT_DOUBLE_EQ(f[0], -1.0);
  EXPECT_DOUBLE_EQ(f[1], 1.0);
}

TEST(Scenario, OffsetCirclesDefaults) {
  const Problem p = scenario_offset_circles(parse_config("scenario = offset_circles\n"));
  EXPECT_DOUBLE_EQ(p.stepper.closure.nu, 1e-4);
  EXPECT_DOUBLE_EQ(p.stepper.k, 0.01);
  EXPECT_DOUBLE_EQ(p.T, 10.0);
  EXPECT_EQ(p.steps, 1000);
  EXPECT_DOUBLE_EQ(p.stepper.beta, 8e-5);
  EXPECT_DOUBLE_EQ(p.stepper.closure.cs, 0.1);
  EXPECT_EQ(p.stepper.closure.delta, min_edge(p.space->mesh()));
  EXPECT_EQ(p.w0.coeffs.norm(), 0.0);
  std::set<int> markers(p.space->mesh().markers().begin(), p.space->mesh().markers().end());
  EXPECT_EQ(markers, (std::set<int>{0, 1, 2}));
}

TEST(Scenario, MissingMeshFileIsAnError) {
  const auto cfg = parse_config("scenario = offset_circles\nmesh_nodes = nowhere.node\nmesh_elements = nowhere.ele\n");
  EXPECT_THROW(scenario_offset_circles(cfg), std::runtime_error);
}

TEST(Scenario, BetaModesResolveOnTheMesh) {
  const auto global = scenario_quiescent(parse_config("scenario = quiescent\nbeta_mode = default-global\n"));
  EXPECT_DOUBLE_EQ(global.stepper.beta, 0.125 * 0.125);
  const auto local = scenario_quiescent(parse_config("scenario = quiescent\nbeta_mode = default-local\n"));
  ASSERT_TRUE(local.stepper.beta_field.has_value());
  EXPECT_DOUBLE_EQ(local.beta.beta, global.stepper.beta);
  const auto k41 = scenario_quiescent(parse_config("scenario = quiescent\nbeta_mode = k41-3d 1e4 0.1\n"));
  EXPECT_NEAR(k41.stepper.beta, 1e-2 * std::pow(0.1, -2.0 / 3.0), 1e-15);
}

TEST(Run, ZeroForcingGivesAllZeroRows) {
  const fs::path d = scratch_dir("zero");
  const auto out = run(parse_config("scenario = quiescent\nmethod = 3\nT = 0.2\ndt = 0.02\nout_csv = q.csv\n"),
                       quiet_in(d));
  EXPECT_EQ(out.exit_code, kExitOk);
  const std::string text = slurp(d / "q.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')), "t,MD,TMD,EVD,VD,KE,CKE,VD_total,residual");
  const auto rows = read_diagnostics_csv(text);
  ASSERT_EQ(rows.size(), 10u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_DOUBLE_EQ(rows[i][0], 0.02 * static_cast<double>(i + 1));
    for (std::size_t c = 1; c < rows[i].size(); ++c) EXPECT_EQ(rows[i][c], 0.0);
  }
  EXPECT_TRUE(fs::exists(d / "q.report.txt"));
}

TEST(Run, StrictModeFailsOnCorruptedSolverTolerance) {
  const std::string cfg = "scenario = offset_circles\nT = 0.05\nsolver_tol = 1e-2\n";
  const auto loose = run(parse_config(cfg));
  EXPECT_EQ(loose.exit_code, kExitOk);
  EXPECT_FALSE(loose.audit.passed);
  RunOptions strict;
  strict.strict = true;
  const auto failed = run(parse_config(cfg), strict);
  EXPECT_EQ(failed.exit_code, kExitAudit);
  EXPECT_FALSE(failed.failure.empty());
  const auto clean = run(parse_config("scenario = offset_circles\nT = 0.05\nstrict = true\n"));
  EXPECT_EQ(clean.exit_code, kExitOk);
  EXPECT_TRUE(clean.audit.passed);
}

TEST(Run, RerunsAreBitIdentical) {
  const fs::path d = scratch_dir("rerun");
  const std::string a = "scenario = offset_circles\nT = 0.03\nmethod = 2\nout_csv = a.csv\n";
  const std::string b = "scenario = offset_circles\nT = 0.03\nmethod = 2\nout_csv = b.csv\n";
  run(parse_config(a), quiet_in(d));
  run(parse_config(b), quiet_in(d));
  EXPECT_EQ(slurp(d / "a.csv"), slurp(d / "b.csv"));
  EXPECT_EQ(read_diagnostics_csv(slurp(d / "a.csv")).size(), 3u);
}

TEST(Run, ReportCountsVelocityAndPressureDofsSeparately) {
  const auto out = run(parse_config("scenario = quiescent\nmesh_nodes = unit_square:4\nT = 0.01\n"));
  EXPECT_EQ(out.velocity_dofs, 2u * 81u);
  EXPECT_EQ(out.pressure_dofs, 25u);
  EXPECT_NE(out.report.find("velocity 162, pressure 25"), std::string::npos);
}

TEST(Run, TaylorGreenErrorShrinksWithTimestep) {
  auto err = [](double dt) {
    std::ostringstream c;
    c << "scenario = taylor_green\nmesh_nodes = unit_square:8\nT = 1\ndt = " << dt << "\n";
    return run(parse_config(c.str())).l2_errors.back();
  };
  const double e1 = err(0.125), e2 = err(0.0625);
  EXPECT_GT(e1 / e2, 1.7);
  EXPECT_LT(e1 / e2, 2.6);
}

TEST(Snapshot, RoundTripIsBitExact) {
  const auto sp = std::make_shared<SpacePair>(std::make_shared<Mesh>(unit_square_mesh(3)));
  const FeFunction w = solenoidal_random_field(sp, 5);
  const FeFunction q = interpolate_pressure(sp, [](double x, double y) { return std::exp(x) / 3.0 - y; });
  std::ostringstream s;
  write_snapshot(s, 17, 0.1 * 3, {&w, &q});
  const Snapshot back = read_snapshot(s.str());
  EXPECT_EQ(back.step, 17);
  EXPECT_EQ(back.t, 0.1 * 3);
  EXPECT_EQ(snapshot_field(back, sp, SpaceTag::velocity).coeffs, w.coeffs);
  EXPECT_EQ(snapshot_field(back, sp, SpaceTag::pressure).coeffs, q.coeffs);
  const auto other = std::make_shared<SpacePair>(std::make_shared<Mesh>(unit_square_mesh(2)));
  EXPECT_THROW(snapshot_field(back, other, SpaceTag::velocity), ValidationError);
  EXPECT_THROW(read_snapshot("cev-snapshot 1\nvertices 3 triangles 1\nstep 0 t 0\nfield velocity 2\n1\n"), ParseError);
}

// RS(t) from the runner against a recomputation from the dumped member
// snapshots, with the stress tensor formed point by point.
TEST(Run, EnsembleStressMatchesRecomputationFromSnapshots) {
  const fs::path d = scratch_dir("ensemble");
  const auto out = run(parse_config("scenario = taylor_green\nmesh_nodes = unit_square:4\nT = 0.5\ndt = 0.05\n"
                                    "ens_J = 4\nens_amplitude = 0.05\nens_seed = 3\nsnapshot_every = 1\n"
                                    "out_csv = e.csv\nout_fields = fields\n"),
                       quiet_in(d));
  ASSERT_EQ(out.exit_code, kExitOk);
  ASSERT_EQ(out.ensemble.size(), 11u);
  const auto sp = std::make_shared<SpacePair>(std::make_shared<Mesh>(unit_square_mesh(4)));
  for (const auto& snap : out.ensemble) {
    std::vector<std::vector<Vec2>> u;
    std::vector<std::vector<Grad2>> g;
    for (int j = 0; j < 4; ++j) {
      const auto file = d / "fields" / ("member" + std::to_string(j) + "_" + std::to_string(snap.step) + ".txt");
      const FeFunction w = snapshot_field(read_snapshot(slurp(file)), sp, SpaceTag::velocity);
      u.push_back(values_at_quad(w));
      g.push_back(gradients_at_quad(w));
    }
    double rs = 0.0;
    for (std::size_t k = 0; k < sp->num_quad_points(); ++k) {
      double m[2] = {0, 0}, gm[4] = {0, 0, 0, 0}, uu[2][2] = {{0, 0}, {0, 0}};
      for (int j = 0; j < 4; ++j) {
        for (int a = 0; a < 2; ++a) {
          m[a] += u[j][k][a] / 4.0;
          for (int b = 0; b < 2; ++b) uu[a][b] += u[j][k][a] * u[j][k][b] / 4.0;
        }
        for (int c = 0; c < 4; ++c) gm[c] += g[j][k][c] / 4.0;
      }
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) rs += sp->jxw(k) * (m[a] * m[b] - uu[a][b]) * gm[2 * a + b];
    }
    EXPECT_NEAR(snap.stats.RS, rs, 1e-12 * std::max(1.0, std::abs(rs)));
  }
  EXPECT_TRUE(fs::exists(d / "e_ensemble.csv"));
  EXPECT_TRUE(out.bounds.has_value());
}
