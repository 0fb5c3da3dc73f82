#include <gtest/gtest.h>

#include <random>

#include <Eigen/Dense>

#include "sstefan/experiments.hpp"

using namespace sstefan;

namespace {

std::shared_ptr<const PolytopalMesh> family(const std::string& id) {
  return std::make_shared<const PolytopalMesh>(make_family_mesh(*parse_family_id(id)));
}

std::shared_ptr<const PolytopalMesh> two_triangle_square() {
  return std::make_shared<const PolytopalMesh>(
      PolytopalMesh::build({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {{0, 1, 2}, {0, 2, 3}}));
}

std::shared_ptr<const PolytopalMesh> four_triangle_square() {
  return std::make_shared<const PolytopalMesh>(PolytopalMesh::build(
      {{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}}, {{0, 1, 4}, {1, 2, 4}, {2, 3, 4}, {3, 0, 4}}));
}

EnsembleSpec small_spec(int test, Scheme scheme, double nf, std::size_t paths) {
  EnsembleSpec s;
  s.test = test;
  s.scheme = scheme;
  s.nf = nf;
  s.paths = paths;
  s.seed = 12;
  s.levels = {family_level("mesh1", 1), family_level("mesh1", 2)};
  return s;
}

// Time-average of the mushy mean or sd over (0.2 T, T).
double averaged(const MushySeries& m, bool sd) {
  return time_average(m.times, sd ? m.sd : m.mean, 0.2, 1.0);
}

}  // namespace

TEST(Interpolation, SameDiscretisationIsIdentity) {
  for (Scheme s : {Scheme::Mlp1, Scheme::Hmm}) {
    const auto gd = build_gd(s, family("mesh1-01"), 0.5);
    for (auto mode : {InterpolationMode::GradientLinear, InterpolationMode::Constant}) {
      const Eigen::MatrixXd P(interpolation_matrix(gd, gd, mode));
      EXPECT_EQ(P, Eigen::MatrixXd::Identity(gd.num_dofs(), gd.num_dofs()));
    }
  }
}

TEST(Interpolation, AffineFieldsReproduced) {
  const auto affine = [](const Vec2& x) { return 0.3 - 1.7 * x.x() + 2.2 * x.y(); };
  for (Scheme sc : {Scheme::Mlp1, Scheme::Hmm})
    for (Scheme sf : {Scheme::Mlp1, Scheme::Hmm}) {
      const auto coarse = build_gd(sc, family(sc == Scheme::Hmm ? "hexa1-01" : "mesh1-01"), 0.5);
      const auto fine = build_gd(sf, family("mesh1-03"), 0.5);
      const Eigen::VectorXd w = coarse.interpolate(affine);
      const Eigen::VectorXd got = interpolate_to_fine(coarse, w, fine, InterpolationMode::GradientLinear);
      EXPECT_LT((got - fine.interpolate(affine)).cwiseAbs().maxCoeff(), 1e-12)
          << to_string(sc) << " -> " << to_string(sf);
    }
}

TEST(Interpolation, ConstantModeCopiesCellValue) {
  const auto coarse = build_hmm(two_triangle_square(), 0.5);
  const auto fine = build_mlp1(family("mesh1-02"));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> N;
  Eigen::VectorXd w(coarse.num_dofs());
  for (auto& x : w) x = N(rng);
  const Eigen::VectorXd got = interpolate_to_fine(coarse, w, fine, InterpolationMode::Constant);
  int checked = 0;
  for (int i = 0; i < fine.num_dofs(); ++i) {
    const Vec2& x = fine.anchors[i];
    if (std::abs(x.x() - x.y()) < 1e-12) continue;
    // Cell 0 lies below the diagonal, cell 1 above it.
    EXPECT_EQ(got[i], x.y() < x.x() ? w[0] : w[1]);
    ++checked;
  }
  EXPECT_GT(checked, 50);
}

TEST(Interpolation, ModesAgreeOnPiecewiseConstantFields) {
  // An HMM vector with all edge values equal to the cell values of a global
  // constant has zero cell gradients.
  const auto coarse = build_hmm(family("mesh1-01"), 0.5);
  const auto fine = build_hmm(family("mesh1-02"), 0.5);
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(coarse.num_dofs(), 1.25);
  const Eigen::VectorXd c = interpolate_to_fine(coarse, w, fine, InterpolationMode::Constant);
  const Eigen::VectorXd g = interpolate_to_fine(coarse, w, fine, InterpolationMode::GradientLinear);
  // Equal up to the rounding of the vanishing cell gradients.
  EXPECT_LT((c - g).cwiseAbs().maxCoeff(), 1e-14);
  const auto mc = build_mlp1(family("mesh1-01"));
  const auto P = interpolation_matrix(mc, build_mlp1(family("mesh1-02")), InterpolationMode::Constant);
  const Eigen::VectorXd rows = Eigen::MatrixXd(P).rowwise().sum();
  EXPECT_EQ(rows, Eigen::VectorXd::Ones(rows.size()));
}

TEST(ErrorMetrics, ReferenceAgainstItselfIsZero) {
  const auto gd = build_mlp1(family("mesh1-01"));
  const auto model = make_test2();
  Trajectory t;
  for (int n = 0; n < 4; ++n) t.states.push_back(Eigen::VectorXd::Constant(gd.num_dofs(), 2.5 - n));
  const auto e = error_metrics({t}, {t}, gd, gd, model);
  EXPECT_EQ(e.zeta, 0.0);
  EXPECT_EQ(e.grad, 0.0);
  EXPECT_EQ(e.xi, 0.0);
}

TEST(ErrorMetrics, TwoPathEnumerationOracle) {
  // Five dofs, one free; reference with 4 steps, coarse with 2 steps, P = 2.
  const auto gd = build_mlp1(four_triangle_square());
  const auto model = make_test2();
  const Eigen::MatrixXd A(assemble_stiffness(gd));
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> U(-1.5, 3.5);
  auto random_state = [&] {
    Eigen::VectorXd v(5);
    for (auto& x : v) x = U(rng);
    return v;
  };
  std::vector<Trajectory> R(2), C(2);
  for (int p = 0; p < 2; ++p) {
    for (int n = 0; n < 4; ++n) R[p].states.push_back(random_state());
    for (int n = 0; n < 2; ++n) C[p].states.push_back(random_state());
  }
  const auto e = error_metrics(R, C, gd, gd, model);

  const double dt = 0.25;
  double zn = 0, zd = 0, gn = 0, gdn = 0, xn = 0, xd = 0;
  for (int p = 0; p < 2; ++p) {
    for (int n = 0; n < 4; ++n) {
      Eigen::VectorXd zr(5), zc(5);
      for (int i = 0; i < 5; ++i) {
        zr[i] = model.zeta(R[p].states[n][i]);
        zc[i] = model.zeta(C[p].states[n / 2][i]);
      }
      for (int i = 0; i < 5; ++i) {
        zn += dt * gd.mass[i] * (zr[i] - zc[i]) * (zr[i] - zc[i]);
        zd += dt * gd.mass[i] * zr[i] * zr[i];
      }
      gn += dt * (zr - zc).dot(A * (zr - zc));
      gdn += dt * zr.dot(A * zr);
    }
    for (int i = 0; i < 5; ++i) {
      const double xr = model.xi(R[p].states[3][i]), xc = model.xi(C[p].states[1][i]);
      xn += gd.mass[i] * std::abs(xr - xc);
      xd += gd.mass[i] * xr;
    }
  }
  EXPECT_NEAR(e.zeta, std::sqrt(zn / zd), 1e-12);
  EXPECT_NEAR(e.grad, std::sqrt(gn / gdn), 1e-12);
  EXPECT_NEAR(e.xi, xn / xd, 1e-12);

  // Reordering the paths does not change the metrics.
  const auto swapped = error_metrics({R[1], R[0]}, {C[1], C[0]}, gd, gd, model);
  EXPECT_NEAR(swapped.zeta, e.zeta, 1e-15);
  EXPECT_NEAR(swapped.grad, e.grad, 1e-15);
  EXPECT_NEAR(swapped.xi, e.xi, 1e-15);
}

TEST(ErrorMetrics, MismatchedGridsRejected) {
  const auto gd = build_mlp1(family("mesh1-01"));
  Trajectory a, b;
  for (int n = 0; n < 3; ++n) a.states.push_back(Eigen::VectorXd::Zero(gd.num_dofs()));
  for (int n = 0; n < 2; ++n) b.states.push_back(Eigen::VectorXd::Zero(gd.num_dofs()));
  EXPECT_THROW(error_metrics({a}, {b}, gd, gd, make_test2()), std::invalid_argument);
  EXPECT_THROW(error_metrics({a, a}, {a}, gd, gd, make_test2()), std::invalid_argument);
}

TEST(Ensemble, LockstepErrorsMatchStoredTrajectories) {
  for (Scheme scheme : {Scheme::Mlp1, Scheme::Hmm}) {
    auto spec = small_spec(2, scheme, 1.0, 2);
    spec.reference = family_level("mesh1", 3);
    const auto rep = run_ensemble(spec);

    const auto model = make_test2(1.0);
    const auto gd_ref = std::make_shared<const GradientDiscretisation>(build_gd(scheme, spec.reference->mesh, 0.5));
    const Stepper ref_stepper(gd_ref, assemble_stiffness(*gd_ref), model);
    std::vector<Trajectory> R(2);
    for (std::size_t p = 0; p < 2; ++p) {
      const auto d = BrownianDriver::generate(spec.seed, static_cast<std::uint32_t>(p), 128);
      run_path(ref_stepper, d, 128, {[&](const SchemeState& s) {
                 if (s.step > 0) R[p].states.push_back(s.u);
               }});
    }
    for (std::size_t k = 0; k < 2; ++k) {
      const auto gd = std::make_shared<const GradientDiscretisation>(build_gd(scheme, spec.levels[k].mesh, 0.5));
      const Stepper st(gd, assemble_stiffness(*gd), model);
      std::vector<Trajectory> C(2);
      for (std::size_t p = 0; p < 2; ++p) {
        const auto d = BrownianDriver::generate(spec.seed, static_cast<std::uint32_t>(p), 128);
        run_path(st, d, rep.levels[k].steps, {[&](const SchemeState& s) {
                   if (s.step > 0) C[p].states.push_back(s.u);
                 }});
      }
      const auto e = error_metrics(R, C, *gd_ref, *gd, model);
      ASSERT_TRUE(rep.levels[k].errors);
      EXPECT_NEAR(rep.levels[k].errors->zeta, e.zeta, 1e-12 * e.zeta);
      EXPECT_NEAR(rep.levels[k].errors->grad, e.grad, 1e-12 * e.grad);
      EXPECT_NEAR(rep.levels[k].errors->xi, e.xi, 1e-12 * e.xi);
    }
    ASSERT_TRUE(rep.reference);
    EXPECT_EQ(rep.reference->errors->zeta, 0.0);
  }
}

TEST(Ensemble, SinglePathMatchesRunPath) {
  auto spec = small_spec(2, Scheme::Hmm, 1.0, 1);
  spec.levels = {family_level("mesh1", 2)};
  const auto rep = run_ensemble(spec);
  const auto gd = std::make_shared<const GradientDiscretisation>(build_hmm(spec.levels[0].mesh, 0.5));
  const Stepper st(gd, assemble_stiffness(*gd), make_test2(1.0));
  const auto sum = run_path(st, BrownianDriver::generate(spec.seed, 0, 32), 32);
  const auto& L = rep.levels[0];
  EXPECT_EQ(L.steps, 32u);
  EXPECT_DOUBLE_EQ(L.l1_xi, discrete_energy(*gd, st.model(), sum.final_state.u));
  EXPECT_DOUBLE_EQ(L.mean_newton, sum.mean_newton_iterations());
  EXPECT_DOUBLE_EQ(L.mean_sup_energy, sum.max_energy);
  EXPECT_EQ(L.max_newton, sum.max_newton_iterations);
  EXPECT_EQ(L.ndofs, 352);
  EXPECT_FALSE(L.errors);
}

TEST(Ensemble, WorkerCountDoesNotChangeReport) {
  auto spec = small_spec(2, Scheme::Mlp1, 1.0, 4);
  spec.reference = family_level("mesh1", 3);
  spec.record_mushy = true;
  const auto a = run_ensemble(spec);
  spec.workers = 3;
  const auto b = run_ensemble(spec);
  ASSERT_EQ(a.levels.size(), b.levels.size());
  for (std::size_t k = 0; k < a.levels.size(); ++k) {
    EXPECT_EQ(a.levels[k].errors->zeta, b.levels[k].errors->zeta);
    EXPECT_EQ(a.levels[k].errors->grad, b.levels[k].errors->grad);
    EXPECT_EQ(a.levels[k].errors->xi, b.levels[k].errors->xi);
    EXPECT_EQ(a.levels[k].l2_zeta, b.levels[k].l2_zeta);
    EXPECT_EQ(a.levels[k].sup_energy, b.levels[k].sup_energy);
    EXPECT_EQ(a.levels[k].mushy->mean, b.levels[k].mushy->mean);
    EXPECT_EQ(a.levels[k].mushy->sd, b.levels[k].mushy->sd);
  }
}

TEST(Ensemble, RejectsInvalidSpecs) {
  auto spec = small_spec(2, Scheme::Mlp1, 1.0, 1);
  spec.record_mushy = true;
  EXPECT_THROW(run_ensemble(spec), std::invalid_argument);
  spec.record_mushy = false;
  spec.reference = family_level("mesh1", 1);
  EXPECT_THROW(run_ensemble(spec), std::invalid_argument);
  spec.reference.reset();
  spec.exact_reference = true;
  EXPECT_THROW(run_ensemble(spec), std::invalid_argument);
  spec.exact_reference = false;
  spec.n_max = 48;
  EXPECT_THROW(run_ensemble(spec), std::invalid_argument);
  spec.n_max = 0;
  spec.levels.clear();
  EXPECT_THROW(run_ensemble(spec), std::invalid_argument);
}

TEST(Ensemble, DeterministicErrorsDecreaseWithRefinement) {
  EnsembleSpec spec;
  spec.test = 1;
  spec.nf = 0.0;
  spec.paths = 1;
  spec.levels = {family_level("mesh1", 1), family_level("mesh1", 2), family_level("mesh1", 3)};
  spec.exact_reference = true;
  const auto rep = run_ensemble(spec);
  EXPECT_GT(rep.levels[0].errors->zeta, rep.levels[1].errors->zeta);
  EXPECT_GT(rep.levels[1].errors->zeta, rep.levels[2].errors->zeta);
}

TEST(Mushy, TrivialAreas) {
  const auto gd = build_hmm(family("mesh1-01"), 0.5);
  EXPECT_EQ(mushy_area(gd, Eigen::VectorXd::Constant(gd.num_dofs(), 2.0), {1.0, 2.0}), 0.0);
  EXPECT_NEAR(mushy_area(gd, Eigen::VectorXd::Constant(gd.num_dofs(), 1.2), {1.0, 2.0}), 1.0, 1e-12);
}

TEST(Mushy, Statistics) {
  const std::vector<double> t{0.0, 0.5, 1.0};
  const auto same = mushy_stats({{0.1, 0.2, 0.3}, {0.1, 0.2, 0.3}}, t);
  EXPECT_EQ(same.sd, (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(same.mean, (std::vector<double>{0.1, 0.2, 0.3}));
  const auto two = mushy_stats({{0.0, 0.0, 1.0}, {1.0, 0.0, 0.0}}, t);
  EXPECT_EQ(two.mean, (std::vector<double>{0.5, 0.0, 0.5}));
  EXPECT_NEAR(two.sd[0], std::sqrt(0.5), 1e-15);
  EXPECT_EQ(two.sd[1], 0.0);
  EXPECT_THROW(mushy_stats({{0.1, 0.2, 0.3}}, t), std::invalid_argument);
  EXPECT_THROW(mushy_stats({{0.1, 0.2}, {0.1, 0.2, 0.3}}, t), std::invalid_argument);
}

TEST(Mushy, ExpectationInUnitInterval) {
  auto spec = small_spec(2, Scheme::Hmm, 1.0, 3);
  spec.record_mushy = true;
  const auto rep = run_ensemble(spec);
  for (const auto& L : rep.levels) {
    ASSERT_TRUE(L.mushy);
    EXPECT_EQ(L.mushy->times.size(), L.steps + 1);
    for (std::size_t n = 0; n < L.mushy->times.size(); ++n) {
      EXPECT_GE(L.mushy->mean[n], 0.0);
      EXPECT_LE(L.mushy->mean[n], 1.0 + 1e-12);
      EXPECT_GE(L.mushy->sd[n], 0.0);
    }
  }
}

TEST(Helpers, TimeAverageAndSlope) {
  EXPECT_DOUBLE_EQ(time_average({0.0, 0.2, 0.5, 1.0}, {9.0, 9.0, 3.0, 9.0}, 0.2, 1.0), 3.0);
  EXPECT_TRUE(std::isnan(time_average({0.0, 1.0}, {1.0, 1.0}, 0.2, 1.0)));
  EXPECT_NEAR(loglog_slope({0.1, 0.05, 0.025}, {0.3, 0.075, 0.01875}), 2.0, 1e-12);
  EXPECT_THROW(loglog_slope({1.0}, {1.0}), std::invalid_argument);
  EXPECT_THROW(make_test(3, 1.0), std::invalid_argument);
}

// Ensemble checks quoted from the published experiments.

TEST(MushyPaper, ExpectedAreaDecaysWithMeshSize) {
  EnsembleSpec spec;
  spec.test = 2;
  spec.nf = 1.0;
  spec.paths = 20;
  spec.seed = 1;
  spec.record_mushy = true;
  spec.levels = {family_level("mesh1", 2), family_level("mesh1", 3)};
  const auto rep = run_ensemble(spec);
  EXPECT_LT(averaged(*rep.levels[1].mushy, false), averaged(*rep.levels[0].mushy, false));
}

TEST(MushyPaper, LargerNoiseGivesLargerSpread) {
  EnsembleSpec spec;
  spec.test = 2;
  spec.paths = 20;
  spec.seed = 1;
  spec.record_mushy = true;
  spec.levels = {family_level("mesh1", 2)};
  spec.nf = 1.0;
  const auto small = run_ensemble(spec);
  spec.nf = 1000.0;
  const auto large = run_ensemble(spec);
  const auto& a = *small.levels[0].mushy;
  const auto& b = *large.levels[0].mushy;
  // Uniformly larger after the initial state, where both are zero.
  for (std::size_t n = 1; n < a.times.size(); ++n)
    EXPECT_GT(b.sd[n], a.sd[n]) << "t = " << a.times[n];
}
