#include <gtest/gtest.h>

#include <random>

#include <Eigen/Dense>

#include "sstefan/discretisations.hpp"
#include "sstefan/mesh_families.hpp"
#include "sstefan/stepper.hpp"

using namespace sstefan;

namespace {

std::shared_ptr<const PolytopalMesh> four_triangle_square() {
  return std::make_shared<const PolytopalMesh>(PolytopalMesh::build(
      {{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}}, {{0, 1, 4}, {1, 2, 4}, {2, 3, 4}, {3, 0, 4}}));
}

std::shared_ptr<const PolytopalMesh> family(const std::string& id) {
  return std::make_shared<const PolytopalMesh>(make_family_mesh(*parse_family_id(id)));
}

Stepper make_stepper(GradientDiscretisation gd, StefanModel model, NewtonConfig cfg = {}) {
  auto p = std::make_shared<const GradientDiscretisation>(std::move(gd));
  const SparseMatrix A = assemble_stiffness(*p);
  return Stepper(p, A, std::move(model), cfg);
}

StefanModel constant_model(double u0, double ub, double nf = 0.0) {
  StefanModel m;
  m.noise_factor = nf;
  m.initial = [u0](const Vec2&) { return u0; };
  m.boundary = [ub](const Vec2&, double) { return ub; };
  return m;
}

}  // namespace

TEST(Stepper, SingleDofBackwardEulerClosedForm) {
  const auto gd = build_mlp1(four_triangle_square());
  ASSERT_EQ(gd.free_dofs(), std::vector<int>{4});
  const auto st = make_stepper(gd, constant_model(0.5, 0.0));
  const double m = gd.mass[4];
  const double a = assemble_stiffness(gd).coeff(4, 4);
  EXPECT_NEAR(m, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(a, 4.0, 1e-14);

  const double dt = 0.05;
  auto s = st.initial_state();
  const Eigen::VectorXd dw = Eigen::VectorXd::Zero(gd.num_dofs());
  double v = 0.5;
  for (int n = 0; n < 10; ++n) {
    s = st.step(s, dw, dt);
    v = m * v / (m + dt * a);
    EXPECT_NEAR(s.u[4], v, 1e-12);
    for (int i = 0; i < 4; ++i) EXPECT_EQ(s.u[i], 0.0);
  }
}

TEST(Stepper, SingleDofExplicitNoise) {
  const auto gd = build_mlp1(four_triangle_square());
  const auto st = make_stepper(gd, constant_model(0.5, 0.0, 0.3));
  const double m = gd.mass[4], a = 4.0, dt = 0.05, w = 0.2;
  const auto s = st.step(st.initial_state(), Eigen::VectorXd::Constant(gd.num_dofs(), w), dt);
  const double g = 0.3 * std::sqrt(0.125);
  EXPECT_NEAR(s.u[4], m * (0.5 + g * w) / (m + dt * a), 1e-12);
}

TEST(Stepper, SingleDofOnThePlateau) {
  // zeta is flat on [1, 2]; with the boundary at zeta = 1 the interior value
  // starting in the mushy zone cannot move.
  const auto gd = build_mlp1(four_triangle_square());
  const auto st = make_stepper(gd, constant_model(1.5, 1.0));
  auto s = st.initial_state();
  s = st.step(s, Eigen::VectorXd::Zero(gd.num_dofs()), 0.1);
  EXPECT_NEAR(s.u[4], 1.5, 1e-12);
}

TEST(Stepper, ConstantStatesAreSteady) {
  for (Scheme scheme : {Scheme::Mlp1, Scheme::Hmm})
    for (double c : {-0.7, 1.5, 3.0}) {
      const auto st = make_stepper(build_gd(scheme, family("mesh1-01"), 0.5), constant_model(c, c));
      auto s = st.initial_state();
      for (int n = 0; n < 3; ++n) s = st.step(s, Eigen::VectorXd::Zero(s.u.size()), 0.1);
      EXPECT_NEAR((s.u.array() - c).abs().maxCoeff(), 0.0, 1e-12) << to_string(scheme) << " c = " << c;
    }
}

TEST(Stepper, ZeroDataStaysZeroUnderNoise) {
  for (Scheme scheme : {Scheme::Mlp1, Scheme::Hmm}) {
    const auto st = make_stepper(build_gd(scheme, family("mesh1-01"), 0.5), constant_model(0.0, 0.0, 5.0));
    const auto driver = BrownianDriver::generate(3, 0, 16);
    const auto sum = run_path(st, driver, 16);
    EXPECT_EQ(sum.final_state.u.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(sum.newton_iterations, 0);
  }
}

TEST(Stepper, DirichletValuesImposedExactly) {
  for (Scheme scheme : {Scheme::Mlp1, Scheme::Hmm}) {
    const auto model = make_test1();
    const auto st = make_stepper(build_gd(scheme, family("mesh1-01"), 0.5), model);
    const auto& gd = st.discretisation();
    auto s = st.initial_state();
    const double dt = 1.0 / 16;
    for (int n = 1; n <= 4; ++n) {
      s = st.step(s, Eigen::VectorXd::Zero(gd.num_dofs()), dt);
      for (int i = 0; i < gd.num_dofs(); ++i)
        if (gd.dirichlet[i]) {
          EXPECT_EQ(s.u[i], model.boundary(gd.anchors[i], s.time));
        }
    }
  }
}

TEST(Stepper, StepUsesOnlyPastNoise) {
  // Changing the increment of step k leaves every earlier state untouched
  // and the new state's noise term depends on u^k only.
  const auto st = make_stepper(build_mlp1(family("mesh1-01")), make_test2(2.0));
  const int n = st.discretisation().num_dofs();
  std::mt19937_64 rng(5);
  std::normal_distribution<double> N(0.0, 0.1);
  std::vector<double> w(8);
  for (double& x : w) x = N(rng);
  auto run = [&](const std::vector<double>& inc) {
    std::vector<Eigen::VectorXd> out;
    auto s = st.initial_state();
    for (double x : inc) {
      s = st.step(s, Eigen::VectorXd::Constant(n, x), 1.0 / 8);
      out.push_back(s.u);
    }
    return out;
  };
  const auto base = run(w);
  auto w2 = w;
  w2[5] += 0.3;
  const auto pert = run(w2);
  for (int k = 0; k < 5; ++k) EXPECT_EQ(base[k], pert[k]);
  EXPECT_NE(base[5], pert[5]);
}

TEST(Stepper, DeterministicRuns) {
  for (Scheme scheme : {Scheme::Mlp1, Scheme::Hmm}) {
    const auto st = make_stepper(build_gd(scheme, family("mesh1-02"), 0.5), make_test2(1.0));
    const auto d = BrownianDriver::generate(17, 4, 64);
    const auto a = run_path(st, d, 64);
    const auto b = run_path(st, d, 64);
    EXPECT_EQ(a.final_state.u, b.final_state.u);
    EXPECT_EQ(a.newton_iterations, b.newton_iterations);
  }
}

TEST(Stepper, ResidualMeritDecreasesMonotonically) {
  NewtonConfig cfg;
  cfg.merit = Merit::Residual;
  const auto st = make_stepper(build_mlp1(family("mesh1-02")), make_test2(1.0), cfg);
  const auto d = BrownianDriver::generate(1, 0, 64);
  int steps = 0;
  run_path(st, d, 64, {[&](const SchemeState& s) {
             for (std::size_t k = 1; k < s.residuals.size(); ++k) EXPECT_LT(s.residuals[k], s.residuals[k - 1]);
             ++steps;
           }});
  EXPECT_EQ(steps, 65);
}

TEST(Stepper, EnergyMeritConvergesForBothSchemes) {
  for (Scheme scheme : {Scheme::Mlp1, Scheme::Hmm}) {
    const auto st = make_stepper(build_gd(scheme, family("mesh1-02"), 0.5), make_test2(1.0));
    const auto sum = run_path(st, BrownianDriver::generate(1, 0, 64), 64);
    EXPECT_TRUE(sum.final_state.u.allFinite());
    EXPECT_LE(sum.max_newton_iterations, st.config().max_iterations);
    EXPECT_EQ(sum.cap_hits, 0);
  }
}

TEST(Stepper, NewtonResidualBelowTolerance) {
  // Recompute G at the returned state independently of the solver.
  const auto model = make_test2(1.0);
  const auto gd = build_hmm(family("mesh1-02"), 0.5);
  const auto A = assemble_stiffness(gd);
  const auto st = make_stepper(gd, model);
  const double dt = 1.0 / 64, w = 0.05;
  const auto s0 = st.initial_state();
  const auto s1 = st.step(s0, Eigen::VectorXd::Constant(gd.num_dofs(), w), dt);
  Eigen::VectorXd z(gd.num_dofs());
  for (int i = 0; i < gd.num_dofs(); ++i) z[i] = model.zeta(s1.u[i]);
  const Eigen::VectorXd Az = A * z;
  double worst = 0.0;
  for (int i : gd.free_dofs()) {
    const double G = gd.mass[i] * (s1.u[i] - s0.u[i]) + dt * Az[i] - gd.mass[i] * model.noise(s0.u[i]) * w;
    worst = std::max(worst, std::abs(G));
  }
  EXPECT_LT(worst, 1e-8);
}

TEST(Stepper, CondensedDirectionMatchesFullSolve) {
  const auto st = make_stepper(build_hmm(family("mesh1-02"), 0.5), make_test2(1.0));
  ASSERT_TRUE(st.condensing());
  const auto nf = static_cast<Eigen::Index>(st.free_dofs().size());
  std::mt19937_64 rng(4);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> N;
  for (int trial = 0; trial < 3; ++trial) {
    Eigen::VectorXd slope(nf), b(nf);
    for (Eigen::Index k = 0; k < nf; ++k) {
      slope[k] = coin(rng) ? 1.0 : 0.0;
      b[k] = N(rng);
    }
    const double dt = 1.0 / 64;
    const Eigen::VectorXd x1 = st.newton_direction(slope, dt, b, true);
    const Eigen::VectorXd x2 = st.newton_direction(slope, dt, b, false);
    const Eigen::VectorXd x3 = Eigen::MatrixXd(st.jacobian(slope, dt)).lu().solve(b);
    EXPECT_LT((x1 - x2).norm(), 1e-10 * (1.0 + x2.norm()));
    EXPECT_LT((x2 - x3).norm(), 1e-10 * (1.0 + x3.norm()));
  }
}

TEST(Stepper, CondensationOffGivesSameTrajectory) {
  NewtonConfig full;
  full.condense = false;
  const auto gd = build_hmm(family("mesh1-02"), 0.5);
  const auto a = make_stepper(gd, make_test2(1.0));
  const auto b = make_stepper(gd, make_test2(1.0), full);
  EXPECT_FALSE(b.condensing());
  const auto d = BrownianDriver::generate(2, 0, 64);
  const auto ra = run_path(a, d, 64), rb = run_path(b, d, 64);
  EXPECT_LT((ra.final_state.u - rb.final_state.u).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Stepper, NonFiniteStateFails) {
  const auto gd = build_mlp1(family("mesh1-01"));
  const auto st = make_stepper(gd, make_test2(1.0));
  auto s = st.initial_state();
  s.u[gd.free_dofs().front()] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(st.step(s, Eigen::VectorXd::Zero(gd.num_dofs()), 0.1), NewtonFailure);
  EXPECT_THROW(st.step(st.initial_state(), Eigen::VectorXd::Zero(gd.num_dofs()), 0.0), std::invalid_argument);
  EXPECT_THROW(st.step(st.initial_state(), Eigen::VectorXd::Zero(3), 0.1), std::invalid_argument);
}

TEST(Stepper, IterationCapReported) {
  NewtonConfig cfg;
  cfg.max_iterations = 1;
  cfg.tolerance = 1e-300;
  const auto gd = build_mlp1(family("mesh1-01"));
  const auto st = make_stepper(gd, make_test2(1.0), cfg);
  try {
    st.step(st.initial_state(), Eigen::VectorXd::Zero(gd.num_dofs()), 0.1);
    FAIL() << "expected NewtonFailure";
  } catch (const NewtonFailure& e) {
    EXPECT_EQ(e.step(), 1u);
    EXPECT_FALSE(e.residual_history().empty());
  }
}

TEST(SolveLinear, IdentityAndDiagonal) {
  SparseMatrix I(5, 5);
  I.setIdentity();
  const Eigen::VectorXd b = Eigen::VectorXd::LinSpaced(5, -2.0, 2.0);
  EXPECT_EQ(solve_linear(I, b), b);
  SparseMatrix D(3, 3);
  D.insert(0, 0) = 2.0;
  D.insert(1, 1) = -4.0;
  D.insert(2, 2) = 0.5;
  const Eigen::VectorXd x = solve_linear(D, Eigen::Vector3d(1, 1, 1));
  EXPECT_NEAR(x[0], 0.5, 1e-15);
  EXPECT_NEAR(x[1], -0.25, 1e-15);
  EXPECT_NEAR(x[2], 2.0, 1e-15);
}

TEST(SolveLinear, RandomSparseAgainstDense) {
  std::mt19937_64 rng(50);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i < 50; ++i) {
    t.emplace_back(i, i, 10.0 + U(rng));
    for (int k = 0; k < 4; ++k) t.emplace_back(i, static_cast<int>((rng() % 50)), U(rng));
  }
  SparseMatrix A(50, 50);
  A.setFromTriplets(t.begin(), t.end());
  Eigen::VectorXd b(50);
  for (int i = 0; i < 50; ++i) b[i] = U(rng);
  const Eigen::VectorXd x = solve_linear(A, b);
  const Eigen::VectorXd y = Eigen::MatrixXd(A).partialPivLu().solve(b);
  EXPECT_LT((x - y).norm(), 1e-9);
}

TEST(SolveLinear, RejectsBadInput) {
  SparseMatrix Z(2, 2);
  Z.insert(0, 0) = 1.0;
  Z.insert(1, 0) = 1.0;
  EXPECT_THROW(solve_linear(Z, Eigen::Vector2d(1, 1)), std::runtime_error);
  SparseMatrix R(2, 3);
  EXPECT_THROW(solve_linear(R, Eigen::Vector2d(1, 1)), std::invalid_argument);
}

TEST(Diagnostics, EnergyAndMushyArea) {
  const auto gd = build_mlp1(family("mesh1-01"));
  const auto model = make_test2();
  EXPECT_NEAR(discrete_energy(gd, model, Eigen::VectorXd::Constant(gd.num_dofs(), 2.0)), 1.5, 1e-13);
  EXPECT_NEAR(mushy_area(gd, Eigen::VectorXd::Constant(gd.num_dofs(), 1.5), {1.0, 2.0}), 1.0, 1e-13);
  EXPECT_EQ(mushy_area(gd, Eigen::VectorXd::Constant(gd.num_dofs(), 2.0), {1.0, 2.0}), 0.0);
}
