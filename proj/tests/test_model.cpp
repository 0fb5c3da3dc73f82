#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "sstefan/model.hpp"

using namespace sstefan;

namespace {

// Composite Simpson rule for int_0^s zeta, split at the kinks of zeta: the
// quadrature oracle for Xi.
double simpson(const ZetaFunction& z, double a, double b) {
  const int n = 2000;
  const double h = (b - a) / n;
  double acc = z(a) + z(b);
  for (int k = 1; k < n; ++k) acc += (k % 2 ? 4.0 : 2.0) * z(a + k * h);
  return acc * h / 3.0;
}

double xi_by_quadrature(const ZetaFunction& z, double s) {
  std::vector<double> pts{0.0};
  for (double b : z.breakpoints())
    if (b > std::min(0.0, s) && b < std::max(0.0, s)) pts.push_back(b);
  pts.push_back(s);
  std::sort(pts.begin(), pts.end());
  double total = 0.0;
  for (std::size_t k = 1; k < pts.size(); ++k) total += simpson(z, pts[k - 1], pts[k]);
  return s >= 0.0 ? total : -total;
}

}  // namespace

TEST(Zeta, Normalisation) {
  const auto z = stefan_test_zeta();
  EXPECT_EQ(z(0.0), 0.0);
  EXPECT_EQ(z.primitive(0.0), 0.0);
}

TEST(Zeta, CorrectedTestValues) {
  const auto z = stefan_test_zeta();
  EXPECT_DOUBLE_EQ(z(1.5), 1.0);
  EXPECT_DOUBLE_EQ(z(3.0), 2.0);
  EXPECT_DOUBLE_EQ(z.primitive(2.0), 1.5);
  EXPECT_DOUBLE_EQ(z.primitive(3.0), 3.0);
  EXPECT_DOUBLE_EQ(z(-2.0), -2.0);
  EXPECT_DOUBLE_EQ(z.primitive(-2.0), 2.0);
  for (double s : {-2.0, -0.3, 0.7, 1.0, 1.5, 2.0, 3.0, 4.25})
    EXPECT_NEAR(z.primitive(s), xi_by_quadrature(z, s), 1e-10) << "s = " << s;
}

TEST(Zeta, RightHandSlopeAndPlateau) {
  const auto z = stefan_test_zeta();
  EXPECT_EQ(z.derivative(0.5), 1.0);
  EXPECT_EQ(z.derivative(1.0), 0.0);
  EXPECT_EQ(z.derivative(2.0), 1.0);
  ASSERT_TRUE(z.plateau());
  EXPECT_EQ(z.plateau()->first, 1.0);
  EXPECT_EQ(z.plateau()->second, 2.0);
  EXPECT_EQ(z.lipschitz(), 1.0);
}

TEST(Zeta, ContinuousAtBreakpoints) {
  const auto z = stefan_test_zeta();
  for (double b : z.breakpoints()) {
    EXPECT_NEAR(z(b - 1e-12), z(b), 1e-11);
    EXPECT_NEAR(z(b + 1e-12), z(b), 1e-11);
  }
}

TEST(Zeta, Inverse) {
  const auto z = stefan_test_zeta();
  EXPECT_EQ(z.inverse(-1.0), -1.0);
  EXPECT_EQ(z.inverse(0.0), 0.0);
  EXPECT_EQ(z.inverse(1.0), 1.0);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(-5.0, 5.0);
  for (int i = 0; i < 100; ++i) {
    const double y = U(rng);
    EXPECT_NEAR(z(z.inverse(y)), y, 1e-14);
  }
}

TEST(Zeta, RejectsInvalidShapes) {
  EXPECT_THROW(ZetaFunction({1.0}, {1.0}), std::invalid_argument);
  EXPECT_THROW(ZetaFunction({2.0, 1.0}, {1.0, 0.0, 1.0}), std::invalid_argument);
  EXPECT_THROW(ZetaFunction({1.0}, {1.0, -1.0}), std::invalid_argument);
  EXPECT_THROW(ZetaFunction({1.0}, {0.0, 1.0}), std::invalid_argument);
}

TEST(XiProperties, InequalitiesOnRandomSamples) {
  const auto z = stefan_test_zeta();
  const double L = 1.0 / z.lipschitz();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> U(-6.0, 8.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = U(rng), b = U(rng), s = U(rng);
    const double tol = 1e-12 * (1.0 + a * a + b * b);
    EXPECT_GE(z.primitive(s), 0.0);
    // Convexity: Xi(b) - Xi(a) <= (b - a) zeta(b).
    EXPECT_LE(z.primitive(b) - z.primitive(a), (b - a) * z(b) + tol);
    // Monotone and Lipschitz.
    EXPECT_GE((b - a) * (z(b) - z(a)), L * std::pow(z(b) - z(a), 2) - tol);
    EXPECT_LE(z(s) * z(s), 2.0 * z.lipschitz() * z.primitive(s) + tol);
    EXPECT_LE(s * s, z.growth_k1() * z.primitive(s) + z.growth_k2() + tol);
    EXPECT_GE(std::abs(z(s)), z.coercivity_c() * std::abs(s) - z.coercivity_d() - tol);
  }
}

TEST(XiProperties, DerivativeIsZetaAwayFromBreakpoints) {
  const auto z = stefan_test_zeta();
  for (double s : {-1.3, 0.4, 1.7, 2.6}) {
    const double h = 1e-6;
    EXPECT_NEAR((z.primitive(s + h) - z.primitive(s - h)) / (2 * h), z(s), 1e-8);
  }
}

TEST(ExactTest1, Values) {
  EXPECT_EQ(exact_test1({0.0, 0.3}, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(exact_test1({0.2, 0.5}, 0.5), 2.0 * std::exp(0.3));
  EXPECT_DOUBLE_EQ(exact_test1({0.8, 0.5}, 0.5), std::exp(-0.3));
  EXPECT_DOUBLE_EQ(exact_test1({0.5, 0.1}, 0.5), 2.0);
  const auto z = stefan_test_zeta();
  // Temperature is continuous (= 1) across the front.
  EXPECT_EQ(z(2.0), 1.0);
  EXPECT_EQ(z(1.0), 1.0);
}

TEST(ExactTest1, PdeResidualByFiniteDifferences) {
  const auto z = stefan_test_zeta();
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> U(0.05, 0.95);
  const double h = 1e-4;
  int checked = 0;
  while (checked < 20) {
    const Vec2 x(U(rng), U(rng));
    const double t = U(rng);
    if (std::abs(x.x() - t) < 10 * h) continue;
    auto zu = [&](const Vec2& p, double s) { return z(exact_test1(p, s)); };
    const double dt = (exact_test1(x, t + h) - exact_test1(x, t - h)) / (2 * h);
    const Vec2 ex(h, 0), ey(0, h);
    const double lap = (zu(x + ex, t) - 2 * zu(x, t) + zu(x - ex, t)) / (h * h) +
                       (zu(x + ey, t) - 2 * zu(x, t) + zu(x - ey, t)) / (h * h);
    EXPECT_LE(std::abs(dt - lap), 1e-4) << "x = (" << x.x() << ", " << x.y() << "), t = " << t;
    ++checked;
  }
}

TEST(ExactTest1, ModelGradient) {
  const auto m = make_test1();
  ASSERT_TRUE(m.exact_gradient);
  const Vec2 x(0.7, 0.2);
  const double h = 1e-6;
  const double fd = (exact_test1(x + Vec2(h, 0), 0.3) - exact_test1(x - Vec2(h, 0), 0.3)) / (2 * h);
  EXPECT_NEAR((*m.exact_gradient)(x, 0.3).x(), fd, 1e-8);
  EXPECT_EQ((*m.exact_gradient)(x, 0.3).y(), 0.0);
}

TEST(Noise, Amplitude) {
  auto m = make_test2(1.0);
  EXPECT_EQ(noise_amplitude(m, Eigen::VectorXd::Zero(4)), Eigen::VectorXd::Zero(4));
  EXPECT_NEAR(noise_amplitude(m, Eigen::VectorXd::Constant(3, 2.0))[1], 1.224744871, 1e-9);
  m.noise_factor = 0.0;
  EXPECT_EQ(noise_amplitude(m, Eigen::VectorXd::Constant(3, 2.0)), Eigen::VectorXd::Zero(3));
}

TEST(Noise, GrowthBound) {
  // ||g(u)||^2 <= nf^2 int Xi(u), pointwise version.
  auto m = make_test2(3.0);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> U(-5.0, 5.0);
  for (int i = 0; i < 1000; ++i) {
    const double s = U(rng);
    EXPECT_LE(m.noise(s) * m.noise(s), 9.0 * m.xi(s) * (1 + 1e-14));
    EXPECT_GE(m.noise(s), 0.0);
  }
}

TEST(Models, Test2Data) {
  const auto m = make_test2();
  EXPECT_EQ(m.initial({0.3, 0.4}), 2.0);
  EXPECT_EQ(m.boundary({0.0, 0.4}, 0.5), -1.0);
  EXPECT_FALSE(m.exact);
  EXPECT_EQ(m.mushy_interval, std::make_pair(1.0, 2.0));
}
