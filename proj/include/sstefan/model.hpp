#pragma once

// Stefan problem data: the enthalpy-temperature map zeta, its primitive Xi,
// the multiplicative noise amplitude and the two benchmark problems.

#include "sstefan/mesh.hpp"

#include <functional>
#include <optional>

namespace sstefan {

/// Continuous, nondecreasing, piecewise-linear map with zeta(0) = 0.
class ZetaFunction {
 public:
  /// `breakpoints` strictly increasing; `slopes` has one more entry than
  /// `breakpoints` (slope left of the first breakpoint first).
  ZetaFunction(std::vector<double> breakpoints, std::vector<double> slopes)
      : breaks_(std::move(breakpoints)), slopes_(std::move(slopes)) {
    if (slopes_.size() != breaks_.size() + 1) throw std::invalid_argument("zeta: need breakpoints + 1 slopes");
    for (std::size_t k = 1; k < breaks_.size(); ++k)
      if (!(breaks_[k] > breaks_[k - 1])) throw std::invalid_argument("zeta: breakpoints must increase");
    for (double s : slopes_)
      if (!(s >= 0.0) || !std::isfinite(s)) throw std::invalid_argument("zeta: slopes must be finite and >= 0");
    if (slopes_.front() <= 0.0 || slopes_.back() <= 0.0)
      throw std::invalid_argument("zeta: outer slopes must be positive (coercivity)");

    // Values and primitives at the breakpoints, integrating outward from 0.
    const std::size_t nb = breaks_.size();
    zeta_at_.assign(nb, 0.0);
    xi_at_.assign(nb, 0.0);
    const std::size_t p0 = piece(0.0);
    // Rightwards from 0.
    double s0 = 0.0, z0 = 0.0, x0 = 0.0;
    for (std::size_t k = p0; k < nb; ++k) {
      const double len = breaks_[k] - s0;
      const double slope = slopes_[k];
      x0 += z0 * len + 0.5 * slope * len * len;
      z0 += slope * len;
      zeta_at_[k] = z0;
      xi_at_[k] = x0;
      s0 = breaks_[k];
    }
    // Leftwards from 0.
    s0 = 0.0, z0 = 0.0, x0 = 0.0;
    for (std::size_t k = p0; k-- > 0;) {
      const double len = breaks_[k] - s0;  // negative
      const double slope = slopes_[k + 1];
      x0 += z0 * len + 0.5 * slope * len * len;
      z0 += slope * len;
      zeta_at_[k] = z0;
      xi_at_[k] = x0;
      s0 = breaks_[k];
    }

    lipschitz_ = *std::max_element(slopes_.begin(), slopes_.end());
    coercivity_c_ = std::min(slopes_.front(), slopes_.back());
    coercivity_d_ = 0.0;
    for (std::size_t k = 0; k < nb; ++k)
      coercivity_d_ = std::max(coercivity_d_, coercivity_c_ * std::abs(breaks_[k]) - std::abs(zeta_at_[k]));
    for (std::size_t k = 1; k + 1 < slopes_.size(); ++k)
      if (slopes_[k] == 0.0) {
        plateau_ = {breaks_[k - 1], breaks_[k]};
        break;
      }
  }

  double operator()(double s) const {
    const std::size_t k = piece(s);
    const auto [b, z, x] = anchor(k);
    (void)x;
    return z + slopes_[k] * (s - b);
  }
  /// Right-hand derivative.
  double derivative(double s) const { return slopes_[piece(s)]; }
  /// Xi(s) = int_0^s zeta.
  double primitive(double s) const {
    const std::size_t k = piece(s);
    const auto [b, z, x] = anchor(k);
    const double t = s - b;
    return x + z * t + 0.5 * slopes_[k] * t * t;
  }
  /// Smallest s with zeta(s) = y.
  double inverse(double y) const {
    // zeta is onto R since both outer slopes are positive.
    for (std::size_t k = 0; k < breaks_.size(); ++k) {
      // Flat pieces are never selected: the left end of a plateau is hit first.
      if (y <= zeta_at_[k]) return breaks_[k] + (y - zeta_at_[k]) / slopes_[k];
    }
    const std::size_t last = breaks_.size();
    if (last == 0) return y / slopes_[0];
    return breaks_[last - 1] + (y - zeta_at_[last - 1]) / slopes_[last];
  }

  /// Largest slope, i.e. the Lipschitz constant 1 / L_zeta.
  double lipschitz() const noexcept { return lipschitz_; }
  /// |zeta(s)| >= c |s| - d.
  double coercivity_c() const noexcept { return coercivity_c_; }
  double coercivity_d() const noexcept { return coercivity_d_; }
  /// s^2 <= K1 Xi(s) + K2, from Xi(s) >= (c|s| - d)^2 / (2c).
  double growth_k1() const noexcept { return 4.0 / coercivity_c_; }
  double growth_k2() const noexcept { return 2.0 * coercivity_d_ * coercivity_d_ / (coercivity_c_ * coercivity_c_); }
  /// First zero-slope interval [lo, hi], if any.
  std::optional<std::pair<double, double>> plateau() const { return plateau_; }
  const std::vector<double>& breakpoints() const noexcept { return breaks_; }
  const std::vector<double>& slopes() const noexcept { return slopes_; }

 private:
  std::size_t piece(double s) const {
    return static_cast<std::size_t>(std::upper_bound(breaks_.begin(), breaks_.end(), s) - breaks_.begin());
  }
  // Reference point (s, zeta, Xi) for piece k: its left breakpoint, or the
  // right one for the leftmost piece.
  std::tuple<double, double, double> anchor(std::size_t k) const {
    if (breaks_.empty()) return {0.0, 0.0, 0.0};
    if (k == 0) return {breaks_[0], zeta_at_[0], xi_at_[0]};
    return {breaks_[k - 1], zeta_at_[k - 1], xi_at_[k - 1]};
  }

  std::vector<double> breaks_, slopes_, zeta_at_, xi_at_;
  double lipschitz_ = 1.0, coercivity_c_ = 1.0, coercivity_d_ = 0.0;
  std::optional<std::pair<double, double>> plateau_;
};

/// Unit-slope map with latent-heat plateau on [1, 2]: zeta(u) = u (u <= 1),
/// 1 (1 <= u <= 2), u - 1 (u >= 2).
inline ZetaFunction stefan_test_zeta() { return ZetaFunction({1.0, 2.0}, {1.0, 0.0, 1.0}); }

/// Symmetric 2x2 tensor.
struct Sym2 {
  double xx = 1.0, xy = 0.0, yy = 1.0;

  Vec2 apply(const Vec2& v) const { return {xx * v.x() + xy * v.y(), xy * v.x() + yy * v.y()}; }
  std::pair<double, double> eigenvalues() const {
    const double m = 0.5 * (xx + yy);
    const double r = std::hypot(0.5 * (xx - yy), xy);
    return {m - r, m + r};
  }
};

/// Piecewise-constant (per cell) symmetric, uniformly elliptic tensor field.
class DiffusionTensor {
 public:
  DiffusionTensor(std::size_t num_cells, Sym2 value) : values_(num_cells, value) { update_bounds(); }
  explicit DiffusionTensor(std::vector<Sym2> values) : values_(std::move(values)) { update_bounds(); }

  const Sym2& operator[](std::size_t cell) const { return values_[cell]; }
  std::size_t size() const noexcept { return values_.size(); }
  double lower() const noexcept { return lower_; }
  double upper() const noexcept { return upper_; }

 private:
  void update_bounds() {
    lower_ = std::numeric_limits<double>::infinity();
    upper_ = 0.0;
    for (const auto& s : values_) {
      const auto [lo, hi] = s.eigenvalues();
      lower_ = std::min(lower_, lo);
      upper_ = std::max(upper_, hi);
    }
    if (!(lower_ > 0.0)) throw std::invalid_argument("diffusion tensor is not uniformly elliptic");
  }

  std::vector<Sym2> values_;
  double lower_ = 1.0, upper_ = 1.0;
};

using SpaceFunction = std::function<double(const Vec2&)>;
using SpaceTimeFunction = std::function<double(const Vec2&, double)>;

struct StefanModel {
  ZetaFunction zeta = stefan_test_zeta();
  double noise_factor = 0.0;  // nf
  Sym2 diffusion{};
  SpaceFunction initial;
  SpaceTimeFunction boundary;  // Dirichlet value of u
  std::optional<SpaceTimeFunction> exact;
  std::optional<std::function<Vec2(const Vec2&, double)>> exact_gradient;  // grad u of the exact solution
  double final_time = 1.0;
  std::pair<double, double> mushy_interval{1.0, 2.0};

  double xi(double s) const { return zeta.primitive(s); }
  /// g(u) = nf * sqrt(Xi(u)); noise enters the scheme as g(u^n) dW.
  double noise(double s) const { return noise_factor * std::sqrt(std::max(0.0, zeta.primitive(s))); }
};

inline Eigen::VectorXd noise_amplitude(const StefanModel& model, const Eigen::VectorXd& u) {
  Eigen::VectorXd g(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) g[i] = model.noise(u[i]);
  return g;
}

/// Travelling-front solution: 2 exp(t - x1) behind the front x1 = t, exp(t - x1) ahead.
/// On the front the liquid value 2 is used, except at t = 0 where the
/// initial state is taken fully solid.
inline double exact_test1(const Vec2& x, double t) {
  const double e = std::exp(t - x.x());
  const bool liquid = x.x() < t || (x.x() == t && t > 0.0);
  return liquid ? 2.0 * e : e;
}

/// Test 1: deterministic front with exact solution as initial and boundary data.
inline StefanModel make_test1(double nf = 0.0) {
  StefanModel m;
  m.noise_factor = nf;
  m.initial = [](const Vec2& x) { return exact_test1(x, 0.0); };
  m.boundary = [](const Vec2& x, double t) { return exact_test1(x, t); };
  m.exact = [](const Vec2& x, double t) { return exact_test1(x, t); };
  m.exact_gradient = [](const Vec2& x, double t) { return Vec2(-exact_test1(x, t), 0.0); };
  return m;
}

/// Test 2: liquid at u = 2 cooled by zeta(u) = -1 on the boundary.
inline StefanModel make_test2(double nf = 1.0) {
  StefanModel m;
  m.noise_factor = nf;
  m.initial = [](const Vec2&) { return 2.0; };
  const double ub = m.zeta.inverse(-1.0);
  m.boundary = [ub](const Vec2&, double) { return ub; };
  return m;
}

}  // namespace sstefan
