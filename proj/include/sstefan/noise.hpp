#pragma once

// Reproducible Brownian increments on a dyadic time grid.
//
// Generator: Philox4x32-10 (Salmon et al., SC'11), key = 64-bit master seed,
// counter = (step low, step high, path, mode). Each counter block yields two
// 53-bit uniforms in (0, 1); the normal is the cosine branch of Box-Muller.
// Any increment can therefore be computed on its own, on any platform.
//
// Coarse increments are pairwise (binary-tree) sums over aligned blocks of
// fine increments, so every coarsening level shares the same partial sums
// bit for bit.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace sstefan {

namespace philox {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

inline Counter round(const Counter& c, const Key& k) {
  constexpr std::uint64_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
  const std::uint64_t p0 = m0 * c[0];
  const std::uint64_t p1 = m1 * c[2];
  return {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
          static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
}

inline Counter philox4x32_10(Counter c, Key k) {
  constexpr std::uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
  for (int i = 0; i < 10; ++i) {
    if (i > 0) {
      k[0] += w0;
      k[1] += w1;
    }
    c = round(c, k);
  }
  return c;
}

}  // namespace philox

/// Standard normal deviate for (seed, path, mode, step).
inline double standard_normal(std::uint64_t seed, std::uint32_t path, std::uint32_t mode, std::uint64_t step) {
  const philox::Counter ctr{static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32), path, mode};
  const philox::Key key{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  const auto r = philox::philox4x32_10(ctr, key);
  const std::uint64_t a = (static_cast<std::uint64_t>(r[0]) << 32) | r[1];
  const std::uint64_t b = (static_cast<std::uint64_t>(r[2]) << 32) | r[3];
  constexpr double scale = 0x1.0p-53;
  const double u1 = (static_cast<double>(a >> 11) + 0.5) * scale;
  const double u2 = (static_cast<double>(b >> 11) + 0.5) * scale;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

/// Pairwise sum of a power-of-two length block.
inline double tree_sum(std::span<const double> x) {
  if (x.size() == 1) return x[0];
  const std::size_t half = x.size() / 2;
  return tree_sum(x.first(half)) + tree_sum(x.subspan(half));
}

/// Truncated Q-Wiener expansion W = sum_k q_k W_k e_k on the unit square.
/// Mode 0 is the constant function 1 (and uses the scalar stream); modes
/// k >= 1 are 2 sin(a pi x) sin(b pi y), ordered by a + b, then a.
struct QWienerSpec {
  std::vector<double> q;

  std::size_t num_modes() const noexcept { return q.size(); }

  static std::pair<int, int> sine_indices(std::size_t k) {
    // k = 1 -> (1,1), 2 -> (1,2), 3 -> (2,1), 4 -> (1,3), ...
    std::size_t idx = 1;
    for (int s = 2;; ++s)
      for (int a = 1; a < s; ++a, ++idx)
        if (idx == k) return {a, s - a};
  }
  static double basis(std::size_t k, double x, double y) {
    if (k == 0) return 1.0;
    const auto [a, b] = sine_indices(k);
    return 2.0 * std::sin(a * M_PI * x) * std::sin(b * M_PI * y);
  }
  /// q_k = decay^k scaled so mode 0 has weight 1.
  static QWienerSpec geometric(std::size_t modes, double decay) {
    QWienerSpec s;
    for (std::size_t k = 0; k < modes; ++k) s.q.push_back(std::pow(decay, static_cast<double>(k)));
    return s;
  }
};

class BrownianDriver {
 public:
  static BrownianDriver generate(std::uint64_t seed, std::uint32_t path, std::size_t n_max, double final_time = 1.0,
                                 std::size_t modes = 1) {
    if (n_max == 0 || !std::has_single_bit(n_max)) throw std::invalid_argument("N_max must be a power of two");
    if (modes == 0) throw std::invalid_argument("need at least one noise mode");
    BrownianDriver d;
    d.seed_ = seed;
    d.path_ = path;
    d.n_max_ = n_max;
    d.final_time_ = final_time;
    const double sd = std::sqrt(final_time / static_cast<double>(n_max));
    d.fine_.resize(modes);
    for (std::size_t k = 0; k < modes; ++k) {
      d.fine_[k].resize(n_max);
      for (std::size_t n = 0; n < n_max; ++n)
        d.fine_[k][n] = sd * standard_normal(seed, path, static_cast<std::uint32_t>(k), n);
    }
    return d;
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint32_t path() const noexcept { return path_; }
  std::size_t n_max() const noexcept { return n_max_; }
  std::size_t num_modes() const noexcept { return fine_.size(); }
  double final_time() const noexcept { return final_time_; }
  const std::vector<double>& fine(std::size_t mode = 0) const { return fine_.at(mode); }

  /// Increments on the uniform grid with `n` steps (n must divide N_max).
  std::vector<double> increments_for(std::size_t n, std::size_t mode = 0) const {
    if (n == 0 || n > n_max_ || n_max_ % n != 0)
      throw std::invalid_argument(std::to_string(n) + " does not divide N_max = " + std::to_string(n_max_));
    const std::size_t block = n_max_ / n;
    const auto& f = fine_.at(mode);
    std::vector<double> out(n);
    for (std::size_t j = 0; j < n; ++j) out[j] = tree_sum(std::span<const double>(f).subspan(j * block, block));
    return out;
  }

  /// W(T) for the scalar mode.
  double terminal_value() const { return tree_sum(fine_.front()); }

  /// Binary file: u64 seed, u64 N_max, u64 count, then `count` little-endian
  /// doubles (mode-major fine increments).
  void save(const std::filesystem::path& file) const {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error(file.string() + ": cannot open for writing");
    auto put_u64 = [&out](std::uint64_t v) {
      for (int b = 0; b < 8; ++b) out.put(static_cast<char>((v >> (8 * b)) & 0xFF));
    };
    put_u64(seed_);
    put_u64(n_max_);
    put_u64(n_max_ * fine_.size());
    for (const auto& mode : fine_)
      for (double x : mode) put_u64(std::bit_cast<std::uint64_t>(x));
    if (!out) throw std::runtime_error(file.string() + ": write failed");
  }

  static BrownianDriver load(const std::filesystem::path& file, std::uint32_t path, double final_time = 1.0) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error(file.string() + ": cannot open");
    auto get_u64 = [&in, &file]() {
      std::uint64_t v = 0;
      for (int b = 0; b < 8; ++b) {
        const int ch = in.get();
        if (ch == EOF) throw std::runtime_error(file.string() + ": truncated noise file");
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(ch)) << (8 * b);
      }
      return v;
    };
    BrownianDriver d;
    d.seed_ = get_u64();
    d.n_max_ = get_u64();
    const std::uint64_t count = get_u64();
    if (d.n_max_ == 0 || count % d.n_max_ != 0) throw std::runtime_error(file.string() + ": inconsistent header");
    d.path_ = path;
    d.final_time_ = final_time;
    d.fine_.assign(count / d.n_max_, std::vector<double>(d.n_max_));
    for (auto& mode : d.fine_)
      for (double& x : mode) x = std::bit_cast<double>(get_u64());
    return d;
  }

 private:
  std::uint64_t seed_ = 0;
  std::uint32_t path_ = 0;
  std::size_t n_max_ = 0;
  double final_time_ = 1.0;
  std::vector<std::vector<double>> fine_;  // [mode][step]
};

/// Per-anchor spatial increment sum_k q_k dW_k^(n) e_k(x_i) on the `n_steps` grid.
inline Eigen::VectorXd q_wiener_increment(const BrownianDriver& driver, const QWienerSpec& spec, std::size_t n_steps,
                                          std::size_t step, const std::vector<Eigen::Vector2d>& anchors) {
  if (spec.num_modes() == 0) throw std::invalid_argument("Q-Wiener mode not configured");
  if (spec.num_modes() > driver.num_modes())
    throw std::invalid_argument("driver carries fewer modes than the Q-Wiener spec");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(anchors.size()));
  const std::size_t block = driver.n_max() / n_steps;
  for (std::size_t k = 0; k < spec.num_modes(); ++k) {
    if (driver.n_max() % n_steps != 0 || step >= n_steps) throw std::invalid_argument("bad step for Q-Wiener increment");
    const double dw = tree_sum(std::span<const double>(driver.fine(k)).subspan(step * block, block));
    for (std::size_t i = 0; i < anchors.size(); ++i)
      out[static_cast<Eigen::Index>(i)] += spec.q[k] * dw * QWienerSpec::basis(k, anchors[i].x(), anchors[i].y());
  }
  return out;
}

/// Smallest power of two N with T / N <= h^2 (relative slack 1e-12).
inline std::size_t steps_for_mesh_size(double h, double final_time = 1.0) {
  std::size_t n = 1;
  while (final_time / static_cast<double>(n) > h * h * (1.0 + 1e-12)) n *= 2;
  return n;
}

}  // namespace sstefan
