#pragma once

// Implicit-diffusion, explicit-noise time stepping for
//   m_i (u_i^{n+1} - u_i^n) + dt (A zeta(u^{n+1}))_i = m_i g(u_i^n) dW_i
// on the free dofs, with a damped semismooth Newton solve per step.

#include "sstefan/discretisations.hpp"
#include "sstefan/noise.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <optional>
#include <sstream>

namespace sstefan {

/// Line-search merit. `Energy` is the convex potential
///   Phi(v) = sum_i m_i Xi(v_i) + (1 / 2dt) |b - M v|^2_{A^-1}
/// whose gradient is (1/dt) M A^-1 G(v), so the Newton direction is a descent
/// direction and the sufficient-decrease test is Armijo on Phi. `Residual`
/// accepts when ||G(v + theta d)|| <= (1 - c theta) ||G(v)||.
enum class Merit { Energy, Residual };

struct NewtonConfig {
  double tolerance = 1e-9;  // relative: stop when ||G|| <= tolerance (1 + ||rhs||)
  int max_iterations = 50;
  double damping = 0.5;
  int max_halvings = 30;
  double sufficient_decrease = 0.25;
  Merit merit = Merit::Energy;
  bool condense = true;  // eliminate HMM cell unknowns in the linear solves

  void validate() const {
    if (!(tolerance > 0.0)) throw std::invalid_argument("Newton tolerance must be positive");
    if (max_iterations < 1) throw std::invalid_argument("Newton needs at least one iteration");
    if (!(damping > 0.0 && damping < 1.0)) throw std::invalid_argument("Newton damping must lie in (0, 1)");
    if (max_halvings < 0) throw std::invalid_argument("negative halving cap");
  }
};

struct SchemeState {
  std::size_t step = 0;
  double time = 0.0;
  Eigen::VectorXd u;
  Eigen::VectorXd zeta;
  int newton_iterations = 0;  // of the step that produced this state
  int relaxations = 0;        // iterations with a damped step or a halving-cap hit
  int cap_hits = 0;           // halving cap reached, full step taken
  std::vector<double> residuals;
};

class NewtonFailure : public std::runtime_error {
 public:
  NewtonFailure(std::size_t step, std::vector<double> history, const std::string& why)
      : std::runtime_error(describe(step, history, why)), step_(step), history_(std::move(history)) {}

  std::size_t step() const noexcept { return step_; }
  const std::vector<double>& residual_history() const noexcept { return history_; }

 private:
  static std::string describe(std::size_t step, const std::vector<double>& h, const std::string& why) {
    std::ostringstream s;
    s << "Newton failed at step " << step << ": " << why << "; residuals";
    s.precision(3);
    for (double r : h) s << ' ' << std::scientific << r;
    return s.str();
  }

  std::size_t step_;
  std::vector<double> history_;
};

/// Sparse LU of J with a solution-accuracy check.
inline Eigen::VectorXd solve_linear(const SparseMatrix& J, const Eigen::VectorXd& b) {
  if (J.rows() != J.cols() || J.rows() != b.size()) throw std::invalid_argument("solve_linear: dimension mismatch");
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
  SparseMatrix Jc = J;
  Jc.makeCompressed();
  lu.compute(Jc);
  if (lu.info() != Eigen::Success) throw std::runtime_error("solve_linear: singular matrix (" + lu.lastErrorMessage() + ")");
  Eigen::VectorXd x = lu.solve(b);
  if (!((Jc * x - b).norm() <= 1e-10 * (1.0 + b.norm())))
    throw std::runtime_error("solve_linear: residual above tolerance");
  return x;
}

class Stepper {
 public:
  Stepper(std::shared_ptr<const GradientDiscretisation> gd, const SparseMatrix& A, StefanModel model,
          NewtonConfig config = {})
      : gd_(std::move(gd)), model_(std::move(model)), config_(config) {
    config_.validate();
    const int n = gd_->num_dofs();
    if (A.rows() != n || A.cols() != n) throw std::invalid_argument("stiffness does not match the discretisation");
    free_ = gd_->free_dofs();
    pos_.assign(static_cast<std::size_t>(n), -1);
    for (std::size_t i = 0; i < free_.size(); ++i) pos_[free_[i]] = static_cast<int>(i);
    std::vector<int> fixed;
    for (int i = 0; i < n; ++i)
      if (gd_->dirichlet[i]) fixed.push_back(i);
    fixed_ = fixed;
    A_ff_ = restrict_matrix(A, free_, free_);
    A_fd_ = restrict_matrix(A, free_, fixed_);
    mass_f_.resize(static_cast<Eigen::Index>(free_.size()));
    for (std::size_t i = 0; i < free_.size(); ++i) mass_f_[static_cast<Eigen::Index>(i)] = gd_->mass[free_[i]];
    const double fallback = gd_->mass.sum() / std::max(1, n);
    weight_ = mass_f_.unaryExpr([fallback](double m) { return 1.0 / (m > 0.0 ? m : fallback); });
    build_jacobian_pattern();
    if (config_.condense && gd_->scheme == Scheme::Hmm) setup_condensation();
  }

  const GradientDiscretisation& discretisation() const noexcept { return *gd_; }
  const StefanModel& model() const noexcept { return model_; }
  const NewtonConfig& config() const noexcept { return config_; }
  const std::vector<int>& free_dofs() const noexcept { return free_; }
  bool condensing() const noexcept { return condensed_.has_value(); }

  /// u^0 = I_D u_0 with the Dirichlet datum at t = 0 on boundary dofs.
  SchemeState initial_state(double t0 = 0.0) const {
    SchemeState s;
    s.time = t0;
    s.u = gd_->interpolate(model_.initial);
    for (int i : fixed_) s.u[i] = model_.boundary(gd_->anchors[i], t0);
    s.zeta = apply(s.u, model_.zeta);
    return s;
  }

  /// Mass-weighted norm sqrt(sum G_i^2 / m_i) over free dofs.
  double residual_norm(const Eigen::VectorXd& g) const { return std::sqrt(g.cwiseAbs2().dot(weight_)); }

  /// One step; `dw` holds the Brownian increment per dof.
  SchemeState step(const SchemeState& state, const Eigen::VectorXd& dw, double dt) const {
    if (!(dt > 0.0)) throw std::invalid_argument("time step must be positive");
    gd_->check_size(state.u);
    gd_->check_size(dw);
    const double t1 = state.time + dt;
    const auto nf = static_cast<Eigen::Index>(free_.size());

    Eigen::VectorXd zeta_fixed(static_cast<Eigen::Index>(fixed_.size()));
    SchemeState next;
    next.step = state.step + 1;
    next.time = t1;
    next.u = state.u;
    for (std::size_t k = 0; k < fixed_.size(); ++k) {
      const int i = fixed_[k];
      next.u[i] = model_.boundary(gd_->anchors[i], t1);
      zeta_fixed[static_cast<Eigen::Index>(k)] = model_.zeta(next.u[i]);
    }

    // rhs = m u^n + m g(u^n) dW - dt A_fd zeta(u_D^{n+1})
    Eigen::VectorXd rhs(nf);
    for (Eigen::Index k = 0; k < nf; ++k) {
      const int i = free_[static_cast<std::size_t>(k)];
      rhs[k] = mass_f_[k] * (state.u[i] + model_.noise(state.u[i]) * dw[i]);
    }
    const Eigen::VectorXd boundary_flux = dt * (A_fd_ * zeta_fixed);
    const double scale = 1.0 + residual_norm(rhs);
    rhs -= boundary_flux;

    Eigen::VectorXd v(nf);
    for (Eigen::Index k = 0; k < nf; ++k) v[k] = state.u[free_[static_cast<std::size_t>(k)]];

    auto residual = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
      return mass_f_.cwiseProduct(x) + dt * (A_ff_ * apply(x, model_.zeta)) - rhs;
    };

    Eigen::VectorXd G = residual(v);
    double norm = residual_norm(G);
    next.residuals.push_back(norm);
    if (!std::isfinite(norm) || !std::isfinite(scale))
      throw NewtonFailure(next.step, next.residuals, "non-finite state or noise term");
    const double tol = config_.tolerance * scale;
    int it = 0;
    while (norm > tol) {
      if (it == config_.max_iterations)
        throw NewtonFailure(next.step, next.residuals, "no convergence in " + std::to_string(it) + " iterations");
      ++it;
      Eigen::VectorXd slope(nf);
      for (Eigen::Index k = 0; k < nf; ++k) slope[k] = model_.zeta.derivative(v[k]);
      Eigen::VectorXd delta;
      try {
        delta = newton_direction(slope, dt, -G);
      } catch (const std::runtime_error& e) {
        throw NewtonFailure(next.step, next.residuals, e.what());
      }

      double theta = 1.0;
      Eigen::VectorXd trial = v + delta;
      Eigen::VectorXd Gt = residual(trial);
      double nt = residual_norm(Gt);
      if (nt > tol) {
        const LineModel line = config_.merit == Merit::Energy ? energy_line(v, delta, rhs, dt) : LineModel{};
        auto accept = [&](double th, double n_trial) {
          if (config_.merit == Merit::Residual) return n_trial <= (1.0 - config_.sufficient_decrease * th) * norm;
          return line.descent < 0.0 && energy_change(line, v, delta, th, dt) <= config_.sufficient_decrease * th * line.descent;
        };
        int halvings = 0;
        while (!accept(theta, nt) && halvings < config_.max_halvings) {
          theta *= config_.damping;
          ++halvings;
          trial = v + theta * delta;
          Gt = residual(trial);
          nt = residual_norm(Gt);
        }
        if (!accept(theta, nt)) {
          ++next.cap_hits;
          ++next.relaxations;
          theta = 1.0;
          trial = v + delta;
          Gt = residual(trial);
          nt = residual_norm(Gt);
        } else if (theta < 1.0) {
          ++next.relaxations;
        }
      }
      if (!std::isfinite(nt)) throw NewtonFailure(next.step, next.residuals, "non-finite residual");
      v = std::move(trial);
      G = std::move(Gt);
      norm = nt;
      next.residuals.push_back(norm);
    }
    next.newton_iterations = it;
    for (Eigen::Index k = 0; k < nf; ++k) next.u[free_[static_cast<std::size_t>(k)]] = v[k];
    next.zeta = apply(next.u, model_.zeta);
    return next;
  }

  /// Newton direction; exposed so condensed and full solves can be compared.
  Eigen::VectorXd newton_direction(const Eigen::VectorXd& slope, double dt, const Eigen::VectorXd& b,
                                   bool allow_condensation = true) const {
    if (allow_condensation && condensed_) {
      bool ok = true;
      for (std::size_t a = 0; a < condensed_->cell_pos.size(); ++a) {
        const int k = condensed_->cell_pos[a];
        ok = ok && mass_f_[k] + dt * condensed_->a_cc[a] * slope[k] != 0.0;
      }
      if (ok) return condensed_solve(slope, dt, b);
    }
    fill_jacobian(slope, dt);
    if (!analysed_) {
      lu_.analyzePattern(J_);
      analysed_ = true;
    }
    lu_.factorize(J_);
    if (lu_.info() != Eigen::Success) throw std::runtime_error("singular Jacobian (" + lu_.lastErrorMessage() + ")");
    return lu_.solve(b);
  }

  /// Full (uncondensed) Jacobian D_m + dt A_ff diag(zeta').
  SparseMatrix jacobian(const Eigen::VectorXd& slope, double dt) const {
    fill_jacobian(slope, dt);
    return J_;
  }

 private:
  struct LineModel {
    double descent = 0.0;  // directional derivative of Phi along delta
    double cross = 0.0;    // r0^T A^-1 M delta
    double curv = 0.0;     // (M delta)^T A^-1 M delta
  };

  LineModel energy_line(const Eigen::VectorXd& v, const Eigen::VectorXd& delta, const Eigen::VectorXd& rhs,
                        double dt) const {
    if (!a_chol_) {
      a_chol_.emplace();
      a_chol_->compute(A_ff_);
      if (a_chol_->info() != Eigen::Success) throw std::runtime_error("stiffness on free dofs is not positive definite");
    }
    const Eigen::VectorXd d = mass_f_.cwiseProduct(delta);
    const Eigen::VectorXd s = a_chol_->solve(d);
    const Eigen::VectorXd r0 = rhs - mass_f_.cwiseProduct(v);
    LineModel m;
    m.cross = r0.dot(s);
    m.curv = d.dot(s);
    double zd = 0.0;
    for (Eigen::Index k = 0; k < v.size(); ++k) zd += mass_f_[k] * model_.zeta(v[k]) * delta[k];
    m.descent = zd - m.cross / dt;
    return m;
  }

  double energy_change(const LineModel& m, const Eigen::VectorXd& v, const Eigen::VectorXd& delta, double theta,
                       double dt) const {
    double e = 0.0;
    for (Eigen::Index k = 0; k < v.size(); ++k)
      e += mass_f_[k] * (model_.xi(v[k] + theta * delta[k]) - model_.xi(v[k]));
    return e + (theta * theta * m.curv - 2.0 * theta * m.cross) / (2.0 * dt);
  }

  struct Condensation {
    std::vector<int> cell_pos, edge_pos;  // positions within the free set
    std::vector<double> a_cc;             // diagonal of A restricted to cells
    SparseMatrix A_ce, A_ec, A_ee;
    std::vector<std::vector<std::pair<int, double>>> cell_edges;  // per cell: (edge index, A_ce)
    std::vector<std::vector<std::pair<int, double>>> edge_cells;  // per cell: (edge index, A_ec)
  };

  void build_jacobian_pattern() {
    std::vector<Eigen::Triplet<double>> trip;
    for (int k = 0; k < A_ff_.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(A_ff_, k); it; ++it) trip.emplace_back(it.row(), it.col(), 0.0);
    for (Eigen::Index i = 0; i < A_ff_.rows(); ++i) trip.emplace_back(i, i, 0.0);
    J_.resize(A_ff_.rows(), A_ff_.cols());
    J_.setFromTriplets(trip.begin(), trip.end());
    J_.makeCompressed();
    a_vals_.assign(static_cast<std::size_t>(J_.nonZeros()), 0.0);
    diag_.assign(static_cast<std::size_t>(J_.nonZeros()), -1);
    for (int k = 0; k < J_.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(J_, k); it; ++it) {
        const auto idx = static_cast<std::size_t>(&it.valueRef() - J_.valuePtr());
        a_vals_[idx] = A_ff_.coeff(it.row(), it.col());
        if (it.row() == it.col()) diag_[idx] = static_cast<int>(it.row());
      }
  }

  void fill_jacobian(const Eigen::VectorXd& slope, double dt) const {
    for (int k = 0; k < J_.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(J_, k); it; ++it) {
        const auto idx = static_cast<std::size_t>(&it.valueRef() - J_.valuePtr());
        it.valueRef() = dt * a_vals_[idx] * slope[it.col()] + (diag_[idx] >= 0 ? mass_f_[it.row()] : 0.0);
      }
  }

  void setup_condensation() {
    Condensation c;
    for (std::size_t k = 0; k < free_.size(); ++k)
      (free_[k] < gd_->num_cell_dofs ? c.cell_pos : c.edge_pos).push_back(static_cast<int>(k));
    // Cell-cell coupling must be diagonal for the elimination to be local.
    std::vector<int> is_cell(free_.size(), -1), edge_index(free_.size(), -1);
    for (std::size_t a = 0; a < c.cell_pos.size(); ++a) is_cell[c.cell_pos[a]] = static_cast<int>(a);
    for (std::size_t a = 0; a < c.edge_pos.size(); ++a) edge_index[c.edge_pos[a]] = static_cast<int>(a);
    c.a_cc.assign(c.cell_pos.size(), 0.0);
    c.cell_edges.resize(c.cell_pos.size());
    c.edge_cells.resize(c.cell_pos.size());
    for (int k = 0; k < A_ff_.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(A_ff_, k); it; ++it) {
        const int rc = is_cell[it.row()], cc = is_cell[it.col()];
        if (rc >= 0 && cc >= 0) {
          if (rc != cc) return;  // not block diagonal: keep the full solve
          c.a_cc[rc] = it.value();
        } else if (rc >= 0) {
          c.cell_edges[rc].emplace_back(edge_index[it.col()], it.value());
        } else if (cc >= 0) {
          c.edge_cells[cc].emplace_back(edge_index[it.row()], it.value());
        }
      }
    c.A_ee = restrict_matrix(A_ff_, c.edge_pos, c.edge_pos);
    // Schur pattern: A_ee plus all edge pairs sharing a cell.
    std::vector<Eigen::Triplet<double>> trip;
    for (int k = 0; k < c.A_ee.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(c.A_ee, k); it; ++it) trip.emplace_back(it.row(), it.col(), 0.0);
    for (std::size_t a = 0; a < c.cell_pos.size(); ++a)
      for (const auto& [e1, v1] : c.edge_cells[a])
        for (const auto& [e2, v2] : c.cell_edges[a]) trip.emplace_back(e1, e2, 0.0);
    for (std::size_t e = 0; e < c.edge_pos.size(); ++e) trip.emplace_back(e, e, 0.0);
    S_.resize(static_cast<Eigen::Index>(c.edge_pos.size()), static_cast<Eigen::Index>(c.edge_pos.size()));
    S_.setFromTriplets(trip.begin(), trip.end());
    S_.makeCompressed();
    condensed_ = std::move(c);
  }

  Eigen::VectorXd condensed_solve(const Eigen::VectorXd& slope, double dt, const Eigen::VectorXd& b) const {
    const Condensation& c = *condensed_;
    const auto ne = static_cast<Eigen::Index>(c.edge_pos.size());
    std::fill(S_.valuePtr(), S_.valuePtr() + S_.nonZeros(), 0.0);
    // J_ee = D_m,e + dt A_ee diag(zeta'_e)
    for (int k = 0; k < c.A_ee.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(c.A_ee, k); it; ++it)
        S_.coeffRef(it.row(), it.col()) += dt * it.value() * slope[c.edge_pos[it.col()]];
    Eigen::VectorXd rhs(ne);
    for (Eigen::Index e = 0; e < ne; ++e) {
      S_.coeffRef(e, e) += mass_f_[c.edge_pos[e]];
      rhs[e] = b[c.edge_pos[e]];
    }
    std::vector<double> jcc(c.cell_pos.size());
    for (std::size_t a = 0; a < c.cell_pos.size(); ++a) {
      const int k = c.cell_pos[a];
      jcc[a] = mass_f_[k] + dt * c.a_cc[a] * slope[k];
      // S -= J_ec J_cc^-1 J_ce; rhs -= J_ec J_cc^-1 b_c
      for (const auto& [e1, v1] : c.edge_cells[a]) {
        const double jec = dt * v1 * slope[k];
        rhs[e1] -= jec * b[k] / jcc[a];
        for (const auto& [e2, v2] : c.cell_edges[a])
          S_.coeffRef(e1, e2) -= jec * (dt * v2 * slope[c.edge_pos[e2]]) / jcc[a];
      }
    }
    if (!s_analysed_) {
      s_lu_.analyzePattern(S_);
      s_analysed_ = true;
    }
    s_lu_.factorize(S_);
    if (s_lu_.info() != Eigen::Success)
      throw std::runtime_error("singular condensed Jacobian (" + s_lu_.lastErrorMessage() + ")");
    const Eigen::VectorXd xe = s_lu_.solve(rhs);
    Eigen::VectorXd x(b.size());
    for (Eigen::Index e = 0; e < ne; ++e) x[c.edge_pos[e]] = xe[e];
    for (std::size_t a = 0; a < c.cell_pos.size(); ++a) {
      const int k = c.cell_pos[a];
      double r = b[k];
      for (const auto& [e, v] : c.cell_edges[a]) r -= dt * v * slope[c.edge_pos[e]] * xe[e];
      x[k] = r / jcc[a];
    }
    return x;
  }

  std::shared_ptr<const GradientDiscretisation> gd_;
  StefanModel model_;
  NewtonConfig config_;
  std::vector<int> free_, fixed_, pos_;
  SparseMatrix A_ff_, A_fd_;
  Eigen::VectorXd mass_f_, weight_;

  // Factorisation workspace; a Stepper is used by one path at a time.
  mutable std::optional<Eigen::SimplicialLDLT<SparseMatrix>> a_chol_;
  mutable SparseMatrix J_;
  std::vector<double> a_vals_;
  std::vector<int> diag_;
  mutable Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu_;
  mutable bool analysed_ = false;
  std::optional<Condensation> condensed_;
  mutable SparseMatrix S_;
  mutable Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> s_lu_;
  mutable bool s_analysed_ = false;
};

/// int Xi(Pi_D u).
inline double discrete_energy(const GradientDiscretisation& gd, const StefanModel& model, const Eigen::VectorXd& u) {
  double e = 0.0;
  for (int i = 0; i < gd.num_dofs(); ++i) e += gd.mass[i] * model.xi(u[i]);
  return e;
}

/// Measure of the dofs whose value lies strictly inside (lo, hi).
inline double mushy_area(const GradientDiscretisation& gd, const Eigen::VectorXd& u, std::pair<double, double> interval) {
  double a = 0.0;
  for (int i = 0; i < gd.num_dofs(); ++i)
    if (u[i] > interval.first && u[i] < interval.second) a += gd.mass[i];
  return a;
}

struct PathSummary {
  SchemeState final_state;
  std::size_t steps = 0;
  long newton_iterations = 0;
  long relaxations = 0;
  long cap_hits = 0;
  int max_newton_iterations = 0;
  double max_energy = 0.0;

  double mean_newton_iterations() const {
    return steps ? static_cast<double>(newton_iterations) / static_cast<double>(steps) : 0.0;
  }
};

using StepObserver = std::function<void(const SchemeState&)>;

/// Runs N steps on the driver's path. Observers see u^0 and every new state.
inline PathSummary run_path(const Stepper& stepper, const BrownianDriver& driver, std::size_t n_steps,
                            const std::vector<StepObserver>& observers = {},
                            const QWienerSpec* qwiener = nullptr) {
  const auto& gd = stepper.discretisation();
  const auto& model = stepper.model();
  const double dt = model.final_time / static_cast<double>(n_steps);
  const std::vector<double> dw_scalar = driver.increments_for(n_steps);

  PathSummary sum;
  SchemeState state = stepper.initial_state();
  sum.max_energy = discrete_energy(gd, model, state.u);
  for (const auto& ob : observers) ob(state);
  Eigen::VectorXd dw(gd.num_dofs());
  for (std::size_t n = 0; n < n_steps; ++n) {
    if (qwiener)
      dw = q_wiener_increment(driver, *qwiener, n_steps, n, gd.anchors);
    else
      dw.setConstant(dw_scalar[n]);
    state = stepper.step(state, dw, dt);
    // Keep the grid times exact rather than accumulated.
    state.time = model.final_time * static_cast<double>(n + 1) / static_cast<double>(n_steps);
    sum.newton_iterations += state.newton_iterations;
    sum.relaxations += state.relaxations;
    sum.cap_hits += state.cap_hits;
    sum.max_newton_iterations = std::max(sum.max_newton_iterations, state.newton_iterations);
    sum.max_energy = std::max(sum.max_energy, discrete_energy(gd, model, state.u));
    for (const auto& ob : observers) ob(state);
  }
  sum.steps = n_steps;
  sum.final_state = std::move(state);
  return sum;
}

}  // namespace sstefan
