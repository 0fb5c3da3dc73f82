#pragma once

// Monte Carlo ensembles over mesh levels: coarse-to-fine interpolation,
// relative space-time errors against a reference level, norm values,
// Newton statistics and mushy-region time series.

#include "sstefan/mesh_families.hpp"
#include "sstefan/stepper.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace sstefan {

enum class InterpolationMode { GradientLinear, Constant };

/// Matrix P with (I_R w) = P w, mapping coarse dofs to fine-dof anchors.
///   MLP1 coarse, gradient-linear: coarse P1 function evaluated at the anchor.
///   MLP1 coarse, constant: value of the vertex whose dual cell holds the
///     anchor inside the located triangle (largest barycentric weight).
///   HMM coarse, gradient-linear: w_K + grad_K w . (x - x_K).
///   HMM coarse, constant: w_K.
inline SparseMatrix interpolation_matrix(const GradientDiscretisation& coarse, const GradientDiscretisation& fine,
                                         InterpolationMode mode) {
  const int nf = fine.num_dofs(), nc = coarse.num_dofs();
  if (coarse.mesh == fine.mesh && coarse.scheme == fine.scheme) {
    SparseMatrix I(nf, nc);
    I.setIdentity();
    return I;
  }
  const CellLocator locator(coarse.mesh);
  const auto& X = coarse.mesh->vertices();
  const auto& geom = *coarse.geometry;
  std::vector<Eigen::Triplet<double>> trip;
  for (int i = 0; i < nf; ++i) {
    const Vec2& x = fine.anchors[i];
    const int K = locator.locate(x);
    const auto& cell = coarse.mesh->cells()[K];
    if (coarse.scheme == Scheme::Mlp1) {
      const Vec2 &a = X[cell.vertices[0]], &b = X[cell.vertices[1]], &c = X[cell.vertices[2]];
      const double area2 = cross(b - a, c - a);
      const std::array<double, 3> lam{cross(b - x, c - x) / area2, cross(c - x, a - x) / area2,
                                      cross(a - x, b - x) / area2};
      if (mode == InterpolationMode::GradientLinear) {
        for (int k = 0; k < 3; ++k) trip.emplace_back(i, cell.vertices[k], lam[k]);
      } else {
        const int k = static_cast<int>(std::max_element(lam.begin(), lam.end()) - lam.begin());
        trip.emplace_back(i, cell.vertices[k], 1.0);
      }
    } else {
      trip.emplace_back(i, K, 1.0);
      if (mode == InterpolationMode::GradientLinear) {
        const Vec2 shift = x - geom.cell_center[K];
        for (std::size_t k = 0; k < cell.edges.size(); ++k) {
          const int e = cell.edges[k];
          const double w = geom.edge_length[e] * geom.normal[geom.local(K, static_cast<int>(k))].dot(shift) /
                           geom.cell_area[K];
          trip.emplace_back(i, coarse.num_cell_dofs + e, w);
        }
      }
    }
  }
  SparseMatrix P(nf, nc);
  P.setFromTriplets(trip.begin(), trip.end());
  return P;
}

inline Eigen::VectorXd interpolate_to_fine(const GradientDiscretisation& coarse, const Eigen::VectorXd& w,
                                           const GradientDiscretisation& fine, InterpolationMode mode) {
  coarse.check_size(w);
  return interpolation_matrix(coarse, fine, mode) * w;
}

/// Numerators and denominators of the three relative errors for one path.
struct ErrorSums {
  double z_num = 0.0, z_den = 0.0;
  double grad_num = 0.0, grad_den = 0.0;
  double xi_num = 0.0, xi_den = 0.0;

  ErrorSums& operator+=(const ErrorSums& o) {
    z_num += o.z_num;
    z_den += o.z_den;
    grad_num += o.grad_num;
    grad_den += o.grad_den;
    xi_num += o.xi_num;
    xi_den += o.xi_den;
    return *this;
  }
  /// Time slab of length dt with reference zeta values `z_ref` and
  /// interpolated coarse values `z_int` (both on the fine dofs).
  void add_slab(const GradientDiscretisation& fine, const Eigen::VectorXd& z_ref, const Eigen::VectorXd& z_int,
                double dt) {
    const Eigen::VectorXd diff = z_ref - z_int;
    z_num += dt * fine.mass.dot(diff.cwiseAbs2());
    z_den += dt * fine.mass.dot(z_ref.cwiseAbs2());
    grad_num += dt * fine.gradient_norm2(diff);
    grad_den += dt * fine.gradient_norm2(z_ref);
  }
  void add_final(const GradientDiscretisation& fine, const Eigen::VectorXd& xi_ref, const Eigen::VectorXd& xi_int) {
    xi_num += fine.mass.dot((xi_ref - xi_int).cwiseAbs());
    xi_den += fine.mass.dot(xi_ref);
  }
};

struct ErrorTriple {
  double zeta = 0.0;  // E_{Pi zeta}
  double grad = 0.0;  // E_{grad zeta}
  double xi = 0.0;    // E_Xi
};

/// Expectations are means over paths: the squared norms are averaged before
/// the root is taken.
inline ErrorTriple relative_errors(const ErrorSums& total) {
  auto ratio = [](double n, double d) { return d > 0.0 ? n / d : (n > 0.0 ? std::numeric_limits<double>::infinity() : 0.0); };
  return {std::sqrt(ratio(total.z_num, total.z_den)), std::sqrt(ratio(total.grad_num, total.grad_den)),
          ratio(total.xi_num, total.xi_den)};
}

/// Quadrature for errors against the exact solution: Pi_D v is integrated
/// over the geometric reconstruction regions, grad_D v over its regions.
class ExactErrorRule {
 public:
  ExactErrorRule(const GradientDiscretisation& gd, const StefanModel& model) : model_(&model) {
    if (!model.exact || !model.exact_gradient) throw std::invalid_argument("model has no exact solution");
    const auto regions = reconstruction_regions(gd);
    for (std::size_t i = 0; i < regions.size(); ++i)
      for (const auto& t : regions[i]) add_rule(t, static_cast<int>(i), value_owner_, value_x_, value_w_);
    for (std::size_t r = 0; r < gd.regions.size(); ++r)
      for (const auto& t : gradient_region_triangle(gd, r)) add_rule(t, static_cast<int>(r), grad_owner_, grad_x_, grad_w_);
  }

  /// Slab (t - dt, t] with the discrete state held constant and the exact
  /// solution sampled at t.
  void add_slab(ErrorSums& sums, const GradientDiscretisation& gd, const Eigen::VectorXd& zeta, double t,
                double dt) const {
    const auto& m = *model_;
    double num = 0.0, den = 0.0;
    for (std::size_t q = 0; q < value_x_.size(); ++q) {
      const double ze = m.zeta((*m.exact)(value_x_[q], t));
      num += value_w_[q] * std::pow(zeta[value_owner_[q]] - ze, 2);
      den += value_w_[q] * ze * ze;
    }
    sums.z_num += dt * num;
    sums.z_den += dt * den;
    const std::vector<Vec2> g = gd.gradient(zeta);
    num = den = 0.0;
    for (std::size_t q = 0; q < grad_x_.size(); ++q) {
      const Vec2& x = grad_x_[q];
      const Vec2 ge = m.zeta.derivative((*m.exact)(x, t)) * (*m.exact_gradient)(x, t);
      num += grad_w_[q] * (g[grad_owner_[q]] - ge).squaredNorm();
      den += grad_w_[q] * ge.squaredNorm();
    }
    sums.grad_num += dt * num;
    sums.grad_den += dt * den;
  }

  void add_final(ErrorSums& sums, const Eigen::VectorXd& u, double t) const {
    const auto& m = *model_;
    for (std::size_t q = 0; q < value_x_.size(); ++q) {
      const double xe = m.xi((*m.exact)(value_x_[q], t));
      sums.xi_num += value_w_[q] * std::abs(m.xi(u[value_owner_[q]]) - xe);
      sums.xi_den += value_w_[q] * xe;
    }
  }

 private:
  static void add_rule(const Triangle& t, int owner, std::vector<int>& o, std::vector<Vec2>& x, std::vector<double>& w) {
    const double area = 0.5 * std::abs(cross(t[1] - t[0], t[2] - t[0]));
    for (int k = 0; k < 3; ++k) {
      o.push_back(owner);
      x.push_back(0.5 * (t[k] + t[(k + 1) % 3]));
      w.push_back(area / 3.0);
    }
  }

  const StefanModel* model_;
  std::vector<int> value_owner_, grad_owner_;
  std::vector<Vec2> value_x_, grad_x_;
  std::vector<double> value_w_, grad_w_;
};

/// A stored trajectory: u^1..u^N on a uniform grid of [0, T].
struct Trajectory {
  std::vector<Eigen::VectorXd> states;
};

/// Errors from explicit trajectories. Each coarse trajectory is extended
/// piecewise constant in time onto the reference grid, whose step count must
/// be a multiple of the coarse one.
inline ErrorTriple error_metrics(const std::vector<Trajectory>& reference, const std::vector<Trajectory>& coarse,
                                 const GradientDiscretisation& gd_ref, const GradientDiscretisation& gd_coarse,
                                 const StefanModel& model) {
  if (reference.size() != coarse.size() || reference.empty())
    throw std::invalid_argument("error_metrics: need the same nonzero number of reference and coarse paths");
  const SparseMatrix P_lin = interpolation_matrix(gd_coarse, gd_ref, InterpolationMode::GradientLinear);
  const SparseMatrix P_const = interpolation_matrix(gd_coarse, gd_ref, InterpolationMode::Constant);
  ErrorSums total;
  for (std::size_t p = 0; p < reference.size(); ++p) {
    const auto& R = reference[p].states;
    const auto& C = coarse[p].states;
    if (R.empty() || C.empty() || R.size() % C.size() != 0)
      throw std::invalid_argument("error_metrics: reference grid is not a refinement of the coarse grid");
    const std::size_t ratio = R.size() / C.size();
    const double dt = model.final_time / static_cast<double>(R.size());
    for (std::size_t n = 0; n < R.size(); ++n) {
      gd_ref.check_size(R[n]);
      gd_coarse.check_size(C[n / ratio]);
      total.add_slab(gd_ref, apply(R[n], model.zeta), P_lin * apply(C[n / ratio], model.zeta), dt);
    }
    total.add_final(gd_ref, apply(R.back(), [&](double s) { return model.xi(s); }),
                    P_const * apply(C.back(), [&](double s) { return model.xi(s); }));
  }
  return relative_errors(total);
}

struct MushySeries {
  std::vector<double> times, mean, sd;
};

/// Ensemble mean and unbiased standard deviation of per-path area series.
inline MushySeries mushy_stats(const std::vector<std::vector<double>>& areas, const std::vector<double>& times) {
  if (areas.size() < 2) throw std::invalid_argument("mushy statistics need at least two paths");
  MushySeries s;
  s.times = times;
  const std::size_t P = areas.size();
  for (const auto& a : areas)
    if (a.size() != times.size()) throw std::invalid_argument("mushy series lengths differ");
  s.mean.assign(times.size(), 0.0);
  s.sd.assign(times.size(), 0.0);
  for (std::size_t n = 0; n < times.size(); ++n) {
    double m = 0.0;
    for (const auto& a : areas) m += a[n];
    m /= static_cast<double>(P);
    double v = 0.0;
    for (const auto& a : areas) v += (a[n] - m) * (a[n] - m);
    s.mean[n] = m;
    s.sd[n] = std::sqrt(v / static_cast<double>(P - 1));
  }
  return s;
}

/// Average of a series over the grid times strictly inside (t0, t1).
inline double time_average(const std::vector<double>& times, const std::vector<double>& values, double t0, double t1) {
  double s = 0.0;
  int n = 0;
  for (std::size_t k = 0; k < times.size(); ++k)
    if (times[k] > t0 && times[k] < t1) {
      s += values[k];
      ++n;
    }
  return n ? s / n : std::numeric_limits<double>::quiet_NaN();
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

/// Number of unknowns reported in tables: vertices for MLP1, edges for HMM
/// (cell unknowns are eliminated locally).
inline int table_ndofs(const GradientDiscretisation& gd) {
  return gd.scheme == Scheme::Mlp1 ? gd.num_dofs() : gd.num_dofs() - gd.num_cell_dofs;
}

inline StefanModel make_test(int test, double nf) {
  if (test == 1) return make_test1(nf);
  if (test == 2) return make_test2(nf);
  throw std::invalid_argument("test must be 1 or 2, got " + std::to_string(test));
}

struct LevelSpec {
  std::string label;
  std::shared_ptr<const PolytopalMesh> mesh;
};

struct EnsembleSpec {
  int test = 1;
  Scheme scheme = Scheme::Mlp1;
  double r = 0.5;
  double nf = 0.0;
  std::vector<LevelSpec> levels;
  std::optional<LevelSpec> reference;  // strictly finer than every level
  bool exact_reference = false;        // errors against the exact solution instead
  std::size_t paths = 100;
  std::uint64_t seed = 1;
  std::size_t n_max = 0;  // fine noise grid; 0 picks the finest level's step count
  unsigned workers = 1;
  double final_time = 1.0;
  Sym2 lambda{};
  std::optional<std::pair<double, double>> mushy_interval;  // default: the model's plateau
  NewtonConfig newton{};
  std::optional<QWienerSpec> qwiener;
  bool record_mushy = false;
};

struct LevelReport {
  std::string label;
  double h = 0.0;
  int ndofs = 0;
  std::size_t steps = 0;
  std::optional<ErrorTriple> errors;
  double l2_zeta = 0.0;  // sqrt(E ||Pi zeta(u)||^2_{L2(space-time)})
  double h1_zeta = 0.0;  // sqrt(E ||grad zeta(u)||^2_{L2(space-time)})
  double l1_xi = 0.0;    // E int Xi(Pi u(T))
  double mean_newton = 0.0;
  int max_newton = 0;
  long relaxations = 0;
  long cap_hits = 0;
  double mean_sup_energy = 0.0;  // E sup_n int Xi(Pi u^n)
  std::vector<double> sup_energy;  // per path
  std::optional<MushySeries> mushy;
};

struct ExperimentReport {
  int test = 1;
  Scheme scheme = Scheme::Mlp1;
  double nf = 0.0;
  std::size_t paths = 0;
  std::vector<LevelReport> levels;
  std::optional<LevelReport> reference;
};

class PathFailure : public std::runtime_error {
 public:
  PathFailure(std::size_t path, const std::string& level, const std::string& what)
      : std::runtime_error("path " + std::to_string(path) + ", level " + level + ": " + what), path_(path) {}
  std::size_t path() const noexcept { return path_; }

 private:
  std::size_t path_;
};

namespace detail {

struct PreparedLevel {
  std::string label;
  std::shared_ptr<const GradientDiscretisation> gd;
  SparseMatrix A;
  std::size_t steps = 0;
  double h = 0.0;
  SparseMatrix P_lin, P_const;  // onto the reference level
  std::shared_ptr<const ExactErrorRule> exact;
};

struct LevelPathResult {
  ErrorSums errors;
  double l2 = 0.0, h1 = 0.0, xi_final = 0.0, sup_energy = 0.0;
  long newton = 0, relaxations = 0, cap_hits = 0;
  int max_newton = 0;
  std::vector<double> mushy;
};

// Advances one level on one path, keeping the running norm sums.
struct LevelRunner {
  const PreparedLevel* level;
  Stepper stepper;
  SchemeState state;
  std::vector<double> dw_scalar;
  Eigen::VectorXd dw;
  LevelPathResult res;
  std::pair<double, double> interval;
  bool record_mushy;
  const QWienerSpec* qwiener;
  const BrownianDriver* driver;

  LevelRunner(const PreparedLevel& l, const StefanModel& model, const NewtonConfig& cfg, const BrownianDriver& drv,
              std::pair<double, double> iv, bool mushy, const QWienerSpec* q)
      : level(&l), stepper(l.gd, l.A, model, cfg), interval(iv), record_mushy(mushy), qwiener(q), driver(&drv) {
    state = stepper.initial_state();
    dw_scalar = drv.increments_for(l.steps);
    dw.resize(l.gd->num_dofs());
    res.sup_energy = discrete_energy(*l.gd, model, state.u);
    if (record_mushy) res.mushy.push_back(mushy_area(*l.gd, state.u, interval));
  }

  void advance() {
    const auto& gd = *level->gd;
    const auto& model = stepper.model();
    const double dt = model.final_time / static_cast<double>(level->steps);
    const std::size_t n = state.step;
    if (qwiener)
      dw = q_wiener_increment(*driver, *qwiener, level->steps, n, gd.anchors);
    else
      dw.setConstant(dw_scalar[n]);
    state = stepper.step(state, dw, dt);
    state.time = model.final_time * static_cast<double>(n + 1) / static_cast<double>(level->steps);
    res.newton += state.newton_iterations;
    res.relaxations += state.relaxations;
    res.cap_hits += state.cap_hits;
    res.max_newton = std::max(res.max_newton, state.newton_iterations);
    if (level->exact) level->exact->add_slab(res.errors, gd, state.zeta, state.time, dt);
    res.l2 += dt * gd.mass.dot(state.zeta.cwiseAbs2());
    res.h1 += dt * gd.gradient_norm2(state.zeta);
    res.sup_energy = std::max(res.sup_energy, discrete_energy(gd, model, state.u));
    if (record_mushy) res.mushy.push_back(mushy_area(gd, state.u, interval));
  }

  void finish() {
    const auto& model = stepper.model();
    res.xi_final = level->gd->mass.dot(apply(state.u, [&](double s) { return model.xi(s); }));
    if (level->exact) level->exact->add_final(res.errors, state.u, state.time);
  }
};

inline LevelReport reduce_level(const PreparedLevel& level, const std::vector<LevelPathResult>& per_path,
                                bool with_errors, bool with_mushy, double final_time) {
  LevelReport rep;
  rep.label = level.label;
  rep.h = level.h;
  rep.ndofs = table_ndofs(*level.gd);
  rep.steps = level.steps;
  const auto P = static_cast<double>(per_path.size());
  ErrorSums total;
  long newton = 0;
  for (const auto& r : per_path) {
    total += r.errors;
    rep.l2_zeta += r.l2;
    rep.h1_zeta += r.h1;
    rep.l1_xi += r.xi_final;
    rep.mean_sup_energy += r.sup_energy;
    rep.sup_energy.push_back(r.sup_energy);
    newton += r.newton;
    rep.relaxations += r.relaxations;
    rep.cap_hits += r.cap_hits;
    rep.max_newton = std::max(rep.max_newton, r.max_newton);
  }
  rep.l2_zeta = std::sqrt(rep.l2_zeta / P);
  rep.h1_zeta = std::sqrt(rep.h1_zeta / P);
  rep.l1_xi /= P;
  rep.mean_sup_energy /= P;
  rep.mean_newton = static_cast<double>(newton) / (P * static_cast<double>(level.steps));
  if (with_errors) rep.errors = relative_errors(total);
  if (with_mushy) {
    std::vector<std::vector<double>> areas;
    for (const auto& r : per_path) areas.push_back(r.mushy);
    std::vector<double> times(level.steps + 1);
    for (std::size_t n = 0; n <= level.steps; ++n)
      times[n] = final_time * static_cast<double>(n) / static_cast<double>(level.steps);
    rep.mushy = mushy_stats(areas, times);
  }
  return rep;
}

}  // namespace detail

/// Runs P paths over every level (and the reference). Paths are distributed
/// over workers; results are reduced in path order, so the report does not
/// depend on the schedule.
inline ExperimentReport run_ensemble(const EnsembleSpec& spec) {
  if (spec.levels.empty()) throw std::invalid_argument("ensemble needs at least one mesh level");
  if (spec.paths == 0) throw std::invalid_argument("ensemble needs at least one path");
  if (spec.record_mushy && spec.paths < 2) throw std::invalid_argument("mushy statistics need at least two paths");
  StefanModel model = make_test(spec.test, spec.nf);
  model.final_time = spec.final_time;
  model.diffusion = spec.lambda;
  if (spec.mushy_interval) model.mushy_interval = *spec.mushy_interval;
  const auto interval = model.mushy_interval;

  auto prepare = [&](const LevelSpec& l) {
    detail::PreparedLevel p;
    p.label = l.label;
    p.gd = std::make_shared<const GradientDiscretisation>(build_gd(spec.scheme, l.mesh, spec.r));
    p.A = assemble_stiffness(*p.gd, DiffusionTensor(l.mesh->num_cells(), spec.lambda));
    p.h = l.mesh->max_cell_diameter();
    p.steps = steps_for_mesh_size(p.h, spec.final_time);
    return p;
  };
  std::vector<detail::PreparedLevel> levels;
  for (const auto& l : spec.levels) levels.push_back(prepare(l));
  if (spec.exact_reference) {
    if (spec.reference) throw std::invalid_argument("choose either a reference level or the exact solution");
    if (!model.exact) throw std::invalid_argument("test " + std::to_string(spec.test) + " has no exact solution");
    for (auto& l : levels) l.exact = std::make_shared<const ExactErrorRule>(*l.gd, model);
  }
  std::optional<detail::PreparedLevel> ref;
  if (spec.reference) {
    ref = prepare(*spec.reference);
    for (auto& l : levels) {
      if (!(ref->h < l.h)) throw std::invalid_argument("reference level " + ref->label + " is not finer than " + l.label);
      if (ref->steps % l.steps != 0) throw std::invalid_argument("reference time grid does not refine " + l.label);
      l.P_lin = interpolation_matrix(*l.gd, *ref->gd, InterpolationMode::GradientLinear);
      l.P_const = interpolation_matrix(*l.gd, *ref->gd, InterpolationMode::Constant);
    }
  }
  std::size_t n_max = ref ? ref->steps : 1;
  for (const auto& l : levels) n_max = std::max(n_max, l.steps);
  if (spec.n_max) {
    if (spec.n_max < n_max || spec.n_max % n_max != 0)
      throw std::invalid_argument("N_max = " + std::to_string(spec.n_max) + " does not refine the finest time grid (" +
                                  std::to_string(n_max) + " steps)");
    n_max = spec.n_max;
  }
  const std::size_t modes = spec.qwiener ? spec.qwiener->num_modes() : 1;
  const QWienerSpec* q = spec.qwiener ? &*spec.qwiener : nullptr;

  const std::size_t P = spec.paths;
  std::vector<std::vector<detail::LevelPathResult>> results(levels.size(), std::vector<detail::LevelPathResult>(P));
  std::vector<detail::LevelPathResult> ref_results(ref ? P : 0);

  auto run_one = [&](std::size_t p) {
    const BrownianDriver driver =
        BrownianDriver::generate(spec.seed, static_cast<std::uint32_t>(p), n_max, spec.final_time, modes);
    std::vector<std::unique_ptr<detail::LevelRunner>> runners;
    for (const auto& l : levels)
      runners.push_back(
          std::make_unique<detail::LevelRunner>(l, model, spec.newton, driver, interval, spec.record_mushy, q));
    auto guarded = [&](const std::string& label, auto&& f) {
      try {
        f();
      } catch (const std::exception& e) {
        throw PathFailure(p, label, e.what());
      }
    };
    if (ref) {
      detail::LevelRunner rr(*ref, model, spec.newton, driver, interval, spec.record_mushy, q);
      const double dt = spec.final_time / static_cast<double>(ref->steps);
      std::vector<Eigen::VectorXd> z_int(levels.size());
      for (std::size_t n = 1; n <= ref->steps; ++n) {
        guarded(ref->label, [&] { rr.advance(); });
        for (std::size_t k = 0; k < levels.size(); ++k) {
          auto& run = *runners[k];
          const std::size_t need = (n * levels[k].steps + ref->steps - 1) / ref->steps;
          bool moved = false;
          while (run.state.step < need) {
            guarded(levels[k].label, [&] { run.advance(); });
            moved = true;
          }
          if (moved) z_int[k] = levels[k].P_lin * run.state.zeta;
          run.res.errors.add_slab(*ref->gd, rr.state.zeta, z_int[k], dt);
        }
      }
      rr.finish();
      const Eigen::VectorXd xi_ref = apply(rr.state.u, [&](double s) { return model.xi(s); });
      for (std::size_t k = 0; k < levels.size(); ++k) {
        auto& run = *runners[k];
        run.finish();
        const Eigen::VectorXd xi_c = apply(run.state.u, [&](double s) { return model.xi(s); });
        run.res.errors.add_final(*ref->gd, xi_ref, levels[k].P_const * xi_c);
        results[k][p] = std::move(run.res);
      }
      ref_results[p] = std::move(rr.res);
    } else {
      for (std::size_t k = 0; k < levels.size(); ++k) {
        auto& run = *runners[k];
        while (run.state.step < levels[k].steps) guarded(levels[k].label, [&] { run.advance(); });
        run.finish();
        results[k][p] = std::move(run.res);
      }
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(spec.workers, static_cast<unsigned>(P)));
  std::vector<std::exception_ptr> errors(P);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t p; (p = next.fetch_add(1)) < P;) {
      try {
        run_one(p);
      } catch (...) {
        errors[p] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  ExperimentReport report;
  report.test = spec.test;
  report.scheme = spec.scheme;
  report.nf = spec.nf;
  report.paths = P;
  for (std::size_t k = 0; k < levels.size(); ++k)
    report.levels.push_back(
        detail::reduce_level(levels[k], results[k], ref.has_value() || spec.exact_reference, spec.record_mushy,
                             spec.final_time));
  if (ref) {
    report.reference = detail::reduce_level(*ref, ref_results, false, spec.record_mushy, spec.final_time);
    report.reference->errors = ErrorTriple{};
  }
  return report;
}

/// Family members as ensemble levels.
inline LevelSpec family_level(const std::string& family, int level) {
  const auto member = parse_family_id(family_id(family, level));
  if (!member) throw std::invalid_argument("unknown mesh " + family_id(family, level));
  return {family_id(family, level), std::make_shared<const PolytopalMesh>(make_family_mesh(*member))};
}

}  // namespace sstefan
