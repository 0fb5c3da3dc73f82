#pragma once

// Gradient discretisations with piecewise-constant reconstruction: data
// model, operator assembly and quality diagnostics (consistency defect,
// limit-conformity defect, discrete Poincare constant).

#include "sstefan/mesh.hpp"
#include "sstefan/model.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <span>

namespace sstefan {

using SparseMatrix = Eigen::SparseMatrix<double>;

enum class Scheme { Mlp1, Hmm };

inline const char* to_string(Scheme s) { return s == Scheme::Mlp1 ? "mlp1" : "hmm"; }

/// A region on which the reconstructed gradient is constant: a fixed
/// linear combination of a few dofs.
struct GradientRegion {
  double measure = 0.0;
  Vec2 centroid = Vec2::Zero();
  int cell = -1;  // mesh cell containing the region (selects the tensor value)
  int edge = -1;  // HMM: the edge sigma of D_{K,sigma}
  int first = 0;  // coefficient range [first, first + count) in the flat arrays
  int count = 0;
};

struct GradientDiscretisation {
  Scheme scheme = Scheme::Mlp1;
  std::shared_ptr<const PolytopalMesh> mesh;
  std::shared_ptr<const GeometryCache> geometry;
  double mass_parameter = 0.0;  // r for HMM

  /// |Theta_i| of the reconstruction region of each dof.
  Eigen::VectorXd mass;
  /// Point used by interpolation and pointwise evaluations for each dof.
  std::vector<Vec2> anchors;
  /// Dirichlet dofs.
  std::vector<char> dirichlet;

  std::vector<GradientRegion> regions;
  std::vector<int> coeff_dof;
  std::vector<Vec2> coeff_grad;

  /// HMM layout: dofs [0, num_cells) are cell unknowns, the rest edges.
  int num_cell_dofs = 0;

  int num_dofs() const noexcept { return static_cast<int>(mass.size()); }

  std::vector<int> free_dofs() const {
    std::vector<int> f;
    for (int i = 0; i < num_dofs(); ++i)
      if (!dirichlet[i]) f.push_back(i);
    return f;
  }

  Vec2 region_gradient(std::size_t r, const Eigen::VectorXd& v) const {
    const auto& reg = regions[r];
    Vec2 g = Vec2::Zero();
    for (int k = reg.first; k < reg.first + reg.count; ++k) g += v[coeff_dof[k]] * coeff_grad[k];
    return g;
  }

  std::vector<Vec2> gradient(const Eigen::VectorXd& v) const {
    check_size(v);
    std::vector<Vec2> g(regions.size());
    for (std::size_t r = 0; r < regions.size(); ++r) g[r] = region_gradient(r, v);
    return g;
  }

  /// ||grad_D v||^2 over the domain.
  double gradient_norm2(const Eigen::VectorXd& v) const {
    double s = 0.0;
    for (std::size_t r = 0; r < regions.size(); ++r) s += regions[r].measure * region_gradient(r, v).squaredNorm();
    return s;
  }

  /// Integral of Pi_D v.
  double integrate(const Eigen::VectorXd& v) const { return mass.dot(v); }

  Eigen::VectorXd interpolate(const SpaceFunction& f) const {
    Eigen::VectorXd v(num_dofs());
    for (int i = 0; i < num_dofs(); ++i) v[i] = f(anchors[i]);
    return v;
  }

  void check_size(const Eigen::VectorXd& v) const {
    if (v.size() != num_dofs())
      throw std::invalid_argument("dof vector has " + std::to_string(v.size()) + " entries, expected " +
                                  std::to_string(num_dofs()));
  }
};

/// Pi_D v: one constant value on each reconstruction region Theta_i.
struct PiecewiseConstantField {
  Eigen::VectorXd measures;
  Eigen::VectorXd values;

  double integral() const { return measures.dot(values); }
  double l2_norm() const { return std::sqrt(measures.dot(values.cwiseAbs2())); }
};

inline PiecewiseConstantField reconstruct(const GradientDiscretisation& gd, const Eigen::VectorXd& v) {
  gd.check_size(v);
  return {gd.mass, v};
}

/// Componentwise application of a scalar map to a dof vector.
template <class F>
Eigen::VectorXd apply(const Eigen::VectorXd& v, F&& g) {
  Eigen::VectorXd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = g(v[i]);
  return out;
}

/// Symmetric stiffness A_ij = int Lambda grad_D e_j . grad_D e_i. Each
/// region's local block is computed once for (a, b) and mirrored so the
/// matrix is exactly symmetric.
inline SparseMatrix assemble_stiffness(const GradientDiscretisation& gd, const DiffusionTensor& lambda) {
  std::vector<Eigen::Triplet<double>> trip;
  for (const auto& reg : gd.regions) {
    if (reg.cell < 0 || static_cast<std::size_t>(reg.cell) >= lambda.size())
      throw std::invalid_argument("gradient region refers to cell " + std::to_string(reg.cell) +
                                  " outside the diffusion tensor field");
    const Sym2& L = lambda[reg.cell];
    for (int a = reg.first; a < reg.first + reg.count; ++a) {
      const Vec2 La = L.apply(gd.coeff_grad[a]);
      for (int b = a; b < reg.first + reg.count; ++b) {
        const double val = reg.measure * La.dot(gd.coeff_grad[b]);
        trip.emplace_back(gd.coeff_dof[a], gd.coeff_dof[b], val);
        if (b != a) trip.emplace_back(gd.coeff_dof[b], gd.coeff_dof[a], val);
      }
    }
  }
  SparseMatrix A(gd.num_dofs(), gd.num_dofs());
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

inline SparseMatrix assemble_stiffness(const GradientDiscretisation& gd) {
  return assemble_stiffness(gd, DiffusionTensor(gd.mesh->num_cells(), Sym2{}));
}

/// Rows/columns of `A` restricted to `keep` (in the given order).
inline SparseMatrix restrict_matrix(const SparseMatrix& A, const std::vector<int>& rows, const std::vector<int>& cols) {
  std::vector<int> row_map(A.rows(), -1), col_map(A.cols(), -1);
  for (std::size_t i = 0; i < rows.size(); ++i) row_map[rows[i]] = static_cast<int>(i);
  for (std::size_t j = 0; j < cols.size(); ++j) col_map[cols[j]] = static_cast<int>(j);
  std::vector<Eigen::Triplet<double>> trip;
  for (int k = 0; k < A.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(A, k); it; ++it)
      if (row_map[it.row()] >= 0 && col_map[it.col()] >= 0)
        trip.emplace_back(row_map[it.row()], col_map[it.col()], it.value());
  SparseMatrix R(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  R.setFromTriplets(trip.begin(), trip.end());
  return R;
}

struct SmoothFunction {
  std::function<double(const Vec2&)> value;
  std::function<Vec2(const Vec2&)> gradient;
};

struct SmoothVectorField {
  std::function<Vec2(const Vec2&)> value;
  std::function<double(const Vec2&)> divergence;
};

/// phi(x, y) = sin(pi x) sin(pi y).
inline SmoothFunction sine_bump() {
  return {[](const Vec2& x) { return std::sin(M_PI * x.x()) * std::sin(M_PI * x.y()); },
          [](const Vec2& x) {
            return Vec2(M_PI * std::cos(M_PI * x.x()) * std::sin(M_PI * x.y()),
                        M_PI * std::sin(M_PI * x.x()) * std::cos(M_PI * x.y()));
          }};
}

/// psi(x, y) = (sin(pi y), sin(pi x)), divergence free.
inline SmoothVectorField sine_swirl() {
  return {[](const Vec2& x) { return Vec2(std::sin(M_PI * x.y()), std::sin(M_PI * x.x())); },
          [](const Vec2&) { return 0.0; }};
}

namespace detail {

inline SparseMatrix interior_stiffness(const GradientDiscretisation& gd, const std::vector<int>& interior) {
  return restrict_matrix(assemble_stiffness(gd), interior, interior);
}

template <class Solver>
void factorize_or_throw(Solver& solver, const SparseMatrix& K, const char* what) {
  solver.compute(K);
  if (solver.info() != Eigen::Success) throw std::runtime_error(std::string(what) + ": singular stiffness");
}

}  // namespace detail

/// Consistency defect: min_w ||Pi_D w - phi|| + ||grad_D w - grad phi|| over
/// w vanishing on Dirichlet dofs. Minimises the sum of squares by linear
/// least squares (midpoint quadrature per region) and reports the sum of
/// norms at that minimiser.
inline double s_defect(const GradientDiscretisation& gd, const SmoothFunction& phi) {
  const std::vector<int> interior = gd.free_dofs();
  const int n = static_cast<int>(interior.size());
  std::vector<int> pos(gd.num_dofs(), -1);
  for (int i = 0; i < n; ++i) pos[interior[i]] = i;

  SparseMatrix K = detail::interior_stiffness(gd, interior);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::Triplet<double>> diag;
  for (int i = 0; i < n; ++i) {
    const int d = interior[i];
    diag.emplace_back(i, i, gd.mass[d]);
    rhs[i] += gd.mass[d] * phi.value(gd.anchors[d]);
  }
  for (const auto& reg : gd.regions) {
    const Vec2 gphi = phi.gradient(reg.centroid);
    for (int k = reg.first; k < reg.first + reg.count; ++k)
      if (pos[gd.coeff_dof[k]] >= 0) rhs[pos[gd.coeff_dof[k]]] += reg.measure * gd.coeff_grad[k].dot(gphi);
  }
  SparseMatrix M(n, n);
  M.setFromTriplets(diag.begin(), diag.end());
  SparseMatrix normal = M + K;
  Eigen::SimplicialLDLT<SparseMatrix> solver;
  detail::factorize_or_throw(solver, normal, "s_defect");
  const Eigen::VectorXd w_int = solver.solve(rhs);

  Eigen::VectorXd w = Eigen::VectorXd::Zero(gd.num_dofs());
  for (int i = 0; i < n; ++i) w[interior[i]] = w_int[i];
  double e0 = 0.0, e1 = 0.0;
  for (int i = 0; i < gd.num_dofs(); ++i) e0 += gd.mass[i] * std::pow(w[i] - phi.value(gd.anchors[i]), 2);
  for (std::size_t r = 0; r < gd.regions.size(); ++r)
    e1 += gd.regions[r].measure * (gd.region_gradient(r, w) - phi.gradient(gd.regions[r].centroid)).squaredNorm();
  return std::sqrt(e0) + std::sqrt(e1);
}

/// Linear functional l(v) = <grad_D v, psi> + <Pi_D v, div psi> on interior dofs.
inline Eigen::VectorXd conformity_functional(const GradientDiscretisation& gd, const SmoothVectorField& psi,
                                             const std::vector<int>& interior) {
  std::vector<int> pos(gd.num_dofs(), -1);
  for (std::size_t i = 0; i < interior.size(); ++i) pos[interior[i]] = static_cast<int>(i);
  Eigen::VectorXd l = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(interior.size()));
  for (const auto& reg : gd.regions) {
    const Vec2 p = psi.value(reg.centroid);
    for (int k = reg.first; k < reg.first + reg.count; ++k)
      if (pos[gd.coeff_dof[k]] >= 0) l[pos[gd.coeff_dof[k]]] += reg.measure * gd.coeff_grad[k].dot(p);
  }
  for (std::size_t i = 0; i < interior.size(); ++i)
    l[static_cast<Eigen::Index>(i)] += gd.mass[interior[i]] * psi.divergence(gd.anchors[interior[i]]);
  return l;
}

/// Limit-conformity defect max_v |l(v)| / ||grad_D v|| = sqrt(l^T K^-1 l).
inline double w_defect(const GradientDiscretisation& gd, const SmoothVectorField& psi) {
  const std::vector<int> interior = gd.free_dofs();
  const Eigen::VectorXd l = conformity_functional(gd, psi, interior);
  Eigen::SimplicialLDLT<SparseMatrix> solver;
  detail::factorize_or_throw(solver, detail::interior_stiffness(gd, interior), "w_defect");
  return std::sqrt(std::max(0.0, l.dot(solver.solve(l))));
}

struct CoercivityResult {
  double rho = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// rho = max_v ||Pi_D v|| / ||grad_D v|| = sqrt(lambda_max) of M v = lambda K v,
/// by power iteration on K^-1 M.
inline CoercivityResult coercivity_constant(const GradientDiscretisation& gd, double rel_tol = 1e-8,
                                            int max_iterations = 10000) {
  const std::vector<int> interior = gd.free_dofs();
  const auto n = static_cast<Eigen::Index>(interior.size());
  Eigen::VectorXd m(n);
  for (Eigen::Index i = 0; i < n; ++i) m[i] = gd.mass[interior[i]];
  Eigen::SimplicialLDLT<SparseMatrix> solver;
  detail::factorize_or_throw(solver, detail::interior_stiffness(gd, interior), "coercivity_constant");

  CoercivityResult res;
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n);
  double lambda = 0.0;
  for (int it = 1; it <= max_iterations; ++it) {
    Eigen::VectorXd w = solver.solve(m.cwiseProduct(v));
    // Rayleigh quotient in the M inner product: (v, K^-1 M v)_M / (v, v)_M.
    const double next = v.dot(m.cwiseProduct(w)) / v.dot(m.cwiseProduct(v));
    const double norm = std::sqrt(w.dot(m.cwiseProduct(w)));
    if (!(norm > 0.0)) break;
    v = w / norm;
    res.iterations = it;
    if (it > 1 && std::abs(next - lambda) <= rel_tol * std::abs(next)) {
      lambda = next;
      res.converged = true;
      break;
    }
    lambda = next;
  }
  res.rho = std::sqrt(std::max(0.0, lambda));
  return res;
}

}  // namespace sstefan
