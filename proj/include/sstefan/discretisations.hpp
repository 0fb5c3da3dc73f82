#pragma once

// Mass-lumped P1 on triangulations and the mass-split HMM on polygonal meshes.

#include "sstefan/gdm.hpp"

namespace sstefan {

/// Vertex unknowns; Pi_D constant on median-dual cells, grad_D the P1 gradient.
inline GradientDiscretisation build_mlp1(std::shared_ptr<const PolytopalMesh> mesh,
                                         std::shared_ptr<const GeometryCache> geom, const DualMesh& dual) {
  if (!mesh->is_triangulation()) throw MeshError(MeshError::Kind::Topology, "MLP1 requires a triangulation");
  if (dual.volume.size() != mesh->num_vertices()) throw std::invalid_argument("dual mesh does not match the mesh");
  GradientDiscretisation gd;
  gd.scheme = Scheme::Mlp1;
  gd.mass = Eigen::Map<const Eigen::VectorXd>(dual.volume.data(), static_cast<Eigen::Index>(dual.volume.size()));
  gd.anchors = mesh->vertices();
  gd.dirichlet = mesh->boundary_vertex();
  const auto& X = mesh->vertices();
  for (std::size_t c = 0; c < mesh->num_cells(); ++c) {
    const auto& v = mesh->cells()[c].vertices;
    GradientRegion reg;
    reg.measure = geom->cell_area[c];
    reg.centroid = geom->cell_center[c];
    reg.cell = static_cast<int>(c);
    reg.first = static_cast<int>(gd.coeff_dof.size());
    reg.count = 3;
    for (int k = 0; k < 3; ++k) {
      const Vec2& b = X[v[(k + 1) % 3]];
      const Vec2& c2 = X[v[(k + 2) % 3]];
      // grad of the hat function: inward normal of the opposite edge over the height.
      gd.coeff_dof.push_back(v[k]);
      gd.coeff_grad.emplace_back((b.y() - c2.y()) / (2.0 * reg.measure), (c2.x() - b.x()) / (2.0 * reg.measure));
    }
    gd.regions.push_back(reg);
  }
  gd.mesh = std::move(mesh);
  gd.geometry = std::move(geom);
  return gd;
}

inline GradientDiscretisation build_mlp1(std::shared_ptr<const PolytopalMesh> mesh) {
  auto geom = std::make_shared<const GeometryCache>(compute_geometry(*mesh));
  const DualMesh dual = build_dual_mesh(*mesh, *geom);
  return build_mlp1(std::move(mesh), std::move(geom), dual);
}

/// Cell + edge unknowns. Mass split: r|K| to each cell, (1 - r) times the
/// adjacent hull volumes |D_{K,s}| to each edge. Gradient on D_{K,s}:
///   grad_K v + (sqrt(2) / d_{K,s}) R_{K,s}(v) n_{K,s},
///   grad_K v = (1/|K|) sum_s |s| v_s n_{K,s},
///   R_{K,s}(v) = v_s - v_K - grad_K v . (x_s - x_K).
inline GradientDiscretisation build_hmm(std::shared_ptr<const PolytopalMesh> mesh,
                                        std::shared_ptr<const GeometryCache> geom, double r) {
  if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("HMM mass parameter r must lie in [0, 1]");
  GradientDiscretisation gd;
  gd.scheme = Scheme::Hmm;
  gd.mass_parameter = r;
  const int nc = static_cast<int>(mesh->num_cells());
  const int ne = static_cast<int>(mesh->num_edges());
  gd.num_cell_dofs = nc;
  gd.mass = Eigen::VectorXd::Zero(nc + ne);
  gd.anchors.resize(static_cast<std::size_t>(nc + ne));
  gd.dirichlet.assign(static_cast<std::size_t>(nc + ne), 0);
  for (int c = 0; c < nc; ++c) {
    gd.mass[c] = r * geom->cell_area[c];
    gd.anchors[c] = geom->cell_center[c];
  }
  for (int e = 0; e < ne; ++e) {
    gd.anchors[nc + e] = geom->edge_midpoint[e];
    gd.dirichlet[nc + e] = mesh->edges()[e].boundary();
  }
  const double stab = std::sqrt(2.0);
  for (int c = 0; c < nc; ++c) {
    const auto& cell = mesh->cells()[c];
    const int n = static_cast<int>(cell.edges.size());
    const double area = geom->cell_area[c];
    const Vec2& xK = geom->cell_center[c];
    std::vector<Vec2> gK(n);  // coefficient of v_s in grad_K v
    for (int k = 0; k < n; ++k)
      gK[k] = geom->edge_length[cell.edges[k]] * geom->normal[geom->local(c, k)] / area;

    for (int k = 0; k < n; ++k) {
      const int loc = geom->local(c, k);
      const double dist = geom->distance[loc];
      if (!(dist > 0.0))
        throw MeshError(MeshError::Kind::Degenerate, "cell " + std::to_string(c) +
                                                         ": center not strictly inside the hull of edge " +
                                                         std::to_string(cell.edges[k]));
      const Vec2 nrm = geom->normal[loc];
      const Vec2 shift = geom->edge_midpoint[cell.edges[k]] - xK;
      gd.mass[nc + cell.edges[k]] += (1.0 - r) * geom->subvolume[loc];

      GradientRegion reg;
      reg.measure = geom->subvolume[loc];
      reg.centroid = geom->subvolume_center[loc];
      reg.cell = c;
      reg.edge = cell.edges[k];
      reg.first = static_cast<int>(gd.coeff_dof.size());
      reg.count = n + 1;
      gd.coeff_dof.push_back(c);
      gd.coeff_grad.push_back(-(stab / dist) * nrm);
      for (int j = 0; j < n; ++j) {
        Vec2 g = gK[j] - (stab / dist) * gK[j].dot(shift) * nrm;
        if (j == k) g += (stab / dist) * nrm;
        gd.coeff_dof.push_back(nc + cell.edges[j]);
        gd.coeff_grad.push_back(g);
      }
      gd.regions.push_back(reg);
    }
  }
  gd.mesh = std::move(mesh);
  gd.geometry = std::move(geom);
  return gd;
}

inline GradientDiscretisation build_hmm(std::shared_ptr<const PolytopalMesh> mesh, double r) {
  auto geom = std::make_shared<const GeometryCache>(compute_geometry(*mesh));
  return build_hmm(std::move(mesh), std::move(geom), r);
}

inline GradientDiscretisation build_gd(Scheme scheme, std::shared_ptr<const PolytopalMesh> mesh, double r) {
  return scheme == Scheme::Mlp1 ? build_mlp1(std::move(mesh)) : build_hmm(std::move(mesh), r);
}

/// HMM cell gradient grad_K v (MLP1: the P1 gradient on the triangle).
inline Vec2 cell_gradient(const GradientDiscretisation& gd, int cell, const Eigen::VectorXd& v) {
  if (gd.scheme == Scheme::Mlp1) return gd.region_gradient(static_cast<std::size_t>(cell), v);
  const auto& c = gd.mesh->cells()[cell];
  Vec2 g = Vec2::Zero();
  for (std::size_t k = 0; k < c.edges.size(); ++k)
    g += gd.geometry->edge_length[c.edges[k]] * v[gd.num_cell_dofs + c.edges[k]] *
         gd.geometry->normal[gd.geometry->local(cell, static_cast<int>(k))];
  return g / gd.geometry->cell_area[cell];
}

/// Stabilisation residual R_{K,s}(v) for local edge k of an HMM cell.
inline double hmm_stabilisation(const GradientDiscretisation& gd, int cell, int k, const Eigen::VectorXd& v) {
  const int e = gd.mesh->cells()[cell].edges[k];
  return v[gd.num_cell_dofs + e] - v[cell] -
         cell_gradient(gd, cell, v).dot(gd.geometry->edge_midpoint[e] - gd.geometry->cell_center[cell]);
}

using Triangle = std::array<Vec2, 3>;

/// Geometric realisation of the reconstruction regions Theta_i as unions of
/// triangles. MLP1: median-dual cells. HMM: each hull D_{K,s} is split into
/// the homothetic copy of ratio sqrt(r) about x_K (assigned to the cell) and
/// the remaining trapezoid (assigned to the edge), matching the masses.
inline std::vector<std::vector<Triangle>> reconstruction_regions(const GradientDiscretisation& gd) {
  const auto& mesh = *gd.mesh;
  const auto& geom = *gd.geometry;
  const auto& X = mesh.vertices();
  std::vector<std::vector<Triangle>> out(static_cast<std::size_t>(gd.num_dofs()));
  if (gd.scheme == Scheme::Mlp1) {
    for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
      const auto& v = mesh.cells()[c].vertices;
      const Vec2 xc = geom.cell_center[c];
      for (int k = 0; k < 3; ++k) {
        const Vec2& s = X[v[k]];
        const Vec2 m_next = 0.5 * (s + X[v[(k + 1) % 3]]);
        const Vec2 m_prev = 0.5 * (s + X[v[(k + 2) % 3]]);
        out[v[k]].push_back({s, m_next, xc});
        out[v[k]].push_back({s, xc, m_prev});
      }
    }
    return out;
  }
  const double q = std::sqrt(gd.mass_parameter);
  for (const auto& reg : gd.regions) {
    const Vec2 xk = geom.cell_center[reg.cell];
    const auto& e = mesh.edges()[reg.edge];
    const Vec2 a = X[e.vertices[0]], b = X[e.vertices[1]];
    const Vec2 a2 = xk + q * (a - xk), b2 = xk + q * (b - xk);
    auto& cell_part = out[reg.cell];
    auto& edge_part = out[gd.num_cell_dofs + reg.edge];
    if (q > 0.0) cell_part.push_back({xk, a2, b2});
    if (q < 1.0) {
      edge_part.push_back({a2, a, b});
      edge_part.push_back({a2, b, b2});
    }
  }
  return out;
}

/// The triangle(s) on which each gradient region is constant.
inline std::vector<Triangle> gradient_region_triangle(const GradientDiscretisation& gd, std::size_t r) {
  const auto& mesh = *gd.mesh;
  const auto& X = mesh.vertices();
  const auto& reg = gd.regions[r];
  if (gd.scheme == Scheme::Mlp1) {
    const auto& v = mesh.cells()[reg.cell].vertices;
    return {{X[v[0]], X[v[1]], X[v[2]]}};
  }
  const auto& e = mesh.edges()[reg.edge];
  return {{gd.geometry->cell_center[reg.cell], X[e.vertices[0]], X[e.vertices[1]]}};
}

/// Degree-2 rule with the three edge midpoints.
template <class F>
double integrate_triangle(const Triangle& t, F&& f) {
  const double area = 0.5 * std::abs(cross(t[1] - t[0], t[2] - t[0]));
  return area / 3.0 * (f(0.5 * (t[0] + t[1])) + f(0.5 * (t[1] + t[2])) + f(0.5 * (t[2] + t[0])));
}

/// I_D u0: point values at the dof anchors.
inline Eigen::VectorXd interpolate_initial(const GradientDiscretisation& gd, const SpaceFunction& u0) {
  return gd.interpolate(u0);
}

}  // namespace sstefan
