#pragma once

// Planar polytopal meshes: loading, validation, geometry, dual volumes and
// point location.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sstefan {

using Vec2 = Eigen::Vector2d;

inline double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

/// Signed shoelace area of a closed polygon (positive when counterclockwise).
inline double shoelace_area(const std::vector<Vec2>& poly) {
  double twice = 0.0;
  for (std::size_t k = 0; k < poly.size(); ++k) twice += cross(poly[k], poly[(k + 1) % poly.size()]);
  return 0.5 * twice;
}

class MeshError : public std::runtime_error {
 public:
  enum class Kind { Parse, Topology, Orientation, Degenerate, Location };

  MeshError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct Edge {
  std::array<int, 2> vertices{};
  std::array<int, 2> cells{-1, -1};  // cells[1] == -1 on the boundary
  bool boundary() const noexcept { return cells[1] < 0; }
};

struct Cell {
  std::vector<int> vertices;  // counterclockwise loop
  std::vector<int> edges;     // edges[k] joins vertices[k] and vertices[k+1]
};

/// A conforming polygonal subdivision of a simply connected planar domain.
/// Immutable once built; construct through PolytopalMesh::build or load_mesh.
class PolytopalMesh {
 public:
  static PolytopalMesh build(std::vector<Vec2> vertices, std::vector<std::vector<int>> cells,
                             std::string name = {});

  const std::vector<Vec2>& vertices() const noexcept { return vertices_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<Cell>& cells() const noexcept { return cells_; }
  const std::vector<char>& boundary_vertex() const noexcept { return boundary_vertex_; }
  const std::string& name() const noexcept { return name_; }

  std::size_t num_vertices() const noexcept { return vertices_.size(); }
  std::size_t num_edges() const noexcept { return edges_.size(); }
  std::size_t num_cells() const noexcept { return cells_.size(); }

  int euler_characteristic() const noexcept {
    return static_cast<int>(num_vertices()) - static_cast<int>(num_edges()) + static_cast<int>(num_cells());
  }
  bool is_triangulation() const noexcept {
    return std::all_of(cells_.begin(), cells_.end(), [](const Cell& c) { return c.vertices.size() == 3; });
  }
  std::vector<Vec2> cell_polygon(int c) const {
    std::vector<Vec2> poly;
    poly.reserve(cells_[c].vertices.size());
    for (int v : cells_[c].vertices) poly.push_back(vertices_[v]);
    return poly;
  }
  /// Largest vertex-to-vertex distance within a cell, maximised over cells.
  double max_cell_diameter() const {
    double h = 0.0;
    for (const auto& c : cells_)
      for (std::size_t a = 0; a < c.vertices.size(); ++a)
        for (std::size_t b = a + 1; b < c.vertices.size(); ++b)
          h = std::max(h, (vertices_[c.vertices[a]] - vertices_[c.vertices[b]]).norm());
    return h;
  }
  std::array<Vec2, 2> bounding_box() const {
    Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
    Vec2 hi = -lo;
    for (const auto& v : vertices_) {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    return {lo, hi};
  }

 private:
  std::vector<Vec2> vertices_;
  std::vector<Edge> edges_;
  std::vector<Cell> cells_;
  std::vector<char> boundary_vertex_;
  std::string name_;
};

inline PolytopalMesh PolytopalMesh::build(std::vector<Vec2> vertices, std::vector<std::vector<int>> cells,
                                          std::string name) {
  using Kind = MeshError::Kind;
  const int nv = static_cast<int>(vertices.size());
  PolytopalMesh mesh;
  mesh.name_ = std::move(name);
  if (cells.empty()) throw MeshError(Kind::Topology, "mesh has no cells");

  std::set<std::vector<int>> seen_cells;
  std::vector<char> referenced(nv, 0);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto& loop = cells[c];
    const std::string where = "cell " + std::to_string(c);
    if (loop.size() < 3) throw MeshError(Kind::Topology, where + ": fewer than 3 vertices");
    for (int v : loop) {
      if (v < 0 || v >= nv)
        throw MeshError(Kind::Parse, where + ": vertex index " + std::to_string(v) + " out of range");
      referenced[v] = 1;
    }
    std::vector<int> sorted = loop;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw MeshError(Kind::Topology, where + ": repeated vertex in loop");
    if (!seen_cells.insert(sorted).second) throw MeshError(Kind::Topology, where + ": duplicate cell");

    std::vector<Vec2> poly;
    for (int v : loop) poly.push_back(vertices[v]);
    if (shoelace_area(poly) < 0.0) throw MeshError(Kind::Orientation, where + ": clockwise vertex loop");
  }
  for (int v = 0; v < nv; ++v)
    if (!referenced[v]) throw MeshError(Kind::Topology, "vertex " + std::to_string(v) + ": not used by any cell");

  // Edges keyed by sorted endpoints; each directed half-edge may appear once.
  std::map<std::pair<int, int>, int> edge_index;
  std::set<std::pair<int, int>> directed;
  mesh.cells_.resize(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    auto& cell = mesh.cells_[c];
    cell.vertices = cells[c];
    const std::size_t n = cell.vertices.size();
    cell.edges.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const int a = cell.vertices[k], b = cell.vertices[(k + 1) % n];
      if (!directed.insert({a, b}).second)
        throw MeshError(Kind::Topology, "cell " + std::to_string(c) + ": edge (" + std::to_string(a) + "," +
                                            std::to_string(b) + ") shared with the same orientation");
      const auto key = std::minmax(a, b);
      auto [it, inserted] = edge_index.try_emplace({key.first, key.second}, static_cast<int>(mesh.edges_.size()));
      if (inserted) {
        Edge e;
        e.vertices = {a, b};
        e.cells = {static_cast<int>(c), -1};
        mesh.edges_.push_back(e);
      } else {
        Edge& e = mesh.edges_[it->second];
        if (e.cells[1] >= 0)
          throw MeshError(Kind::Topology, "edge (" + std::to_string(a) + "," + std::to_string(b) +
                                              ") has more than two adjacent cells");
        e.cells[1] = static_cast<int>(c);
      }
      cell.edges[k] = it->second;
    }
  }

  // Boundary must be a set of closed curves: two boundary edges per boundary vertex.
  std::vector<int> boundary_degree(nv, 0);
  for (std::size_t e = 0; e < mesh.edges_.size(); ++e) {
    const Edge& edge = mesh.edges_[e];
    if (edge.boundary()) {
      ++boundary_degree[edge.vertices[0]];
      ++boundary_degree[edge.vertices[1]];
    }
  }
  mesh.boundary_vertex_.assign(nv, 0);
  for (int v = 0; v < nv; ++v) {
    if (boundary_degree[v] != 0 && boundary_degree[v] != 2)
      throw MeshError(Kind::Topology, "vertex " + std::to_string(v) +
                                          ": dangling or hanging boundary (boundary degree " +
                                          std::to_string(boundary_degree[v]) + ")");
    mesh.boundary_vertex_[v] = boundary_degree[v] == 2;
  }
  mesh.vertices_ = std::move(vertices);
  if (mesh.euler_characteristic() != 1)
    throw MeshError(Kind::Topology, "V - E + C = " + std::to_string(mesh.euler_characteristic()) +
                                        ", expected 1 for a simply connected domain");
  return mesh;
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

enum class MeshFormat { TriangleList, PolygonList };

namespace detail {

class LineReader {
 public:
  LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  /// Next non-empty, non-comment line split into tokens.
  bool next(std::vector<std::string>& tokens) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      std::istringstream ss(line);
      tokens.clear();
      for (std::string t; ss >> t;) tokens.push_back(t);
      if (!tokens.empty()) return true;
    }
    return false;
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw MeshError(MeshError::Kind::Parse, source_ + ":" + std::to_string(line_no_) + ": " + msg);
  }
  template <class T>
  T number(const std::string& token) const {
    std::istringstream ss(token);
    T value{};
    if (!(ss >> value) || !ss.eof()) fail("expected a number, got '" + token + "'");
    return value;
  }

 private:
  std::istream& in_;
  std::string source_;
  int line_no_ = 0;
};

}  // namespace detail

/// Plain-text mesh format. After optional '#' comments:
///   <num_vertices> <num_cells>
///   x y                       (num_vertices lines)
///   i j k                     (triangle-list: num_cells lines)
///   n i_1 ... i_n             (polygon-list: num_cells lines)
/// Vertex indices are 0-based; loops are counterclockwise.
inline PolytopalMesh read_mesh(std::istream& in, MeshFormat format, const std::string& source = "<stream>") {
  detail::LineReader reader(in, source);
  std::vector<std::string> tok;
  if (!reader.next(tok) || tok.size() != 2) reader.fail("expected header '<num_vertices> <num_cells>'");
  const long nv = reader.number<long>(tok[0]);
  const long nc = reader.number<long>(tok[1]);
  if (nv <= 0 || nc <= 0) reader.fail("counts must be positive");

  std::vector<Vec2> vertices;
  vertices.reserve(nv);
  for (long i = 0; i < nv; ++i) {
    if (!reader.next(tok) || tok.size() != 2) reader.fail("expected vertex line 'x y'");
    vertices.emplace_back(reader.number<double>(tok[0]), reader.number<double>(tok[1]));
  }
  std::vector<std::vector<int>> cells;
  cells.reserve(nc);
  for (long c = 0; c < nc; ++c) {
    if (!reader.next(tok)) reader.fail("unexpected end of file in cell list");
    std::vector<int> loop;
    if (format == MeshFormat::TriangleList) {
      if (tok.size() != 3) reader.fail("triangle-list cell lines need exactly 3 indices");
      for (const auto& t : tok) loop.push_back(reader.number<int>(t));
    } else {
      const auto n = reader.number<std::size_t>(tok[0]);
      if (tok.size() != n + 1) reader.fail("polygon-list cell line declares " + std::to_string(n) + " vertices");
      for (std::size_t k = 1; k <= n; ++k) loop.push_back(reader.number<int>(tok[k]));
    }
    cells.push_back(std::move(loop));
  }
  if (reader.next(tok)) reader.fail("trailing data after cell list");
  try {
    return PolytopalMesh::build(std::move(vertices), std::move(cells), source);
  } catch (const MeshError& e) {
    throw MeshError(e.kind(), source + ": " + e.what());
  }
}

inline PolytopalMesh load_mesh(const std::filesystem::path& path, MeshFormat format) {
  std::ifstream in(path);
  if (!in) throw MeshError(MeshError::Kind::Parse, path.string() + ": cannot open");
  auto mesh = read_mesh(in, format, path.string());
  return mesh;
}

/// Format detection by extension: ".tri" is a triangle list, anything else a polygon list.
inline PolytopalMesh load_mesh(const std::filesystem::path& path) {
  return load_mesh(path, path.extension() == ".tri" ? MeshFormat::TriangleList : MeshFormat::PolygonList);
}

inline void write_mesh(std::ostream& out, const PolytopalMesh& mesh, MeshFormat format) {
  out << "# " << (format == MeshFormat::TriangleList ? "triangle-list" : "polygon-list") << " mesh";
  if (!mesh.name().empty()) out << " " << mesh.name();
  out << "\n" << mesh.num_vertices() << " " << mesh.num_cells() << "\n";
  out.precision(17);
  for (const auto& v : mesh.vertices()) out << v.x() << " " << v.y() << "\n";
  for (const auto& c : mesh.cells()) {
    if (format == MeshFormat::PolygonList) out << c.vertices.size();
    else if (c.vertices.size() != 3)
      throw MeshError(MeshError::Kind::Topology, "triangle-list output requires a triangulation");
    for (std::size_t k = 0; k < c.vertices.size(); ++k)
      out << (k == 0 && format == MeshFormat::TriangleList ? "" : " ") << c.vertices[k];
    out << "\n";
  }
}

/// Reader for the FVCA "typ1" text format used by the published benchmark
/// mesh families (sections "Vertices", "triangles"/"quadrangles"/...,
/// "cells"; 1-based indices; edge sections are ignored and rebuilt).
inline PolytopalMesh read_typ1(std::istream& in, const std::string& source = "<typ1>") {
  detail::LineReader reader(in, source);
  std::vector<std::string> tok;
  std::vector<Vec2> vertices;
  std::vector<std::vector<int>> cells;
  auto lower = [](std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return s;
  };
  const std::map<std::string, int> fixed = {
      {"triangles", 3}, {"quadrangles", 4}, {"pentagons", 5}, {"hexagons", 6}};
  bool more = reader.next(tok);
  while (more) {
    const std::string head = lower(tok[0]);
    if (head == "vertices") {
      if (!reader.next(tok)) reader.fail("missing vertex count");
      const long n = reader.number<long>(tok[0]);
      for (long i = 0; i < n; ++i) {
        if (!reader.next(tok) || tok.size() < 2) reader.fail("bad vertex line");
        vertices.emplace_back(reader.number<double>(tok[0]), reader.number<double>(tok[1]));
      }
      more = reader.next(tok);
    } else if (fixed.count(head) || head == "cells") {
      if (!reader.next(tok)) reader.fail("missing cell count");
      const long n = reader.number<long>(tok[0]);
      for (long i = 0; i < n; ++i) {
        if (!reader.next(tok)) reader.fail("bad cell line");
        std::vector<int> loop;
        std::size_t first = 0, count = tok.size();
        if (head == "cells") {
          count = reader.number<std::size_t>(tok[0]);
          first = 1;
        } else {
          count = static_cast<std::size_t>(fixed.at(head));
        }
        if (tok.size() < first + count) reader.fail("cell line too short");
        for (std::size_t k = 0; k < count; ++k) loop.push_back(reader.number<int>(tok[first + k]) - 1);
        cells.push_back(std::move(loop));
      }
      more = reader.next(tok);
    } else {
      // Skip unknown sections: a header line, a count, then that many lines.
      more = reader.next(tok);
      if (more && tok.size() == 1) {
        const long n = reader.number<long>(tok[0]);
        for (long i = 0; i < n && (more = reader.next(tok)); ++i) {
        }
        if (more) more = reader.next(tok);
      }
    }
  }
  if (vertices.empty() || cells.empty()) reader.fail("no vertices or cells found");
  // Published files are not guaranteed counterclockwise.
  for (auto& loop : cells) {
    std::vector<Vec2> poly;
    for (int v : loop)
      if (v >= 0 && v < static_cast<int>(vertices.size())) poly.push_back(vertices[v]);
    if (poly.size() == loop.size() && shoelace_area(poly) < 0) std::reverse(loop.begin(), loop.end());
  }
  return PolytopalMesh::build(std::move(vertices), std::move(cells), source);
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// Per-cell, per-edge and per-(cell, edge) geometric quantities.
/// (cell, local edge k) pairs are stored flat at offset(c) + k.
struct GeometryCache {
  std::vector<double> cell_area;
  std::vector<Vec2> cell_center;  // centroid
  std::vector<double> edge_length;
  std::vector<Vec2> edge_midpoint;
  std::vector<int> offset;             // size num_cells + 1
  std::vector<Vec2> normal;            // outward unit normal n_{K,s}
  std::vector<double> distance;        // orthogonal distance from the center to the edge line
  std::vector<double> subvolume;       // |D_{K,s}|, hull of center and edge
  std::vector<Vec2> subvolume_center;  // centroid of D_{K,s}
  double domain_area = 0.0;

  int local(int cell, int k) const noexcept { return offset[cell] + k; }
};

inline GeometryCache compute_geometry(const PolytopalMesh& mesh) {
  GeometryCache g;
  const auto& X = mesh.vertices();
  const std::size_t nc = mesh.num_cells();
  g.cell_area.resize(nc);
  g.cell_center.resize(nc);
  g.offset.assign(nc + 1, 0);
  for (std::size_t c = 0; c < nc; ++c) g.offset[c + 1] = g.offset[c] + static_cast<int>(mesh.cells()[c].edges.size());

  g.edge_length.resize(mesh.num_edges());
  g.edge_midpoint.resize(mesh.num_edges());
  for (std::size_t e = 0; e < mesh.num_edges(); ++e) {
    const auto& ed = mesh.edges()[e];
    g.edge_length[e] = (X[ed.vertices[1]] - X[ed.vertices[0]]).norm();
    g.edge_midpoint[e] = 0.5 * (X[ed.vertices[0]] + X[ed.vertices[1]]);
  }

  const std::size_t nloc = static_cast<std::size_t>(g.offset[nc]);
  g.normal.resize(nloc);
  g.distance.resize(nloc);
  g.subvolume.resize(nloc);
  g.subvolume_center.resize(nloc);
  for (std::size_t c = 0; c < nc; ++c) {
    const auto& cell = mesh.cells()[c];
    const std::size_t n = cell.vertices.size();
    // Centroid via the shoelace decomposition about the first vertex.
    double area2 = 0.0;
    Vec2 moment = Vec2::Zero();
    const Vec2& o = X[cell.vertices[0]];
    for (std::size_t k = 1; k + 1 < n; ++k) {
      const Vec2 a = X[cell.vertices[k]] - o, b = X[cell.vertices[k + 1]] - o;
      const double t = cross(a, b);
      area2 += t;
      moment += t * (a + b) / 3.0;
    }
    if (!(area2 > 0.0))
      throw MeshError(MeshError::Kind::Degenerate, "cell " + std::to_string(c) + ": zero or negative area");
    g.cell_area[c] = 0.5 * area2;
    g.cell_center[c] = o + moment / area2;
    const Vec2& xK = g.cell_center[c];
    for (std::size_t k = 0; k < n; ++k) {
      const Vec2& a = X[cell.vertices[k]];
      const Vec2& b = X[cell.vertices[(k + 1) % n]];
      const Vec2 t = b - a;
      const Vec2 nrm = Vec2(t.y(), -t.x()) / t.norm();  // outward for a counterclockwise loop
      const int i = g.offset[c] + static_cast<int>(k);
      g.normal[i] = nrm;
      g.distance[i] = (a - xK).dot(nrm);
      g.subvolume[i] = 0.5 * cross(a - xK, b - xK);
      g.subvolume_center[i] = (xK + a + b) / 3.0;
    }
  }
  g.domain_area = 0.0;
  for (double a : g.cell_area) g.domain_area += a;
  return g;
}

/// Median-dual (barycentric) control volumes of a triangulation.
struct DualMesh {
  std::vector<double> volume;
  std::vector<char> boundary;
};

inline DualMesh build_dual_mesh(const PolytopalMesh& mesh, const GeometryCache& geom) {
  if (!mesh.is_triangulation())
    throw MeshError(MeshError::Kind::Topology, "dual mesh requires a triangulation");
  DualMesh dual;
  dual.volume.assign(mesh.num_vertices(), 0.0);
  dual.boundary = mesh.boundary_vertex();
  const auto& X = mesh.vertices();
  for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
    const auto& cell = mesh.cells()[c];
    const Vec2& xK = geom.cell_center[c];
    for (int k = 0; k < 3; ++k) {
      // Quadrilateral s, mid(s, next), centroid, mid(prev, s).
      const int s = cell.vertices[k];
      const Vec2& xs = X[s];
      const Vec2 m_next = 0.5 * (xs + X[cell.vertices[(k + 1) % 3]]);
      const Vec2 m_prev = 0.5 * (xs + X[cell.vertices[(k + 2) % 3]]);
      dual.volume[s] += shoelace_area({xs, m_next, xK, m_prev});
    }
  }
  return dual;
}

// ---------------------------------------------------------------------------
// Point location
// ---------------------------------------------------------------------------

/// Closed point-in-polygon test with absolute tolerance `eps` on the boundary.
inline bool polygon_contains(const std::vector<Vec2>& poly, const Vec2& p, double eps) {
  const std::size_t n = poly.size();
  int winding = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const Vec2& a = poly[k];
    const Vec2& b = poly[(k + 1) % n];
    const Vec2 ab = b - a;
    const double len2 = ab.squaredNorm();
    const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    if ((a + t * ab - p).norm() <= eps) return true;
    if (a.y() <= p.y()) {
      if (b.y() > p.y() && cross(ab, p - a) > 0) ++winding;
    } else if (b.y() <= p.y() && cross(ab, p - a) < 0) {
      --winding;
    }
  }
  return winding != 0;
}

/// Bucket-grid accelerated cell location. Boundary points shared by several
/// cells resolve to the lowest cell id.
class CellLocator {
 public:
  explicit CellLocator(std::shared_ptr<const PolytopalMesh> mesh) : mesh_(std::move(mesh)) {
    const auto [lo, hi] = mesh_->bounding_box();
    lo_ = lo;
    const Vec2 span = hi - lo;
    eps_ = 1e-12 * std::max(1.0, span.maxCoeff());
    const auto nc = static_cast<double>(mesh_->num_cells());
    nx_ = std::max(1, static_cast<int>(std::sqrt(nc)));
    ny_ = nx_;
    cell_size_ = Vec2(span.x() / nx_, span.y() / ny_);
    buckets_.assign(static_cast<std::size_t>(nx_) * ny_, {});
    polys_.reserve(mesh_->num_cells());
    for (std::size_t c = 0; c < mesh_->num_cells(); ++c) {
      polys_.push_back(mesh_->cell_polygon(static_cast<int>(c)));
      Vec2 clo = polys_.back().front(), chi = clo;
      for (const auto& v : polys_.back()) {
        clo = clo.cwiseMin(v);
        chi = chi.cwiseMax(v);
      }
      const auto [i0, j0] = bucket_of(clo - Vec2::Constant(eps_));
      const auto [i1, j1] = bucket_of(chi + Vec2::Constant(eps_));
      for (int j = j0; j <= j1; ++j)
        for (int i = i0; i <= i1; ++i) buckets_[static_cast<std::size_t>(j) * nx_ + i].push_back(static_cast<int>(c));
    }
  }

  /// Returns -1 when the point lies outside the mesh.
  int find(const Vec2& p) const {
    const auto [i, j] = bucket_of(p);
    for (int c : buckets_[static_cast<std::size_t>(j) * nx_ + i])  // ascending ids
      if (polygon_contains(polys_[c], p, eps_)) return c;
    return -1;
  }
  int locate(const Vec2& p) const {
    const int c = find(p);
    if (c < 0) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "point (" << p.x() << ", " << p.y() << ") lies outside the mesh";
      throw MeshError(MeshError::Kind::Location, msg.str());
    }
    return c;
  }
  const PolytopalMesh& mesh() const noexcept { return *mesh_; }

 private:
  std::pair<int, int> bucket_of(const Vec2& p) const {
    auto idx = [](double v, double lo, double h, int n) {
      if (!(h > 0)) return 0;
      return std::clamp(static_cast<int>(std::floor((v - lo) / h)), 0, n - 1);
    };
    return {idx(p.x(), lo_.x(), cell_size_.x(), nx_), idx(p.y(), lo_.y(), cell_size_.y(), ny_)};
  }

  std::shared_ptr<const PolytopalMesh> mesh_;
  std::vector<std::vector<Vec2>> polys_;
  std::vector<std::vector<int>> buckets_;
  Vec2 lo_, cell_size_;
  int nx_ = 1, ny_ = 1;
  double eps_ = 0.0;
};

inline int locate_cell(const PolytopalMesh& mesh, const Vec2& point) {
  CellLocator locator(std::shared_ptr<const PolytopalMesh>(&mesh, [](const PolytopalMesh*) {}));
  return locator.locate(point);
}

}  // namespace sstefan
