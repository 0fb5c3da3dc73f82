#pragma once

// Generators for the two refinement families on the unit square:
//   mesh1-XX  triangles: n x n squares; in each 2x2 block three squares are
//             split at their centre into 4 triangles, one by a diagonal.
//   hexa1-XX  hexagons: m rows of m brick-offset cells with zig-zag row
//             lines; boundary edges away from the corners carry a midpoint.

#include "sstefan/mesh.hpp"

#include <optional>
#include <regex>

namespace sstefan {

inline PolytopalMesh make_mesh1(int n, std::string name = {}) {
  if (n < 2 || n % 2 != 0) throw std::invalid_argument("mesh1 family needs an even number of squares per side");
  std::vector<Vec2> X;
  const double h = 1.0 / n;
  auto grid = [n](int i, int j) { return j * (n + 1) + i; };
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i) X.emplace_back(i * h, j * h);
  std::vector<std::vector<int>> cells;
  for (int b = 0; b < n; ++b) {
    for (int a = 0; a < n; ++a) {
      const int v00 = grid(a, b), v10 = grid(a + 1, b), v11 = grid(a + 1, b + 1), v01 = grid(a, b + 1);
      if (a % 2 == 1 && b % 2 == 1) {
        cells.push_back({v00, v10, v11});
        cells.push_back({v00, v11, v01});
      } else {
        const int c = static_cast<int>(X.size());
        X.emplace_back((a + 0.5) * h, (b + 0.5) * h);
        cells.push_back({v00, v10, c});
        cells.push_back({v10, v11, c});
        cells.push_back({v11, v01, c});
        cells.push_back({v01, v00, c});
      }
    }
  }
  return PolytopalMesh::build(std::move(X), std::move(cells), std::move(name));
}

inline PolytopalMesh make_hexa1(int m, std::string name = {}) {
  if (m < 3) throw std::invalid_argument("hexa1 family needs at least 3 cells per side");
  const double d = 1.0 / m;
  const double eps = d / 6.0;
  // Interior walls of row r sit at (i -/+ 1/4) d for even/odd rows.
  auto wall = [d](int row, int i) { return (i + (row % 2 == 0 ? -0.25 : 0.25)) * d; };

  std::vector<Vec2> X;
  auto add = [&X](double x, double y) {
    X.emplace_back(x, y);
    return static_cast<int>(X.size()) - 1;
  };
  // On each horizontal line j: wall endpoints from the row below (top) and above (bottom).
  std::vector<std::vector<int>> top(m, std::vector<int>(m + 1)), bottom(m, std::vector<int>(m + 1));
  std::vector<int> left(m + 1), right(m + 1);
  for (int j = 0; j <= m; ++j) {
    const double y = j * d;
    left[j] = add(0.0, y);
    right[j] = add(1.0, y);
    if (j > 0) {
      top[j - 1][0] = left[j];
      top[j - 1][m] = right[j];
      for (int i = 1; i < m; ++i) top[j - 1][i] = add(wall(j - 1, i), j == m ? y : y - eps);
    }
    if (j < m) {
      bottom[j][0] = left[j];
      bottom[j][m] = right[j];
      for (int i = 1; i < m; ++i) bottom[j][i] = add(wall(j, i), j == 0 ? y : y + eps);
    }
  }
  // Midpoints on boundary edges away from the corners.
  std::vector<int> mid_bottom(m, -1), mid_top(m, -1), mid_left(m, -1), mid_right(m, -1);
  for (int k = 1; k + 1 < m; ++k) {
    mid_bottom[k] = add(0.5 * (X[bottom[0][k]].x() + X[bottom[0][k + 1]].x()), 0.0);
    mid_top[k] = add(0.5 * (X[top[m - 1][k]].x() + X[top[m - 1][k + 1]].x()), 1.0);
    mid_left[k] = add(0.0, (k + 0.5) * d);
    mid_right[k] = add(1.0, (k + 0.5) * d);
  }

  std::vector<std::vector<int>> cells;
  for (int r = 0; r < m; ++r) {
    for (int a = 0; a < m; ++a) {
      const double x0 = X[bottom[r][a]].x(), x1 = X[bottom[r][a + 1]].x();
      std::vector<int> loop;
      loop.push_back(bottom[r][a]);
      if (r == 0) {
        if (mid_bottom[a] >= 0) loop.push_back(mid_bottom[a]);
      } else {
        for (int i = 1; i < m; ++i)  // walls of the row below meeting this cell's bottom
          if (X[top[r - 1][i]].x() > x0 && X[top[r - 1][i]].x() < x1) loop.push_back(top[r - 1][i]);
      }
      loop.push_back(bottom[r][a + 1]);
      if (a == m - 1 && mid_right[r] >= 0) loop.push_back(mid_right[r]);
      loop.push_back(top[r][a + 1]);
      if (r == m - 1) {
        if (mid_top[a] >= 0) loop.push_back(mid_top[a]);
      } else {
        for (int i = m - 1; i >= 1; --i)
          if (X[bottom[r + 1][i]].x() > x0 && X[bottom[r + 1][i]].x() < x1) loop.push_back(bottom[r + 1][i]);
      }
      loop.push_back(top[r][a]);
      if (a == 0 && mid_left[r] >= 0) loop.push_back(mid_left[r]);
      cells.push_back(std::move(loop));
    }
  }
  return PolytopalMesh::build(std::move(X), std::move(cells), std::move(name));
}

struct FamilyMember {
  std::string family;  // "mesh1" or "hexa1"
  int level;           // 1-based
  int resolution;      // squares (mesh1) or cells (hexa1) per side
};

inline const std::vector<int>& mesh1_resolutions() {
  static const std::vector<int> r{4, 8, 16, 20, 32, 64};
  return r;
}
inline const std::vector<int>& hexa1_resolutions() {
  static const std::vector<int> r{11, 21, 29, 41, 81};
  return r;
}

inline std::string family_id(const std::string& family, int level) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%02d", family.c_str(), level);
  return buf;
}

/// Parses ids such as "mesh1-03" or "hexa1-2".
inline std::optional<FamilyMember> parse_family_id(const std::string& id) {
  static const std::regex re(R"((mesh1|hexa1)[-_]0*([1-9][0-9]*))");
  std::smatch m;
  if (!std::regex_match(id, m, re)) return std::nullopt;
  const std::string fam = m[1];
  const int level = std::stoi(m[2]);
  const auto& res = fam == "mesh1" ? mesh1_resolutions() : hexa1_resolutions();
  if (level < 1 || level > static_cast<int>(res.size())) return std::nullopt;
  return FamilyMember{fam, level, res[level - 1]};
}

inline PolytopalMesh make_family_mesh(const FamilyMember& member) {
  const std::string name = family_id(member.family, member.level);
  return member.family == "mesh1" ? make_mesh1(member.resolution, name) : make_hexa1(member.resolution, name);
}

}  // namespace sstefan
