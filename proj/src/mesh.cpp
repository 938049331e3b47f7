#include "posediff/mesh.hpp"

#include "posediff/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace posediff {

void TriMesh::append(const TriMesh& other) {
  const int base = static_cast<int>(vertices.size());
  vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
  for (const auto& f : other.faces) faces.push_back({f[0] + base, f[1] + base, f[2] + base});
}

void TriMesh::translate(const Vec3& offset) {
  for (auto& v : vertices) v += offset;
}

Vec3 TriMesh::bbox_min() const {
  Vec3 m = Vec3::Constant(std::numeric_limits<double>::infinity());
  for (const auto& v : vertices) m = m.cwiseMin(v);
  return m;
}

Vec3 TriMesh::bbox_max() const {
  Vec3 m = Vec3::Constant(-std::numeric_limits<double>::infinity());
  for (const auto& v : vertices) m = m.cwiseMax(v);
  return m;
}

Vec3 TriMesh::face_normal(std::size_t f) const {
  const auto& t = faces[f];
  const Vec3 n = (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
  const double len = n.norm();
  return len > 0.0 ? Vec3(n / len) : Vec3::UnitY();
}

double TriMesh::face_area(std::size_t f) const {
  const auto& t = faces[f];
  return 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
}

double TriMesh::area() const {
  double a = 0.0;
  for (std::size_t f = 0; f < faces.size(); ++f) a += face_area(f);
  return a;
}

namespace {

void add_quad(TriMesh& m, int a, int b, int c, int d) {
  m.faces.push_back({a, b, c});
  m.faces.push_back({a, c, d});
}

int add_vertex(TriMesh& m, const Vec3& v) {
  m.vertices.push_back(v);
  return static_cast<int>(m.vertices.size()) - 1;
}

}  // namespace

TriMesh box_mesh(const Vec3& extents, const Vec3& center) {
  TriMesh m;
  const Vec3 h = extents / 2.0;
  for (int i = 0; i < 8; ++i) {
    const Vec3 s((i & 1) ? 1.0 : -1.0, (i & 2) ? 1.0 : -1.0, (i & 4) ? 1.0 : -1.0);
    m.vertices.push_back(center + s.cwiseProduct(h));
  }
  // Outward-facing quads.
  add_quad(m, 0, 4, 6, 2);  // -x
  add_quad(m, 1, 3, 7, 5);  // +x
  add_quad(m, 0, 1, 5, 4);  // -y
  add_quad(m, 2, 6, 7, 3);  // +y
  add_quad(m, 0, 2, 3, 1);  // -z
  add_quad(m, 4, 5, 7, 6);  // +z
  return m;
}

TriMesh cylinder_mesh(double radius, double height, int segments) {
  TriMesh m;
  const int c0 = add_vertex(m, Vec3(0.0, 0.0, 0.0));
  const int c1 = add_vertex(m, Vec3(0.0, height, 0.0));
  std::vector<int> lo, hi;
  for (int i = 0; i < segments; ++i) {
    const double a = 2.0 * std::numbers::pi * i / segments;
    lo.push_back(add_vertex(m, Vec3(radius * std::cos(a), 0.0, radius * std::sin(a))));
    hi.push_back(add_vertex(m, Vec3(radius * std::cos(a), height, radius * std::sin(a))));
  }
  for (int i = 0; i < segments; ++i) {
    const int j = (i + 1) % segments;
    add_quad(m, lo[i], hi[i], hi[j], lo[j]);
    m.faces.push_back({c0, lo[i], lo[j]});
    m.faces.push_back({c1, hi[j], hi[i]});
  }
  return m;
}

TriMesh bowl_mesh(double radius, double depth, double thickness, int segments, int rings) {
  if (!(thickness > 0.0 && thickness < radius && thickness < depth))
    fail(ErrorKind::InvalidInput, "bowl thickness must be below radius and depth");
  TriMesh m;
  // Wall profile: (r, y) = (R sin(phi), D (1 - cos(phi))) for phi in [0, pi/2].
  auto ring_vertices = [&](double r_scale, double d_scale, double y0, int k) {
    std::vector<int> ids;
    const double phi = 0.5 * std::numbers::pi * k / rings;
    const double r = r_scale * std::sin(phi);
    const double y = y0 + d_scale * (1.0 - std::cos(phi));
    for (int i = 0; i < segments; ++i) {
      const double a = 2.0 * std::numbers::pi * i / segments;
      ids.push_back(add_vertex(m, Vec3(r * std::cos(a), y, r * std::sin(a))));
    }
    return ids;
  };
  const double ri = radius - thickness;
  const double di = depth - thickness;
  const int outer_pole = add_vertex(m, Vec3(0.0, 0.0, 0.0));
  const int inner_pole = add_vertex(m, Vec3(0.0, thickness, 0.0));
  std::vector<std::vector<int>> outer, inner;
  for (int k = 1; k <= rings; ++k) {
    outer.push_back(ring_vertices(radius, depth, 0.0, k));
    inner.push_back(ring_vertices(ri, di, thickness, k));
  }
  for (int i = 0; i < segments; ++i) {
    const int j = (i + 1) % segments;
    m.faces.push_back({outer_pole, outer[0][j], outer[0][i]});
    m.faces.push_back({inner_pole, inner[0][i], inner[0][j]});
    for (int k = 0; k + 1 < rings; ++k) {
      add_quad(m, outer[k][i], outer[k][j], outer[k + 1][j], outer[k + 1][i]);
      add_quad(m, inner[k][i], inner[k + 1][i], inner[k + 1][j], inner[k][j]);
    }
    // Rim annulus at y = depth.
    add_quad(m, outer.back()[i], outer.back()[j], inner.back()[j], inner.back()[i]);
  }
  return m;
}

Eigen::MatrixX3d sample_surface(const TriMesh& mesh, int n, std::mt19937_64& rng) {
  if (mesh.faces.empty()) fail(ErrorKind::InvalidInput, "cannot sample an empty mesh");
  std::vector<double> cdf(mesh.faces.size());
  double acc = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    acc += mesh.face_area(f);
    cdf[f] = acc;
  }
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Eigen::MatrixX3d out(n, 3);
  for (int i = 0; i < n; ++i) {
    const double r = u01(rng) * acc;
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), r);
    const auto f = static_cast<std::size_t>(std::min<std::ptrdiff_t>(
        it - cdf.begin(), static_cast<std::ptrdiff_t>(cdf.size()) - 1));
    double a = u01(rng);
    double b = u01(rng);
    if (a + b > 1.0) {
      a = 1.0 - a;
      b = 1.0 - b;
    }
    const auto& t = mesh.faces[f];
    const Vec3& v0 = mesh.vertices[t[0]];
    // Edge-vector form keeps coordinates exact on axis-aligned faces.
    out.row(i) = (v0 + a * (mesh.vertices[t[1]] - v0) + b * (mesh.vertices[t[2]] - v0)).transpose();
  }
  return out;
}

double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Closest-point classification over the triangle's Voronoi regions.
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return ap.norm();
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return bp.norm();
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return (p - (a + d1 / (d1 - d3) * ab)).norm();
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return cp.norm();
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return (p - (a + d2 / (d2 - d6) * ac)).norm();
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
    return (p - (b + (d4 - d3) / ((d4 - d3) + (d5 - d6)) * (c - b))).norm();
  const double denom = 1.0 / (va + vb + vc);
  return (p - (a + ab * (vb * denom) + ac * (vc * denom))).norm();
}

std::vector<int> farthest_point_sample(const Eigen::MatrixX3d& points, int k, int start) {
  const auto n = static_cast<int>(points.rows());
  if (k > n) fail(ErrorKind::InvalidInput, "farthest point sampling asks for more points than given");
  std::vector<int> chosen;
  chosen.reserve(static_cast<std::size_t>(k));
  Eigen::VectorXd dist = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  int cur = start;
  for (int i = 0; i < k; ++i) {
    chosen.push_back(cur);
    dist = dist.cwiseMin((points.rowwise() - points.row(cur)).rowwise().squaredNorm());
    dist.maxCoeff(&cur);
  }
  return chosen;
}

}  // namespace posediff
