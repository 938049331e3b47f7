#pragma once

#include "posediff/pose.hpp"

#include <array>
#include <random>
#include <vector>

namespace posediff {

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;

  void append(const TriMesh& other);
  void translate(const Vec3& offset);
  Vec3 bbox_min() const;
  Vec3 bbox_max() const;
  Vec3 face_normal(std::size_t f) const;
  double face_area(std::size_t f) const;
  double area() const;
};

// Closed axis-aligned box centered at `center`.
TriMesh box_mesh(const Vec3& extents, const Vec3& center = Vec3::Zero());
// Closed cylinder along +Y, base at y = 0.
TriMesh cylinder_mesh(double radius, double height, int segments = 48);
// Closed bowl: outer and inner spherical-cap walls joined by a flat rim, base at y = 0.
TriMesh bowl_mesh(double radius, double depth, double thickness, int segments = 48, int rings = 12);

// Area-weighted uniform samples on the surface, n x 3.
Eigen::MatrixX3d sample_surface(const TriMesh& mesh, int n, std::mt19937_64& rng);

// Euclidean distance from p to the closest point of triangle (a, b, c).
double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

// Greedy farthest-point subset of `points` (rows), starting at `start`.
std::vector<int> farthest_point_sample(const Eigen::MatrixX3d& points, int k, int start);

}  // namespace posediff
