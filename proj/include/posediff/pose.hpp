#pragma once

#include <Eigen/Dense>

#include <optional>

namespace posediff {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec15 = Eigen::Matrix<double, 15, 1>;

// Proper rotation (orthonormal, det +1). Construction validates.
class Rotation3 {
 public:
  Rotation3() : m_(Mat3::Identity()) {}
  explicit Rotation3(const Mat3& m);

  static Rotation3 identity() { return Rotation3(); }
  // Rodrigues rotation about a (not necessarily unit) axis.
  static Rotation3 about_axis(const Vec3& axis, double angle_rad);

  const Mat3& matrix() const { return m_; }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }
  Rotation3 operator*(const Rotation3& o) const;
  Rotation3 transpose() const;

 private:
  struct Unchecked {};
  Rotation3(const Mat3& m, Unchecked) : m_(m) {}
  Mat3 m_;
};

struct Pose9D {
  Vec3 translation = Vec3::Zero();  // meters, camera frame
  Rotation3 rotation;
  Vec3 size = Vec3::Ones();  // meters, full box extents along object axes

  void validate() const;
};

// Diffusion state: [t(3), s(3), R row-major(9)], all normalized.
using PoseVec15 = Vec15;

struct NormalizationContext {
  Vec3 centroid = Vec3::Zero();
  double scale = 0.3;

  void validate() const;
};

PoseVec15 flatten(const Pose9D& pose, const NormalizationContext& ctx);
Pose9D unflatten(const PoseVec15& v, const NormalizationContext& ctx);

// Nearest rotation in Frobenius norm.
Rotation3 so3_project(const Mat3& m);

// Geodesic angle, or the angle between mapped symmetry axes when `symmetry_axis`
// (a unit vector in the object frame) is given.
double rotation_error_deg(const Rotation3& a, const Rotation3& b,
                          const std::optional<Vec3>& symmetry_axis = std::nullopt);

double translation_error_cm(const Vec3& a, const Vec3& b);

// Minimum decoded size as a fraction of the normalization scale.
inline constexpr double kMinSizeFraction = 1e-4;

}  // namespace posediff
