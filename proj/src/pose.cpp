#include "posediff/pose.hpp"

#include "posediff/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace posediff {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::DegenerateRotation: return "degenerate-rotation";
    case ErrorKind::Config: return "config";
    case ErrorKind::Index: return "index";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Ingestion: return "ingestion";
    case ErrorKind::Diverged: return "diverged";
    case ErrorKind::Checkpoint: return "checkpoint";
  }
  return "unknown";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Checkpoint:
      return kExitConfig;
    case ErrorKind::Ingestion:
    case ErrorKind::InvalidInput:
    case ErrorKind::Shape:
    case ErrorKind::Index:
      return kExitData;
    case ErrorKind::Diverged:
    case ErrorKind::DegenerateRotation:
      return kExitDiverged;
  }
  return 1;
}

namespace {

constexpr double kRotationTol = 1e-6;

bool is_rotation(const Mat3& m) {
  if (!m.allFinite()) return false;
  const double ortho = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= kRotationTol && std::abs(m.determinant() - 1.0) <= kRotationTol;
}

}  // namespace

Rotation3::Rotation3(const Mat3& m) : m_(m) {
  if (!is_rotation(m)) fail(ErrorKind::InvalidInput, "matrix is not a proper rotation");
}

Rotation3 Rotation3::about_axis(const Vec3& axis, double angle_rad) {
  const double n = axis.norm();
  if (!(n > 0.0)) fail(ErrorKind::InvalidInput, "rotation axis must be non-zero");
  return Rotation3(Eigen::AngleAxisd(angle_rad, axis / n).toRotationMatrix(), Unchecked{});
}

Rotation3 Rotation3::operator*(const Rotation3& o) const {
  return Rotation3(m_ * o.m_, Unchecked{});
}

Rotation3 Rotation3::transpose() const { return Rotation3(m_.transpose(), Unchecked{}); }

void Pose9D::validate() const {
  if (!translation.allFinite()) fail(ErrorKind::InvalidInput, "pose translation is not finite");
  if (!size.allFinite() || (size.array() <= 0.0).any())
    fail(ErrorKind::InvalidInput, "pose size components must be positive and finite");
}

void NormalizationContext::validate() const {
  if (!centroid.allFinite()) fail(ErrorKind::InvalidInput, "normalization centroid is not finite");
  if (!(scale > 0.0) || !std::isfinite(scale))
    fail(ErrorKind::InvalidInput, "normalization scale must be positive");
}

PoseVec15 flatten(const Pose9D& pose, const NormalizationContext& ctx) {
  pose.validate();
  ctx.validate();
  PoseVec15 v;
  v.segment<3>(0) = (pose.translation - ctx.centroid) / ctx.scale;
  v.segment<3>(3) = pose.size / ctx.scale;
  const Mat3& r = pose.rotation.matrix();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) v(6 + 3 * i + j) = r(i, j);
  return v;
}

Pose9D unflatten(const PoseVec15& v, const NormalizationContext& ctx) {
  ctx.validate();
  if (!v.allFinite()) fail(ErrorKind::InvalidInput, "pose vector is not finite");
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = v(6 + 3 * i + j);
  if (r.cwiseAbs().maxCoeff() == 0.0)
    fail(ErrorKind::DegenerateRotation, "rotation block is all zero");

  Pose9D pose;
  pose.translation = ctx.centroid + ctx.scale * v.segment<3>(0);
  pose.size = (ctx.scale * v.segment<3>(3)).cwiseMax(kMinSizeFraction * ctx.scale);
  pose.rotation = so3_project(r);
  return pose;
}

Rotation3 so3_project(const Mat3& m) {
  if (!m.allFinite()) fail(ErrorKind::InvalidInput, "matrix to project is not finite");
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (sv(2) < 1e-12 * std::max(1.0, sv(0)))
    fail(ErrorKind::DegenerateRotation, "matrix is rank deficient, cannot project to SO(3)");
  const Mat3& u = svd.matrixU();
  const Mat3& vt = svd.matrixV().transpose();
  Mat3 d = Mat3::Identity();
  if ((u * vt).determinant() < 0.0) d(2, 2) = -1.0;
  return Rotation3(u * d * vt);
}

double rotation_error_deg(const Rotation3& a, const Rotation3& b,
                          const std::optional<Vec3>& symmetry_axis) {
  // atan2 form of the arccos identities; stays accurate near zero angle.
  double sin_angle = 0.0;
  double cos_angle = 0.0;
  if (symmetry_axis) {
    const Vec3 axis = symmetry_axis->normalized();
    const Vec3 ua = a * axis;
    const Vec3 ub = b * axis;
    sin_angle = ua.cross(ub).norm();
    cos_angle = std::clamp(ua.dot(ub), -1.0, 1.0);
  } else {
    const Mat3 rel = a.matrix().transpose() * b.matrix();
    const Vec3 skew(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0), rel(1, 0) - rel(0, 1));
    sin_angle = 0.5 * skew.norm();
    cos_angle = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
  }
  return std::atan2(sin_angle, cos_angle) * 180.0 / std::numbers::pi;
}

double translation_error_cm(const Vec3& a, const Vec3& b) { return (a - b).norm() * 100.0; }

}  // namespace posediff
