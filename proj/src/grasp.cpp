#include "posediff/grasp.hpp"

#include "posediff/errors.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

namespace posediff {

namespace {

constexpr double kRigidTol = 1e-9;

void check_rigid(const Eigen::Matrix4d& m) {
  if (!m.allFinite()) fail(ErrorKind::InvalidInput, "transform has non-finite entries");
  if (m(3, 0) != 0.0 || m(3, 1) != 0.0 || m(3, 2) != 0.0 || m(3, 3) != 1.0)
    fail(ErrorKind::InvalidInput, "transform bottom row must be [0 0 0 1]");
  const Mat3 r = m.topLeftCorner<3, 3>();
  if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > kRigidTol || r.determinant() <= 0.0)
    fail(ErrorKind::InvalidInput, "transform rotation block is not a proper rotation");
}

}  // namespace

RigidTransform::RigidTransform(const Eigen::Matrix4d& m) : m_(m) { check_rigid(m_); }

RigidTransform::RigidTransform(const Rotation3& r, const Vec3& t) : m_(Eigen::Matrix4d::Identity()) {
  m_.topLeftCorner<3, 3>() = r.matrix();
  m_.topRightCorner<3, 1>() = t;
  check_rigid(m_);
}

RigidTransform RigidTransform::inverse() const {
  Eigen::Matrix4d inv = Eigen::Matrix4d::Identity();
  inv.topLeftCorner<3, 3>() = rotation().transpose();
  inv.topRightCorner<3, 1>() = -(rotation().transpose() * translation());
  return RigidTransform(inv);
}

RigidTransform RigidTransform::operator*(const RigidTransform& o) const {
  Eigen::Matrix4d p = m_ * o.m_;
  p.row(3) << 0.0, 0.0, 0.0, 1.0;
  return RigidTransform(p);
}

RigidTransform compose_o2t(const RigidTransform& e2t, const RigidTransform& c2e, const RigidTransform& o2c) {
  return e2t * c2e * o2c;
}

std::vector<GraspPlan> plan_grasps(const std::vector<GraspObject>& objects, const GraspConfig& cfg) {
  if (objects.empty()) fail(ErrorKind::InvalidInput, "plan_grasps needs at least one object");
  if (!(cfg.up.norm() > 0.0)) fail(ErrorKind::Config, "grasp up vector must be nonzero");
  const Vec3 up = cfg.up.normalized();
  const double tilt = cfg.tilt_deg * std::numbers::pi / 180.0;

  std::vector<GraspPlan> plans;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const GraspObject& obj = objects[i];
    if (obj.points.rows() == 0) {
      spdlog::warn("plan_grasps: object {} has no points, skipped", obj.id.empty() ? std::to_string(i) : obj.id);
      continue;
    }
    const Mat3& R = obj.pose.rotation.matrix();
    const Vec3 c = obj.pose.translation;
    const Vec3 z_axis = R.col(2);

    Eigen::Index nearest = 0;
    obj.points.rowwise().squaredNorm().minCoeff(&nearest);
    const Vec3 p_close = obj.points.row(nearest).transpose();
    const Vec3 p_proj = c + (p_close - c).dot(z_axis) * z_axis;
    Vec3 dir = c - p_proj;
    if (dir.norm() < 1e-9) {
      // Closest point level with the center: take Z pointing away from the camera.
      dir = z_axis.dot(c) >= 0.0 ? z_axis : Vec3(-z_axis);
    }
    dir.normalize();

    GraspPlan p;
    p.object_index = static_cast<int>(i);
    p.id = obj.id;
    p.center = c;
    p.center_depth = obj.points.col(2).mean();
    p.grasp_point = c + cfg.lift_m * up;
    p.predefined_dir = dir;
    const Vec3 w = up - up.dot(dir) * dir;
    if (w.norm() < 1e-9) {
      spdlog::warn("plan_grasps: approach of object {} is parallel to up, tilt skipped", i);
      p.approach_dir = dir;
    } else {
      p.approach_dir = (std::cos(tilt) * dir + std::sin(tilt) * w.normalized()).normalized();
    }
    p.closing_dir = R.col(0).normalized();
    plans.push_back(p);
  }
  std::stable_sort(plans.begin(), plans.end(),
                   [](const GraspPlan& a, const GraspPlan& b) { return a.center_depth < b.center_depth; });
  for (std::size_t k = 0; k < plans.size(); ++k) plans[k].order_index = static_cast<int>(k);
  return plans;
}

nlohmann::json plans_to_json(const std::vector<GraspPlan>& plans) {
  auto v = [](const Vec3& x) { return nlohmann::json{x.x(), x.y(), x.z()}; };
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : plans) {
    arr.push_back({{"order_index", p.order_index},
                   {"object_index", p.object_index},
                   {"id", p.id},
                   {"center", v(p.center)},
                   {"center_depth", p.center_depth},
                   {"grasp_point", v(p.grasp_point)},
                   {"predefined_dir", v(p.predefined_dir)},
                   {"approach_dir", v(p.approach_dir)},
                   {"closing_dir", v(p.closing_dir)}});
  }
  return arr;
}

void write_plan(const std::vector<GraspPlan>& plans, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) fail(ErrorKind::Config, "cannot write " + path.string());
  os << plans_to_json(plans).dump(2) << "\n";
}

}  // namespace posediff
