#pragma once

#include "posediff/pose.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace posediff {

// Homogeneous rigid transform; construction checks the rotation block and bottom row.
class RigidTransform {
 public:
  RigidTransform() : m_(Eigen::Matrix4d::Identity()) {}
  explicit RigidTransform(const Eigen::Matrix4d& m);
  RigidTransform(const Rotation3& r, const Vec3& t);

  static RigidTransform identity() { return RigidTransform(); }
  static RigidTransform from_pose(const Pose9D& pose) { return RigidTransform(pose.rotation, pose.translation); }

  const Eigen::Matrix4d& matrix() const { return m_; }
  Mat3 rotation() const { return m_.topLeftCorner<3, 3>(); }
  Vec3 translation() const { return m_.topRightCorner<3, 1>(); }
  Vec3 apply(const Vec3& p) const { return rotation() * p + translation(); }
  RigidTransform inverse() const;
  RigidTransform operator*(const RigidTransform& o) const;

 private:
  Eigen::Matrix4d m_;
};

// M_o2t = M_e2t * M_c2e * M_o2c
RigidTransform compose_o2t(const RigidTransform& e2t, const RigidTransform& c2e, const RigidTransform& o2c);

struct GraspObject {
  std::string id;
  Pose9D pose;               // object -> frame of the points
  Eigen::MatrixX3d points;   // observed points; the camera sits at the origin
};

struct GraspConfig {
  Vec3 up = Vec3::UnitY();
  double lift_m = 0.02;
  double tilt_deg = 30.0;
};

struct GraspPlan {
  int order_index = 0;   // position in the grasp sequence
  int object_index = 0;  // index into the input list
  std::string id;
  Vec3 center;           // pose translation
  double center_depth = 0.0;  // z of the point-cloud mean
  Vec3 grasp_point;
  Vec3 predefined_dir;   // unit vector from the projected closest point to the center
  Vec3 approach_dir;     // predefined_dir tilted toward `up`
  Vec3 closing_dir;      // object X axis
};

// Sequence by ascending center depth. Objects without points are skipped.
std::vector<GraspPlan> plan_grasps(const std::vector<GraspObject>& objects, const GraspConfig& cfg = {});

nlohmann::json plans_to_json(const std::vector<GraspPlan>& plans);
void write_plan(const std::vector<GraspPlan>& plans, const std::filesystem::path& path);

}  // namespace posediff
