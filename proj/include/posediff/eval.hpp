#pragma once

#include "posediff/datagen.hpp"
#include "posediff/pose.hpp"

#include "json.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace posediff {

struct OrientedBox3D {
  Eigen::Matrix<double, 8, 3> corners;  // row k: center + R * (sign bits of k) * s/2
  Vec3 center;
  Mat3 axes;  // columns are the box axes
  Vec3 extents;

  double volume() const { return extents.prod(); }
};

OrientedBox3D box_from_pose(const Pose9D& pose);

inline constexpr int kIouSamples = 200000;
inline constexpr int kIouSymmetryRotations = 60;

// Monte-Carlo IoU over a fixed-seed sample of the union's bounding box. With a
// symmetry axis (object frame of `a`), the best of 60 rotations of `a` about it.
double iou3d(const OrientedBox3D& a, const OrientedBox3D& b,
             const std::optional<Vec3>& symmetry_axis = std::nullopt, std::uint64_t seed = 0,
             int samples = kIouSamples);

// Strict thresholds on both errors.
bool pose_hit(const Pose9D& pred, const Pose9D& gt, double deg, double cm, bool symmetric,
              const Vec3& symmetry_axis = Vec3::UnitY());

struct InstanceResult {
  std::string scene_id;
  std::string category;
  double rot_err_deg = 0.0;
  double trans_err_cm = 0.0;
  double iou = 0.0;
};

struct MetricValues {
  double iou50 = 0.0;
  double iou75 = 0.0;
  double deg5_cm2 = 0.0;
  double deg5_cm5 = 0.0;
  double deg10_cm2 = 0.0;
  double deg10_cm5 = 0.0;
  int count = 0;

  static const std::vector<std::string>& names();
  std::vector<double> values() const;
};

struct MetricsReport {
  std::vector<std::string> categories;
  std::vector<MetricValues> per_category;
  MetricValues mean;  // unweighted mean over categories
  int count = 0;
  std::vector<InstanceResult> instances;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

// Fraction of instances with rot_err < deg and trans_err < cm.
double fraction_hit(const std::vector<InstanceResult>& instances, double deg, double cm);
MetricsReport summarize(const std::vector<InstanceResult>& instances);

using Predictor = std::function<Pose9D(const SceneSample&)>;

struct EvalOptions {
  std::vector<CategorySpec> categories = default_categories();
  std::uint64_t iou_seed = 0;
  int iou_samples = kIouSamples;
};

MetricsReport evaluate(const std::vector<SceneSample>& dataset, const Predictor& predictor,
                       const EvalOptions& opts = {});

void write_report(const MetricsReport& report, const std::filesystem::path& dir);

// Uniform rotation, translation at the observed centroid, size uniform in [lo, hi] per axis.
Predictor random_pose_predictor(std::uint64_t seed, double size_lo = 0.03, double size_hi = 0.2);

struct Similarity {
  double scale = 1.0;
  Rotation3 rotation;
  Vec3 translation = Vec3::Zero();
};

// Least-squares dst ~ scale * R * src + t with a proper rotation.
Similarity umeyama_align(const Eigen::MatrixX3d& src, const Eigen::MatrixX3d& dst);

}  // namespace posediff
