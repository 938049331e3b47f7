#pragma once

#include "posediff/conditioning.hpp"
#include "posediff/image_io.hpp"
#include "posediff/mesh.hpp"
#include "posediff/pose.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace posediff {

enum class PrimitiveFamily { Box, Cylinder, BowlShell, Composite };

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

// Family parameters (meters unless noted):
//   Box:       width, height, depth
//   Cylinder:  radius, height
//   BowlShell: radius, depth_ratio (unitless), thickness
//   Composite: width, height, depth, knob_ratio (unitless); box body with an off-center top knob
struct CategorySpec {
  std::string name;
  PrimitiveFamily family = PrimitiveFamily::Box;
  std::map<std::string, Range> ranges;
  bool symmetric = false;
  Vec3 symmetry_axis = Vec3::UnitY();
  Vec3 color = Vec3(0.6, 0.6, 0.6);

  void validate() const;
  std::optional<Vec3> axis() const {
    return symmetric ? std::optional<Vec3>(symmetry_axis) : std::nullopt;
  }
};

// canister (symmetric cylinder), block (asymmetric composite), shell (symmetric bowl).
std::vector<CategorySpec> default_categories();

using PointSet32 = Eigen::Matrix<float, Eigen::Dynamic, 3, Eigen::RowMajor>;

struct ObjectModel {
  int category_id = 0;
  TriMesh mesh;       // canonical frame, centered on its bounding box
  Vec3 size;          // bounding-box extents
  double max_extent = 0.0;
  PointSet32 model_points;  // M_gt, canonical meters
  PointSet32 nocs_points;   // M_Ns = M_gt / max_extent
  Vec3 color;
  bool symmetric = false;
  Vec3 symmetry_axis = Vec3::UnitY();
};

ObjectModel make_object(const CategorySpec& spec, int category_id, std::uint64_t seed,
                        int num_points = 1024);

struct Camera {
  int width = 320;
  int height = 320;
  double fx = 560.0;
  double fy = 560.0;
  double cx = 160.0;
  double cy = 160.0;
};

struct RenderConfig {
  double depth_noise = 0.002;
  int num_points = 1024;
  int crop_size = 64;
  int max_candidates = 4096;  // visible pixels are subsampled to this before FPS
  Vec3 background = Vec3(0.45, 0.45, 0.45);
};

struct SceneSample {
  std::string scene_id;
  int category_id = 0;
  std::string category;
  Image8 image;                      // crop_size x crop_size RGB
  std::vector<std::uint8_t> mask;    // crop_size^2, 0 or 1
  PointSet32 points;                 // observed, camera frame meters
  PointSet32 model_points;           // M_gt
  PointSet32 nocs_points;            // NOCS of each observed point (row-aligned with points)
  Pose9D gt_pose;

  ObservationBatch observation() const;
};

struct PlacedObject {
  const ObjectModel* model = nullptr;
  Pose9D pose;  // object -> camera; translation is the box center
};

// Rasterizes every object into one depth buffer and returns one sample per
// visible object, in input order. Invisible objects are skipped with a warning.
std::vector<SceneSample> render_scene(const std::vector<PlacedObject>& objects, const Camera& camera,
                                      const RenderConfig& cfg, std::uint64_t seed);

struct ViewConfig {
  Range distance{0.5, 0.8};
  Range elevation_deg{15.0, 60.0};
  double lateral_jitter = 0.04;
};

// Upright object on a table (world +Y up), camera at a random elevation looking at it.
Pose9D sample_object_pose(const ObjectModel& model, const ViewConfig& view, std::mt19937_64& rng);

struct GenerationConfig {
  std::vector<CategorySpec> categories = default_categories();
  int train_per_category = 300;
  int test_per_category = 20;
  std::uint64_t seed = 0;
  Camera camera;
  RenderConfig render;
  ViewConfig view;
};

// Deterministic per-scene seed from the master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);
// Per-scene stream keyed by the scene id (FNV-1a), stable across platforms.
std::uint64_t scene_seed(std::uint64_t master, const std::string& scene_id);

SceneSample generate_scene(const GenerationConfig& cfg, int category_id, std::uint64_t seed,
                           const std::string& scene_id);

}  // namespace posediff
