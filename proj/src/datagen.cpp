#include "posediff/datagen.hpp"

#include "posediff/errors.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace posediff {

void CategorySpec::validate() const {
  for (const auto& [key, r] : ranges) {
    if (!(r.lo > 0.0) || r.hi < r.lo)
      fail(ErrorKind::Config, "category " + name + ": range '" + key + "' must satisfy 0 < lo <= hi");
  }
  if (symmetric && !(symmetry_axis.norm() > 0.0))
    fail(ErrorKind::Config, "category " + name + ": symmetric categories need an axis");
}

std::vector<CategorySpec> default_categories() {
  CategorySpec canister;
  canister.name = "canister";
  canister.family = PrimitiveFamily::Cylinder;
  canister.ranges = {{"radius", {0.03, 0.05}}, {"height", {0.08, 0.18}}};
  canister.symmetric = true;
  canister.color = Vec3(0.80, 0.25, 0.20);

  CategorySpec block;
  block.name = "block";
  block.family = PrimitiveFamily::Composite;
  block.ranges = {{"width", {0.10, 0.16}},
                  {"height", {0.05, 0.09}},
                  {"depth", {0.05, 0.08}},
                  {"knob_ratio", {0.25, 0.35}}};
  block.symmetric = false;
  block.color = Vec3(0.25, 0.45, 0.80);

  CategorySpec shell;
  shell.name = "shell";
  shell.family = PrimitiveFamily::BowlShell;
  shell.ranges = {{"radius", {0.05, 0.09}}, {"depth_ratio", {0.5, 0.9}}, {"thickness", {0.005, 0.008}}};
  shell.symmetric = true;
  shell.color = Vec3(0.85, 0.75, 0.30);
  return {canister, block, shell};
}

namespace {

double draw(const CategorySpec& spec, const std::string& key, std::mt19937_64& rng) {
  const auto it = spec.ranges.find(key);
  if (it == spec.ranges.end())
    fail(ErrorKind::Config, "category " + spec.name + " is missing range '" + key + "'");
  std::uniform_real_distribution<double> u(it->second.lo, it->second.hi);
  return it->second.lo == it->second.hi ? it->second.lo : u(rng);
}

TriMesh build_mesh(const CategorySpec& spec, std::mt19937_64& rng) {
  switch (spec.family) {
    case PrimitiveFamily::Box: {
      const Vec3 e(draw(spec, "width", rng), draw(spec, "height", rng), draw(spec, "depth", rng));
      return box_mesh(e);
    }
    case PrimitiveFamily::Cylinder: {
      const double r = draw(spec, "radius", rng);
      const double h = draw(spec, "height", rng);
      return cylinder_mesh(r, h);
    }
    case PrimitiveFamily::BowlShell: {
      const double r = draw(spec, "radius", rng);
      const double ratio = draw(spec, "depth_ratio", rng);
      const double th = draw(spec, "thickness", rng);
      return bowl_mesh(r, r * ratio, th);
    }
    case PrimitiveFamily::Composite: {
      const double w = draw(spec, "width", rng);
      const double h = draw(spec, "height", rng);
      const double d = draw(spec, "depth", rng);
      const double k = draw(spec, "knob_ratio", rng);
      TriMesh body = box_mesh(Vec3(w, h, d), Vec3(0.0, h / 2.0, 0.0));
      const Vec3 knob_ext(k * w, k * h, k * d);
      const Vec3 knob_center(0.45 * w - knob_ext.x() / 2.0, h + knob_ext.y() / 2.0,
                             0.45 * d - knob_ext.z() / 2.0);
      TriMesh knob = box_mesh(knob_ext, knob_center);
      // Drop the knob's bottom face; it is buried in the body's top face.
      knob.faces.erase(knob.faces.begin() + 4, knob.faces.begin() + 6);
      body.append(knob);
      return body;
    }
  }
  fail(ErrorKind::Config, "unknown primitive family");
}

PointSet32 to_float(const Eigen::MatrixX3d& m) { return m.cast<float>(); }

}  // namespace

ObjectModel make_object(const CategorySpec& spec, int category_id, std::uint64_t seed, int num_points) {
  spec.validate();
  std::mt19937_64 rng(seed);
  ObjectModel obj;
  obj.category_id = category_id;
  obj.mesh = build_mesh(spec, rng);
  const Vec3 lo = obj.mesh.bbox_min();
  const Vec3 hi = obj.mesh.bbox_max();
  obj.mesh.translate(-(lo + hi) / 2.0);
  obj.size = hi - lo;
  obj.max_extent = obj.size.maxCoeff();
  const Eigen::MatrixX3d pts = sample_surface(obj.mesh, num_points, rng);
  obj.model_points = to_float(pts);
  obj.nocs_points = to_float(pts / obj.max_extent);
  obj.color = spec.color;
  obj.symmetric = spec.symmetric;
  obj.symmetry_axis = spec.symmetry_axis.normalized();
  return obj;
}

ObservationBatch SceneSample::observation() const {
  ObservationBatch obs;
  obs.category_id = category_id;
  obs.image.resize(static_cast<Eigen::Index>(image.width) * image.height, 3);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) obs.image(y * image.width + x, c) = image.at(x, y, c) / 255.0;
  obs.points = points.cast<double>();
  return obs;
}

namespace {

struct Raster {
  int width = 0;
  int height = 0;
  std::vector<double> depth;
  std::vector<int> object;
  std::vector<Vec3> color;

  std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

constexpr double kNear = 0.05;

void rasterize(Raster& r, const std::vector<PlacedObject>& objects, const Camera& cam) {
  const Vec3 light = Vec3(0.3, 0.5, -1.0).normalized();
  for (std::size_t oi = 0; oi < objects.size(); ++oi) {
    const ObjectModel& model = *objects[oi].model;
    const Mat3& R = objects[oi].pose.rotation.matrix();
    const Vec3& t = objects[oi].pose.translation;
    std::vector<Vec3> cv(model.mesh.vertices.size());
    for (std::size_t v = 0; v < cv.size(); ++v) cv[v] = R * model.mesh.vertices[v] + t;

    for (std::size_t f = 0; f < model.mesh.faces.size(); ++f) {
      const auto& face = model.mesh.faces[f];
      const Vec3& p0 = cv[face[0]];
      const Vec3& p1 = cv[face[1]];
      const Vec3& p2 = cv[face[2]];
      if (p0.z() <= kNear || p1.z() <= kNear || p2.z() <= kNear) continue;
      const Vec3 n_obj = model.mesh.face_normal(f);
      const double lambert = 0.35 + 0.65 * std::abs((R * n_obj).dot(light));
      const Vec3 tint = (Vec3::Ones() + n_obj) / 2.0;
      const Vec3 color = lambert * (0.7 * model.color + 0.3 * tint);

      double su[3], sv[3], iz[3];
      const Vec3* ps[3] = {&p0, &p1, &p2};
      for (int k = 0; k < 3; ++k) {
        su[k] = cam.cx + cam.fx * ps[k]->x() / ps[k]->z();
        sv[k] = cam.cy - cam.fy * ps[k]->y() / ps[k]->z();
        iz[k] = 1.0 / ps[k]->z();
      }
      const double area = (su[1] - su[0]) * (sv[2] - sv[0]) - (su[2] - su[0]) * (sv[1] - sv[0]);
      if (std::abs(area) < 1e-12) continue;
      const int x0 = std::max(0, static_cast<int>(std::floor(std::min({su[0], su[1], su[2]}))));
      const int x1 = std::min(r.width - 1, static_cast<int>(std::ceil(std::max({su[0], su[1], su[2]}))));
      const int y0 = std::max(0, static_cast<int>(std::floor(std::min({sv[0], sv[1], sv[2]}))));
      const int y1 = std::min(r.height - 1, static_cast<int>(std::ceil(std::max({sv[0], sv[1], sv[2]}))));
      for (int y = y0; y <= y1; ++y) {
        const double py = y + 0.5;
        for (int x = x0; x <= x1; ++x) {
          const double px = x + 0.5;
          const double w0 = ((su[1] - px) * (sv[2] - py) - (su[2] - px) * (sv[1] - py)) / area;
          const double w1 = ((su[2] - px) * (sv[0] - py) - (su[0] - px) * (sv[2] - py)) / area;
          const double w2 = 1.0 - w0 - w1;
          if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
          // 1/z is affine in screen space for a planar triangle.
          const double z = 1.0 / (w0 * iz[0] + w1 * iz[1] + w2 * iz[2]);
          const std::size_t i = r.idx(x, y);
          if (z < r.depth[i]) {
            r.depth[i] = z;
            r.object[i] = static_cast<int>(oi);
            r.color[i] = color;
          }
        }
      }
    }
  }
}

Vec3 back_project(const Camera& cam, int x, int y, double z) {
  return Vec3((x + 0.5 - cam.cx) * z / cam.fx, (cam.cy - (y + 0.5)) * z / cam.fy, z);
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

std::vector<SceneSample> render_scene(const std::vector<PlacedObject>& objects, const Camera& camera,
                                      const RenderConfig& cfg, std::uint64_t seed) {
  Raster r;
  r.width = camera.width;
  r.height = camera.height;
  const std::size_t npix = static_cast<std::size_t>(r.width) * r.height;
  r.depth.assign(npix, std::numeric_limits<double>::infinity());
  r.object.assign(npix, -1);
  r.color.assign(npix, cfg.background);
  rasterize(r, objects, camera);

  std::vector<SceneSample> out;
  for (std::size_t oi = 0; oi < objects.size(); ++oi) {
    const ObjectModel& model = *objects[oi].model;
    const Pose9D& pose = objects[oi].pose;
    std::vector<std::size_t> pix;
    int u0 = r.width, u1 = -1, v0 = r.height, v1 = -1;
    for (int y = 0; y < r.height; ++y) {
      for (int x = 0; x < r.width; ++x) {
        if (r.object[r.idx(x, y)] != static_cast<int>(oi)) continue;
        pix.push_back(r.idx(x, y));
        u0 = std::min(u0, x);
        u1 = std::max(u1, x);
        v0 = std::min(v0, y);
        v1 = std::max(v1, y);
      }
    }
    if (pix.empty()) {
      spdlog::warn("render_scene: object {} is not visible, skipped", oi);
      continue;
    }
    std::mt19937_64 rng(derive_seed(seed, oi));

    SceneSample s;
    s.category_id = model.category_id;
    s.gt_pose = pose;
    s.model_points = model.model_points;

    // Square crop around the mask, 2x2 supersampled.
    const int cs = cfg.crop_size;
    const double side = 1.15 * std::max(u1 - u0 + 1, v1 - v0 + 1);
    const double uc = (u0 + u1 + 1) / 2.0;
    const double vc = (v0 + v1 + 1) / 2.0;
    s.image.width = cs;
    s.image.height = cs;
    s.image.channels = 3;
    s.image.data.assign(static_cast<std::size_t>(cs) * cs * 3, 0);
    s.mask.assign(static_cast<std::size_t>(cs) * cs, 0);
    auto sample_at = [&](double su, double sv, int* obj) {
      const int x = static_cast<int>(std::floor(su));
      const int y = static_cast<int>(std::floor(sv));
      if (x < 0 || y < 0 || x >= r.width || y >= r.height) {
        if (obj) *obj = -1;
        return cfg.background;
      }
      if (obj) *obj = r.object[r.idx(x, y)];
      return r.color[r.idx(x, y)];
    };
    for (int j = 0; j < cs; ++j) {
      for (int i = 0; i < cs; ++i) {
        const double bu = uc - side / 2.0 + (i + 0.5) * side / cs;
        const double bv = vc - side / 2.0 + (j + 0.5) * side / cs;
        const double q = side / cs / 4.0;
        Vec3 acc = Vec3::Zero();
        for (int k = 0; k < 4; ++k)
          acc += sample_at(bu + ((k & 1) ? q : -q), bv + ((k & 2) ? q : -q), nullptr);
        int hit = -1;
        sample_at(bu, bv, &hit);
        for (int c = 0; c < 3; ++c) s.image.at(i, j, c) = to_byte(acc(c) / 4.0);
        s.mask[static_cast<std::size_t>(j) * cs + i] = hit == static_cast<int>(oi) ? 1 : 0;
      }
    }

    // Visible surface points.
    std::shuffle(pix.begin(), pix.end(), rng);
    if (static_cast<int>(pix.size()) > cfg.max_candidates) pix.resize(static_cast<std::size_t>(cfg.max_candidates));
    Eigen::MatrixX3d cand(static_cast<Eigen::Index>(pix.size()), 3);
    for (std::size_t k = 0; k < pix.size(); ++k) {
      const int x = static_cast<int>(pix[k] % static_cast<std::size_t>(r.width));
      const int y = static_cast<int>(pix[k] / static_cast<std::size_t>(r.width));
      cand.row(static_cast<Eigen::Index>(k)) = back_project(camera, x, y, r.depth[pix[k]]).transpose();
    }
    std::vector<int> chosen;
    const int n = cfg.num_points;
    if (cand.rows() >= n) {
      chosen = farthest_point_sample(cand, n, 0);
    } else {
      spdlog::warn("render_scene: object {} has only {} visible pixels, duplicating points", oi,
                   cand.rows());
      chosen.resize(static_cast<std::size_t>(cand.rows()));
      std::iota(chosen.begin(), chosen.end(), 0);
      std::uniform_int_distribution<int> pick(0, static_cast<int>(cand.rows()) - 1);
      while (static_cast<int>(chosen.size()) < n) chosen.push_back(pick(rng));
    }
    std::normal_distribution<double> noise(0.0, cfg.depth_noise);
    const Mat3 Rt = pose.rotation.matrix().transpose();
    s.points.resize(n, 3);
    s.nocs_points.resize(n, 3);
    for (int k = 0; k < n; ++k) {
      const Vec3 p = cand.row(chosen[static_cast<std::size_t>(k)]).transpose();
      const double dz = cfg.depth_noise > 0.0 ? noise(rng) : 0.0;
      const Vec3 noisy = p * ((p.z() + dz) / p.z());
      s.points.row(k) = noisy.cast<float>().transpose();
      s.nocs_points.row(k) = (Rt * (p - pose.translation) / model.max_extent).cast<float>().transpose();
    }
    out.push_back(std::move(s));
  }
  return out;
}

Pose9D sample_object_pose(const ObjectModel& model, const ViewConfig& view, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto in = [&](const Range& r) { return r.lo + (r.hi - r.lo) * u01(rng); };
  const double yaw = 2.0 * std::numbers::pi * u01(rng);
  const double dist = in(view.distance);
  const double elev = in(view.elevation_deg) * std::numbers::pi / 180.0;
  const Vec3 jitter(view.lateral_jitter * (2.0 * u01(rng) - 1.0),
                    view.lateral_jitter * (2.0 * u01(rng) - 1.0),
                    view.lateral_jitter * (2.0 * u01(rng) - 1.0));

  // World: table plane y = 0, object box center above it.
  const Vec3 center(0.0, model.size.y() / 2.0, 0.0);
  const Vec3 eye = center + dist * Vec3(0.0, std::sin(elev), -std::cos(elev));
  const Vec3 forward = (center + jitter - eye).normalized();
  const Vec3 right = Vec3::UnitY().cross(forward).normalized();
  const Vec3 up = forward.cross(right);
  Mat3 world_to_cam;
  world_to_cam.row(0) = right.transpose();
  world_to_cam.row(1) = up.transpose();
  world_to_cam.row(2) = forward.transpose();

  Pose9D pose;
  pose.rotation = so3_project(world_to_cam * Rotation3::about_axis(Vec3::UnitY(), yaw).matrix());
  pose.translation = world_to_cam * (center - eye);
  pose.size = model.size;
  return pose;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(master);
  h = mix(h ^ a);
  h = mix(h ^ b);
  h = mix(h ^ c);
  return h;
}

std::uint64_t scene_seed(std::uint64_t master, const std::string& scene_id) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : scene_id) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return derive_seed(master, h);
}

SceneSample generate_scene(const GenerationConfig& cfg, int category_id, std::uint64_t seed,
                           const std::string& scene_id) {
  if (category_id < 0 || category_id >= static_cast<int>(cfg.categories.size()))
    fail(ErrorKind::Config, "category id " + std::to_string(category_id) + " out of range");
  const CategorySpec& spec = cfg.categories[static_cast<std::size_t>(category_id)];
  const ObjectModel obj = make_object(spec, category_id, derive_seed(seed, 1), cfg.render.num_points);
  std::mt19937_64 rng(derive_seed(seed, 2));
  for (int attempt = 0; attempt < 16; ++attempt) {
    PlacedObject placed{&obj, sample_object_pose(obj, cfg.view, rng)};
    auto samples = render_scene({placed}, cfg.camera, cfg.render, derive_seed(seed, 3, attempt));
    if (samples.empty()) continue;
    SceneSample s = std::move(samples.front());
    s.scene_id = scene_id;
    s.category = spec.name;
    return s;
  }
  fail(ErrorKind::InvalidInput, "could not place a visible object for scene " + scene_id);
}

}  // namespace posediff
