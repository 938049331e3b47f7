#include "posediff/dataset.hpp"

#include "posediff/errors.hpp"

#include "json.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace posediff {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "f32 files are written in native order");

void write_points_f32(const fs::path& path, const PointSet32& points) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Ingestion, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(points.data()),
            static_cast<std::streamsize>(points.size() * sizeof(float)));
  if (!out) fail(ErrorKind::Ingestion, "write failed: " + path.string());
}

PointSet32 read_points_f32(const fs::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) fail(ErrorKind::Ingestion, "missing file " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes == 0 || bytes % (3 * sizeof(float)) != 0)
    fail(ErrorKind::Ingestion, "malformed point file " + path.string() + " (" + std::to_string(bytes) + " bytes)");
  PointSet32 pts(static_cast<Eigen::Index>(bytes / (3 * sizeof(float))), 3);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(pts.data()), static_cast<std::streamsize>(bytes));
  if (!in) fail(ErrorKind::Ingestion, "read failed: " + path.string());
  return pts;
}

void write_sample(const fs::path& dir, const SceneSample& s) {
  fs::create_directories(dir);
  write_png(dir / "image.png", s.image);
  Image8 mask{s.image.width, s.image.height, 1, {}};
  mask.data.resize(s.mask.size());
  std::transform(s.mask.begin(), s.mask.end(), mask.data.begin(),
                 [](std::uint8_t m) { return static_cast<std::uint8_t>(m ? 255 : 0); });
  write_png(dir / "mask.png", mask);
  write_points_f32(dir / "points.f32", s.points);
  write_points_f32(dir / "model.f32", s.model_points);
  write_points_f32(dir / "nocs.f32", s.nocs_points);

  const Mat3& R = s.gt_pose.rotation.matrix();
  json label = {
      {"t", {s.gt_pose.translation.x(), s.gt_pose.translation.y(), s.gt_pose.translation.z()}},
      {"R", json::array()},
      {"s", {s.gt_pose.size.x(), s.gt_pose.size.y(), s.gt_pose.size.z()}},
      {"category", s.category},
      {"category_id", s.category_id},
      {"format_version", kDatasetFormatVersion},
  };
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) label["R"].push_back(R(r, c));
  std::ofstream out(dir / "label.json");
  if (!out) fail(ErrorKind::Ingestion, "cannot write " + (dir / "label.json").string());
  out << label.dump(2) << "\n";
}

namespace {

Vec3 vec3_from(const json& j, const char* key, const fs::path& file) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 3)
    fail(ErrorKind::Ingestion, file.string() + ": '" + key + "' must be an array of 3 numbers");
  return Vec3(j[key][0].get<double>(), j[key][1].get<double>(), j[key][2].get<double>());
}

}  // namespace

SceneSample read_sample(const fs::path& dir) {
  const fs::path label_path = dir / "label.json";
  std::ifstream in(label_path);
  if (!in) fail(ErrorKind::Ingestion, "missing file " + label_path.string());
  SceneSample s;
  s.scene_id = dir.filename().string();
  try {
    const json label = json::parse(in);
    const int version = label.at("format_version").get<int>();
    if (version != kDatasetFormatVersion)
      fail(ErrorKind::Ingestion, label_path.string() + ": format_version " + std::to_string(version) +
                                     ", expected " + std::to_string(kDatasetFormatVersion));
    s.gt_pose.translation = vec3_from(label, "t", label_path);
    s.gt_pose.size = vec3_from(label, "s", label_path);
    const auto& r = label.at("R");
    if (!r.is_array() || r.size() != 9) fail(ErrorKind::Ingestion, label_path.string() + ": 'R' must have 9 entries");
    Mat3 R;
    for (int i = 0; i < 9; ++i) R(i / 3, i % 3) = r[static_cast<std::size_t>(i)].get<double>();
    s.gt_pose.rotation = Rotation3(R);
    s.category = label.at("category").get<std::string>();
    s.category_id = label.value("category_id", 0);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Ingestion) throw;
    fail(ErrorKind::Ingestion, label_path.string() + ": " + e.what());
  } catch (const json::exception& e) {
    fail(ErrorKind::Ingestion, label_path.string() + ": " + e.what());
  }

  s.image = read_png(dir / "image.png", 3);
  const Image8 mask = read_png(dir / "mask.png", 1);
  if (mask.width != s.image.width || mask.height != s.image.height)
    fail(ErrorKind::Ingestion, (dir / "mask.png").string() + ": size differs from image.png");
  s.mask.resize(mask.data.size());
  std::transform(mask.data.begin(), mask.data.end(), s.mask.begin(),
                 [](std::uint8_t m) { return static_cast<std::uint8_t>(m >= 128 ? 1 : 0); });
  s.points = read_points_f32(dir / "points.f32");
  s.model_points = read_points_f32(dir / "model.f32");
  s.nocs_points = read_points_f32(dir / "nocs.f32");
  if (s.nocs_points.rows() != s.points.rows())
    fail(ErrorKind::Ingestion, (dir / "nocs.f32").string() + ": row count differs from points.f32");
  return s;
}

void write_dataset(const std::vector<SceneSample>& samples, const fs::path& split_dir) {
  fs::create_directories(split_dir);
  for (const auto& s : samples) {
    if (s.scene_id.empty()) fail(ErrorKind::InvalidInput, "sample without a scene id");
    write_sample(split_dir / s.scene_id, s);
  }
}

std::vector<SceneSample> read_dataset(const fs::path& split_dir) {
  std::vector<SceneSample> out;
  if (!fs::exists(split_dir)) return out;
  if (!fs::is_directory(split_dir)) fail(ErrorKind::Ingestion, split_dir.string() + " is not a directory");
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(split_dir))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  out.reserve(dirs.size());
  for (const auto& d : dirs) out.push_back(read_sample(d));
  return out;
}

int generate_dataset(const GenerationConfig& cfg, const fs::path& dir) {
  int written = 0;
  const struct {
    const char* name;
    int per_category;
    std::uint64_t tag;
  } splits[] = {{"train", cfg.train_per_category, 1}, {"test", cfg.test_per_category, 2}};
  for (const auto& split : splits) {
    for (std::size_t c = 0; c < cfg.categories.size(); ++c) {
      for (int i = 0; i < split.per_category; ++i) {
        std::ostringstream id;
        id << cfg.categories[c].name << "_" << std::setw(5) << std::setfill('0') << i;
        const std::uint64_t seed = derive_seed(cfg.seed, split.tag, c, static_cast<std::uint64_t>(i));
        const SceneSample s = generate_scene(cfg, static_cast<int>(c), seed, id.str());
        write_sample(dir / split.name / id.str(), s);
        ++written;
      }
    }
    spdlog::info("generated {} split under {}", split.name, (dir / split.name).string());
  }
  return written;
}

}  // namespace posediff
