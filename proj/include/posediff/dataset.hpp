#pragma once

#include "posediff/datagen.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace posediff {

inline constexpr int kDatasetFormatVersion = 1;

// <split_dir>/<scene_id>/{image.png, mask.png, points.f32, model.f32, nocs.f32, label.json}
void write_sample(const std::filesystem::path& scene_dir, const SceneSample& sample);
SceneSample read_sample(const std::filesystem::path& scene_dir);

void write_dataset(const std::vector<SceneSample>& samples, const std::filesystem::path& split_dir);
// Scenes in lexicographic order of their directory names. A missing or empty
// directory yields no samples.
std::vector<SceneSample> read_dataset(const std::filesystem::path& split_dir);

// Writes <dir>/train and <dir>/test; returns the number of scenes written.
int generate_dataset(const GenerationConfig& cfg, const std::filesystem::path& dir);

void write_points_f32(const std::filesystem::path& path, const PointSet32& points);
PointSet32 read_points_f32(const std::filesystem::path& path);

}  // namespace posediff
