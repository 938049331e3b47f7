#pragma once

#include "posediff/datagen.hpp"
#include "posediff/model.hpp"
#include "posediff/trainer.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace posediff {

// Everything a CLI command may need, read from one flat JSON object. Key names
// are the field names of the model, training and generation configs plus the
// run keys below; `seed` drives generation, training and sampling alike.
struct RunConfig {
  ModelConfig model = ModelConfig::desk_scale();
  TrainConfig train = TrainConfig::desk();
  GenerationConfig gen;

  std::string dataset = "dataset";
  std::string out_dir = "run";
  std::string checkpoint;  // default: <out_dir>/checkpoint.bin
  int steps = 3;
  double eta = 1.0;
  std::uint64_t seed = 0;
  bool zero_timestep = false;
  bool zero_rgb = false;
  bool zero_point = false;
  bool zero_shape = false;

  std::filesystem::path checkpoint_path() const;
  ConditionMask inference_mask() const;
  InferenceOptions inference(std::uint64_t sample_seed) const;

  void validate() const;
  nlohmann::json to_json() const;
  // Unknown keys are a config error.
  static RunConfig from_json(const nlohmann::json& j);
};

RunConfig load_run_config(const std::filesystem::path& path);

// Key names accepted by from_json, in to_json order.
std::vector<std::string> run_config_keys();

// Sets `key` in a flat config object, parsing `value` with the type of the
// key's default.
void apply_override(nlohmann::json& flat, const std::string& key, const std::string& value);

// Defaults, then the file (if any), then overrides in order.
RunConfig resolve_config(const std::filesystem::path& file,
                         const std::vector<std::pair<std::string, std::string>>& overrides);

}  // namespace posediff
