#pragma once

#include "posediff/conditioning.hpp"
#include "posediff/denoiser.hpp"
#include "posediff/schedule.hpp"

#include "json.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace posediff {

struct ModelConfig {
  ConditioningConfig conditioning;
  DenoiserConfig denoiser;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  double norm_scale = 0.3;
  std::uint64_t init_seed = 0;

  int T() const { return conditioning.T; }
  void validate() const;

  // Widths 256/512/512/256 + 256 = 1792, 7 blocks, 3 skips.
  static ModelConfig full_scale();
  // Quarter widths (448 total), 3 blocks, 1 skip.
  static ModelConfig desk_scale();

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  // Digest of every field that changes parameter shapes or the schedule.
  std::string structure_hash() const;
};

struct InferenceOptions {
  int steps = 3;
  double eta = 1.0;
  std::uint64_t seed = 0;
  ConditionMask mask;
  DenoiseOptions denoise;
};

struct Prediction {
  Pose9D pose;
  PoseVec15 x0;
  int denoiser_calls = 0;
};

class PoseDiffusionModel {
 public:
  explicit PoseDiffusionModel(const ModelConfig& cfg);
  // params() holds pointers into the members.
  PoseDiffusionModel(const PoseDiffusionModel&) = delete;
  PoseDiffusionModel& operator=(const PoseDiffusionModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ConditionNet& conditioning() { return cond_; }
  const ConditionNet& conditioning() const { return cond_; }
  Denoiser& denoiser() { return denoiser_; }
  const Denoiser& denoiser() const { return denoiser_; }
  const NoiseSchedule& schedule() const { return sched_; }

  // Parameters in a fixed order shared by the optimizer and checkpoints.
  const nn::ParamList& params() { return params_; }

  NormalizationContext context_for(const ObservationBatch& obs) const;
  Prediction predict(const ObservationBatch& obs, const InferenceOptions& opt) const;
  // Reverse diffusion with precomputed scene features; used by benchmarks.
  Prediction sample(const SceneFeatures& scene, const NormalizationContext& ctx,
                    const InferenceOptions& opt) const;

 private:
  ModelConfig cfg_;
  NoiseSchedule sched_;
  ConditionNet cond_;
  Denoiser denoiser_;
  nn::ParamList params_;
};

struct CheckpointState {
  long long step = 0;
  nlohmann::json meta = nlohmann::json::object();
  // Optimizer moments; empty when the checkpoint carries none.
  std::vector<nn::Mat> first_moments;
  std::vector<nn::Mat> second_moments;
  long long optimizer_steps = 0;
};

void save_checkpoint(const std::filesystem::path& path, PoseDiffusionModel& model,
                     const CheckpointState& state);

struct LoadedCheckpoint {
  std::unique_ptr<PoseDiffusionModel> model;
  CheckpointState state;
};

// Builds the model from the config stored in the file.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);
// Loads into an existing model; refuses when the structure hash differs.
CheckpointState load_checkpoint_into(const std::filesystem::path& path, PoseDiffusionModel& model);

}  // namespace posediff
