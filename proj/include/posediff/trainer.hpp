#pragma once

#include "posediff/datagen.hpp"
#include "posediff/model.hpp"

#include "json.hpp"

#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace posediff {

struct TrainConfig {
  int T = 1000;
  int batch = 48;
  double lr_lo = 1e-6;
  double lr_hi = 1e-4;
  long long cycle_half_steps = 20000;
  long long max_steps = 1000;
  std::uint64_t seed = 0;
  // (t, eps) pairs drawn per scene and step; the scene encoders run once per scene.
  int noise_draws = 1;
  bool drop_rgb = false;
  bool drop_shape = false;
  bool drop_timestep = false;  // tests only
  long long checkpoint_every = 0;  // 0: only at the end
  double time_budget_s = 0.0;      // 0: unlimited

  static TrainConfig desk();
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// Triangular wave starting at lr_lo, peaking at lr_hi after cycle_half_steps.
double lr_at(long long step, const TrainConfig& cfg);

struct StepLosses {
  double total = 0.0;
  double cd = 0.0;
  double sl1 = 0.0;
  double diff = 0.0;
};

// A scene converted to model inputs once, up front.
struct TrainingExample {
  std::string id;
  ObservationBatch obs;
  NormalizationContext ctx;
  PoseVec15 x0;
  Mat model_points;  // meters
  Mat nocs_points;   // row-aligned with obs.points
};

TrainingExample make_example(const SceneSample& s, double norm_scale);

// Mean over rows of the squared error summed over the 15 coordinates.
double diffusion_loss(const Mat& eps, const Mat& eps_hat, Mat* grad_eps_hat = nullptr);

class Trainer {
 public:
  Trainer(PoseDiffusionModel& model, const TrainConfig& cfg);

  // One optimizer update; time steps and noise come from `rng`.
  StepLosses train_step(const std::vector<const TrainingExample*>& batch, std::mt19937_64& rng);
  // Same losses and gradients, but no parameter update.
  StepLosses compute_gradients(const std::vector<const TrainingExample*>& batch, std::mt19937_64& rng);

  long long step() const { return step_; }
  const TrainConfig& config() const { return cfg_; }
  nn::Adam& optimizer() { return adam_; }

  CheckpointState checkpoint_state(const nlohmann::json& meta = nlohmann::json::object());
  void restore(const CheckpointState& state);

  struct FitOptions {
    std::filesystem::path log_path;         // train_log.jsonl, appended; empty disables
    std::filesystem::path checkpoint_path;  // empty disables
    nlohmann::json meta = nlohmann::json::object();
  };
  struct FitSummary {
    long long steps_run = 0;
    double wall_s = 0.0;
    StepLosses last;
  };
  FitSummary fit(const std::vector<TrainingExample>& data, const FitOptions& opts);

 private:
  ConditionMask mask() const;

  PoseDiffusionModel& model_;
  TrainConfig cfg_;
  nn::Adam adam_;
  long long step_ = 0;
  double wall_before_ = 0.0;  // seconds spent in earlier runs of this checkpoint
};

}  // namespace posediff
