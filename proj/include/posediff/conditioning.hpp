#pragma once

#include "posediff/nn.hpp"
#include "posediff/pose.hpp"

#include <cstdint>
#include <vector>

namespace posediff {

using nn::Mat;
using nn::RowVec;

struct ConditioningConfig {
  int T = 1000;
  int time_width = 256;
  int rgb_width = 512;
  int point_width = 512;
  int shape_width = 256;  // two pooled halves
  int image_size = 64;
  int num_points = 1024;

  int sinusoid_dims = 128;
  int local_width = 64;
  int point_hidden = 128;
  int decoder_hidden = 128;
  int decoder_hidden2 = 64;
  int shape_encoder_hidden = 64;

  int condition_width() const { return time_width + rgb_width + point_width + shape_width; }
  void validate() const;
};

// One object crop: image is (H*W) x 3 in [0,1] (row = y*W + x), points are n x 3
// meters in the camera frame.
struct ObservationBatch {
  Mat image;
  Mat points;
  int category_id = 0;
};

// Slot toggles used by ablations; a disabled slot is zeroed, width preserved.
struct ConditionMask {
  bool timestep = true;
  bool rgb = true;
  bool point = true;
  bool shape = true;
};

struct ConditionVector {
  RowVec c_timestep;
  RowVec c_rgb;
  RowVec c_point;
  RowVec c_shape;
  RowVec c;  // concatenation in the order above
};

struct ShapeOutputs {
  Mat R_s;  // n x 3 canonical-frame shape, meters
  Mat N_s;  // n x 3 NOCS coordinates
};

NormalizationContext make_context(const Mat& points, double scale);
Mat normalize_points(const Mat& points, const NormalizationContext& ctx);

class TimestepEmbedder {
 public:
  struct Cache {
    Mat sinus;
    Mat pre;
  };

  TimestepEmbedder() = default;
  TimestepEmbedder(const ConditioningConfig& cfg, std::mt19937_64& rng);

  Mat sinusoid(const std::vector<int>& ts) const;
  // One embedding row per time step.
  Mat forward(const std::vector<int>& ts, Cache* cache = nullptr) const;
  void backward(const Cache& cache, const Mat& dy);
  void collect(nn::ParamList& out);

 private:
  int T_ = 1000;
  int dims_ = 128;
  nn::Linear fc1_;
  nn::Linear fc2_;
};

class ImageEncoder {
 public:
  struct Cache {
    std::vector<nn::Conv3x3s2::Cache> conv;
    std::vector<Mat> pre;  // pre-activation conv outputs
    Mat pooled;
  };

  ImageEncoder() = default;
  ImageEncoder(const ConditioningConfig& cfg, std::mt19937_64& rng);

  RowVec forward(const Mat& image, Cache* cache = nullptr) const;
  void backward(const Cache& cache, const RowVec& dy);
  void collect(nn::ParamList& out);

 private:
  int size_ = 64;
  std::vector<nn::Conv3x3s2> convs_;
  nn::Linear head_;
};

class PointEncoder {
 public:
  struct Cache {
    Mat x;
    Mat pre1;
    Mat local;
    Mat pre2;
    Mat h2;
    std::vector<Eigen::Index> argmax;
  };
  struct Output {
    RowVec global;
    Mat local;
  };

  PointEncoder() = default;
  PointEncoder(const ConditioningConfig& cfg, std::mt19937_64& rng);

  // Points are expected already normalized.
  Output forward(const Mat& points, Cache* cache = nullptr) const;
  void backward(const Cache& cache, const RowVec& d_global, const Mat& d_local);
  void collect(nn::ParamList& out);

 private:
  nn::Linear fc1_;
  nn::Linear fc2_;
  nn::Linear fc3_;
};

// Two parallel estimator-encoder branches: canonical shape and NOCS shape.
class ShapeEstimator {
 public:
  struct BranchCache {
    Mat pre1, h1, pre2, h2, out;
    Mat epre1, eh1, epre2, eh2;
    std::vector<Eigen::Index> argmax;
  };
  struct Cache {
    Mat local;
    RowVec c_rgb;
    BranchCache shape;
    BranchCache nocs;
  };
  struct Output {
    ShapeOutputs shapes;
    RowVec c_shape;
  };

  ShapeEstimator() = default;
  ShapeEstimator(const ConditioningConfig& cfg, std::mt19937_64& rng);

  // R_s is emitted in meters: the raw branch output times `metric_scale`.
  Output forward(const Mat& local, const RowVec& c_rgb, double metric_scale,
                 Cache* cache = nullptr) const;
  struct InputGrads {
    Mat d_local;
    RowVec d_rgb;
  };
  InputGrads backward(const Cache& cache, const Mat& dR_s, const Mat& dN_s,
                      const RowVec& d_shape, double metric_scale);
  void collect(nn::ParamList& out);

 private:
  struct Branch {
    nn::Param w1;  // (local + rgb) x hidden, applied to the point-wise concatenation
    nn::Param b1;
    nn::Linear fc2;
    nn::Linear fc3;
    nn::Linear enc1;
    nn::Linear enc2;
  };
  Branch make_branch(const std::string& name, std::mt19937_64& rng) const;
  Mat branch_forward(const Branch& b, const Mat& local, const RowVec& c_rgb,
                     BranchCache& cache) const;
  RowVec branch_encode(const Branch& b, const Mat& points, BranchCache& cache) const;
  void branch_backward(Branch& b, const BranchCache& cache, const Mat& local,
                       const RowVec& c_rgb, const Mat& d_out, const RowVec& d_code,
                       InputGrads& grads);

  ConditioningConfig cfg_;
  Branch shape_;
  Branch nocs_;
};

// All scene-dependent condition parts (everything but the time step).
struct SceneFeatures {
  RowVec c_rgb;
  RowVec c_point;
  RowVec c_shape;
  ShapeOutputs shapes;
};

class ConditionNet {
 public:
  struct Cache {
    ImageEncoder::Cache image;
    PointEncoder::Cache points;
    ShapeEstimator::Cache shape;
  };

  ConditionNet() = default;
  ConditionNet(const ConditioningConfig& cfg, std::mt19937_64& rng);

  const ConditioningConfig& config() const { return cfg_; }

  RowVec embed_timestep(int t) const;
  RowVec encode_image(const Mat& image) const;
  PointEncoder::Output encode_points(const Mat& normalized_points) const;
  ShapeEstimator::Output estimate_shapes(const Mat& local, const RowVec& c_rgb,
                                         double metric_scale) const;

  SceneFeatures encode_scene(const ObservationBatch& obs, const NormalizationContext& ctx,
                             Cache* cache = nullptr) const;
  void backward_scene(const Cache& cache, const RowVec& d_rgb, const RowVec& d_point,
                      const RowVec& d_shape, const Mat& dR_s, const Mat& dN_s, double metric_scale);

  ConditionVector assemble(const RowVec& c_timestep, const SceneFeatures& scene,
                           const ConditionMask& mask = {}) const;
  ConditionVector build_condition(int t, const ObservationBatch& obs, const NormalizationContext& ctx,
                                  const ConditionMask& mask = {}) const;

  TimestepEmbedder& timestep() { return time_; }
  const TimestepEmbedder& timestep() const { return time_; }
  void collect(nn::ParamList& out);

 private:
  ConditioningConfig cfg_;
  TimestepEmbedder time_;
  ImageEncoder image_;
  PointEncoder points_;
  ShapeEstimator shape_;
};

// (1/2n) * (sum_a min_b |a-b|^2 + sum_b min_a |a-b|^2)
double chamfer_loss(const Mat& a, const Mat& b, Mat* grad_a = nullptr);
// Mean over rows of the per-coordinate sum of 5x^2 (x <= 0.1) or x - 0.05.
double smooth_l1_nocs_loss(const Mat& pred, const Mat& target, Mat* grad_pred = nullptr);
double smooth_l1_branch(double x);

}  // namespace posediff
