#pragma once

#include "posediff/nn.hpp"
#include "posediff/pose.hpp"

#include <atomic>
#include <cstdint>
#include <vector>

namespace posediff {

using nn::Mat;
using nn::RowVec;

struct DenoiserConfig {
  int width = 1792;
  int num_blocks = 7;
  int num_skips = 3;
  int heads = 16;
  int head_dim = 112;
  int token_count = 16;
  int pose_width = 256;
  int mlp_ratio = 2;
  double head_gain = 0.1;  // output-head init scale relative to the default bound

  int condition_width() const { return width - pose_width; }
  void validate() const;
};

// Pre-norm transformer block over a flat width-vector: the Q/K/V projections
// are reshaped to token_count x head_dim and attention mixes the tokens.
class TransformerBlock {
 public:
  struct Cache {
    Mat x;
    nn::LayerNorm::Cache ln1;
    Mat h1;
    Mat q, k, v;
    Mat attn;  // rows x token_count^2, one softmax matrix per row
    Mat o;
    Mat y1;
    nn::LayerNorm::Cache ln2;
    Mat h2;
    Mat m1;
  };

  TransformerBlock() = default;
  TransformerBlock(const std::string& name, const DenoiserConfig& cfg, std::mt19937_64& rng);

  Mat forward(const Mat& x, Cache* cache = nullptr) const;
  Mat backward(const Cache& cache, const Mat& dy);
  void collect(nn::ParamList& out);

  // Attention weights (token_count x token_count) for one input row.
  Mat attention_matrix(const Mat& x_row) const;

 private:
  int tokens_ = 16;
  int head_dim_ = 112;
  nn::LayerNorm ln1_;
  nn::Linear q_, k_, v_, proj_;
  nn::LayerNorm ln2_;
  nn::Linear fc1_, fc2_;
};

struct DenoiseOptions {
  // Skip connections disabled here have their saved activation replaced by zeros.
  std::vector<bool> disabled_skips;
};

// Copyable call counter so the owning layer stays a regular value type.
struct CallCounter {
  CallCounter() = default;
  CallCounter(const CallCounter& o) : n(o.n.load()) {}
  CallCounter& operator=(const CallCounter& o) {
    n = o.n.load();
    return *this;
  }
  mutable std::atomic<std::uint64_t> n{0};
};

class Denoiser {
 public:
  struct Cache {
    Mat x_t;
    Mat pose_pre;
    Mat input;
    std::vector<TransformerBlock::Cache> blocks;
    std::vector<Mat> reduce_in;  // concatenated inputs of the skip-reduction maps
    Mat final;
  };

  Denoiser() = default;
  Denoiser(const DenoiserConfig& cfg, std::mt19937_64& rng);

  const DenoiserConfig& config() const { return cfg_; }

  // x_t: rows x 15, condition: rows x condition_width. Returns rows x 15.
  Mat forward(const Mat& x_t, const Mat& condition, Cache* cache = nullptr,
              const DenoiseOptions& options = {}) const;
  // Returns d(loss)/d(condition).
  Mat backward(const Cache& cache, const Mat& d_eps);

  Mat embed_pose(const Mat& x_t, Mat* pre = nullptr) const;
  PoseVec15 denoise(const PoseVec15& x_t, const RowVec& condition,
                    const DenoiseOptions& options = {}) const;

  // Block index (0-based) whose output feeds the skip consumed before block `consumer`,
  // or -1 when `consumer` takes no skip.
  int skip_source(int consumer) const;

  std::uint64_t block_applications() const { return block_calls_.n.load(); }
  void reset_counters() const { block_calls_.n = 0; }

  void collect(nn::ParamList& out);

 private:
  DenoiserConfig cfg_;
  nn::Linear pose1_, pose2_;
  std::vector<TransformerBlock> blocks_;
  std::vector<nn::Linear> reduce_;  // one per skip, indexed by skip number
  nn::Linear head_;
  CallCounter block_calls_;
};

}  // namespace posediff
