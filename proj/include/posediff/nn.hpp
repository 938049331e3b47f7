#pragma once

// Minimal dense layers with explicit backward passes. Activations are row-major
// matrices with one item (point, pixel, sample) per row.

#include <Eigen/Dense>

#include <random>
#include <string>
#include <vector>

namespace posediff::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct Param {
  std::string name;
  Mat value;
  Mat grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

using ParamList = std::vector<Param*>;

// Uniform(-bound, bound) with bound = 1/sqrt(fan_in), the PyTorch default for
// both weights and biases of linear and conv layers.
void init_uniform(Param& p, int fan_in, std::mt19937_64& rng, double gain = 1.0);

class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int in, int out, std::mt19937_64& rng, double gain = 1.0);

  Mat forward(const Mat& x) const;
  // Accumulates parameter gradients and returns d(loss)/dx.
  Mat backward(const Mat& x, const Mat& dy);
  // Same, but skips the input gradient.
  void backward_params(const Mat& x, const Mat& dy);

  int in() const { return static_cast<int>(w_.value.rows()); }
  int out() const { return static_cast<int>(w_.value.cols()); }
  Param& weight() { return w_; }
  Param& bias() { return b_; }
  void collect(ParamList& out);

 private:
  Param w_;  // in x out
  Param b_;  // 1 x out
};

class LayerNorm {
 public:
  struct Cache {
    Mat xhat;
    Eigen::VectorXd inv_std;
  };

  LayerNorm() = default;
  LayerNorm(std::string name, int dim);

  Mat forward(const Mat& x, Cache* cache = nullptr) const;
  Mat backward(const Cache& cache, const Mat& dy);
  void collect(ParamList& out);

 private:
  Param gamma_;
  Param beta_;
  double eps_ = 1e-5;
};

Mat relu(const Mat& x);
Mat relu_backward(const Mat& x, const Mat& dy);
// tanh approximation
Mat gelu(const Mat& x);
Mat gelu_backward(const Mat& x, const Mat& dy);
Mat silu(const Mat& x);
Mat silu_backward(const Mat& x, const Mat& dy);

// Row-wise softmax.
Mat softmax_rows(const Mat& s);

// 3x3 convolution, stride 2, zero padding 1, on an H x W image stored as (H*W) x C.
class Conv3x3s2 {
 public:
  struct Cache {
    Mat cols;
  };

  Conv3x3s2() = default;
  Conv3x3s2(std::string name, int in_ch, int out_ch, std::mt19937_64& rng);

  static int out_extent(int extent) { return (extent + 1) / 2; }
  Mat forward(const Mat& x, int height, int width, Cache* cache = nullptr) const;
  Mat backward(const Cache& cache, const Mat& dy, int height, int width);
  void collect(ParamList& out);
  int in_channels() const { return in_ch_; }
  int out_channels() const { return static_cast<int>(w_.value.cols()); }

 private:
  Mat im2col(const Mat& x, int height, int width) const;

  int in_ch_ = 0;
  Param w_;  // 9*in x out, row index = (ky*3 + kx)*in + c
  Param b_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(const ParamList& params, AdamConfig cfg = {});

  void step(double lr);
  long long steps() const { return t_; }

  // Optimizer moments, in parameter order; used by checkpointing.
  std::vector<Mat>& first_moments() { return m_; }
  std::vector<Mat>& second_moments() { return v_; }
  void set_steps(long long t) { t_ = t; }

 private:
  ParamList params_;
  AdamConfig cfg_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
  long long t_ = 0;
};

void zero_grads(const ParamList& params);
std::size_t count_values(const ParamList& params);

}  // namespace posediff::nn
