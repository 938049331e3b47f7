#include "posediff/nn.hpp"

#include "posediff/errors.hpp"

#include <cmath>

namespace posediff::nn {

void init_uniform(Param& p, int fan_in, std::mt19937_64& rng, double gain) {
  const double bound = gain / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = u(rng);
  p.zero_grad();
}

Linear::Linear(std::string name, int in, int out, std::mt19937_64& rng, double gain) {
  w_.name = name + ".weight";
  b_.name = name + ".bias";
  w_.value.resize(in, out);
  b_.value.resize(1, out);
  init_uniform(w_, in, rng, gain);
  init_uniform(b_, in, rng, gain);
}

Mat Linear::forward(const Mat& x) const {
  if (x.cols() != w_.value.rows())
    fail(ErrorKind::Shape, w_.name + ": expected " + std::to_string(w_.value.rows()) +
                               " input features, got " + std::to_string(x.cols()));
  Mat y = x * w_.value;
  y.rowwise() += b_.value.row(0);
  return y;
}

Mat Linear::backward(const Mat& x, const Mat& dy) {
  backward_params(x, dy);
  return dy * w_.value.transpose();
}

void Linear::backward_params(const Mat& x, const Mat& dy) {
  w_.grad.noalias() += x.transpose() * dy;
  b_.grad += dy.colwise().sum();
}

void Linear::collect(ParamList& out) {
  out.push_back(&w_);
  out.push_back(&b_);
}

LayerNorm::LayerNorm(std::string name, int dim) {
  gamma_.name = name + ".gamma";
  beta_.name = name + ".beta";
  gamma_.value = Mat::Ones(1, dim);
  beta_.value = Mat::Zero(1, dim);
  gamma_.zero_grad();
  beta_.zero_grad();
}

Mat LayerNorm::forward(const Mat& x, Cache* cache) const {
  const auto n = x.rows();
  const auto d = x.cols();
  Mat xhat(n, d);
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps_);
    xhat.row(r) = (x.row(r).array() - mean) * inv_std(r);
  }
  Mat y = xhat.array().rowwise() * gamma_.value.row(0).array();
  y.rowwise() += beta_.value.row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Mat LayerNorm::backward(const Cache& cache, const Mat& dy) {
  gamma_.grad += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  beta_.grad += dy.colwise().sum();
  const Mat dxhat = dy.array().rowwise() * gamma_.value.row(0).array();
  const double d = static_cast<double>(dy.cols());
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_g = dxhat.row(r).mean();
    const double mean_gx = dxhat.row(r).dot(cache.xhat.row(r)) / d;
    dx.row(r) = cache.inv_std(r) *
                (dxhat.row(r).array() - mean_g - cache.xhat.row(r).array() * mean_gx);
  }
  return dx;
}

void LayerNorm::collect(ParamList& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

Mat relu(const Mat& x) { return x.cwiseMax(0.0); }

Mat relu_backward(const Mat& x, const Mat& dy) {
  return (x.array() > 0.0).select(dy, 0.0);
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Mat gelu(const Mat& x) {
  return x.unaryExpr([](double v) {
    return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  });
}

Mat gelu_backward(const Mat& x, const Mat& dy) {
  Mat g = x.unaryExpr([](double v) {
    const double u = kGeluC * (v + kGeluA * v * v * v);
    const double th = std::tanh(u);
    const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
    return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
  });
  return g.cwiseProduct(dy);
}

Mat silu(const Mat& x) {
  return x.unaryExpr([](double v) { return v / (1.0 + std::exp(-v)); });
}

Mat silu_backward(const Mat& x, const Mat& dy) {
  Mat g = x.unaryExpr([](double v) {
    const double s = 1.0 / (1.0 + std::exp(-v));
    return s * (1.0 + v * (1.0 - s));
  });
  return g.cwiseProduct(dy);
}

Mat softmax_rows(const Mat& s) {
  Mat out(s.rows(), s.cols());
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double mx = s.row(r).maxCoeff();
    out.row(r) = (s.row(r).array() - mx).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

Conv3x3s2::Conv3x3s2(std::string name, int in_ch, int out_ch, std::mt19937_64& rng)
    : in_ch_(in_ch) {
  w_.name = name + ".weight";
  b_.name = name + ".bias";
  w_.value.resize(9 * in_ch, out_ch);
  b_.value.resize(1, out_ch);
  init_uniform(w_, 9 * in_ch, rng);
  init_uniform(b_, 9 * in_ch, rng);
}

Mat Conv3x3s2::im2col(const Mat& x, int height, int width) const {
  const int ho = out_extent(height);
  const int wo = out_extent(width);
  Mat cols = Mat::Zero(ho * wo, 9 * in_ch_);
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      const int r = oy * wo + ox;
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = 2 * oy + ky - 1;
        if (iy < 0 || iy >= height) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = 2 * ox + kx - 1;
          if (ix < 0 || ix >= width) continue;
          cols.block(r, (ky * 3 + kx) * in_ch_, 1, in_ch_) = x.row(iy * width + ix);
        }
      }
    }
  }
  return cols;
}

Mat Conv3x3s2::forward(const Mat& x, int height, int width, Cache* cache) const {
  if (x.rows() != static_cast<Eigen::Index>(height) * width || x.cols() != in_ch_)
    fail(ErrorKind::Shape, w_.name + ": input is not " + std::to_string(height) + "x" +
                               std::to_string(width) + "x" + std::to_string(in_ch_));
  Mat cols = im2col(x, height, width);
  Mat y = cols * w_.value;
  y.rowwise() += b_.value.row(0);
  if (cache) cache->cols = std::move(cols);
  return y;
}

Mat Conv3x3s2::backward(const Cache& cache, const Mat& dy, int height, int width) {
  w_.grad.noalias() += cache.cols.transpose() * dy;
  b_.grad += dy.colwise().sum();
  const Mat dcols = dy * w_.value.transpose();
  const int ho = out_extent(height);
  const int wo = out_extent(width);
  Mat dx = Mat::Zero(static_cast<Eigen::Index>(height) * width, in_ch_);
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      const int r = oy * wo + ox;
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = 2 * oy + ky - 1;
        if (iy < 0 || iy >= height) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = 2 * ox + kx - 1;
          if (ix < 0 || ix >= width) continue;
          dx.row(iy * width + ix) += dcols.block(r, (ky * 3 + kx) * in_ch_, 1, in_ch_);
        }
      }
    }
  }
  return dx;
}

void Conv3x3s2::collect(ParamList& out) {
  out.push_back(&w_);
  out.push_back(&b_);
}

Adam::Adam(const ParamList& params, AdamConfig cfg) : params_(params), cfg_(cfg) {
  for (const Param* p : params_) {
    m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Param& p = *params_[k];
    m_[k] = cfg_.beta1 * m_[k] + (1.0 - cfg_.beta1) * p.grad;
    v_[k] = cfg_.beta2 * v_[k] + (1.0 - cfg_.beta2) * p.grad.cwiseAbs2();
    p.value.array() -=
        lr * (m_[k].array() / bc1) / ((v_[k].array() / bc2).sqrt() + cfg_.eps);
  }
}

void zero_grads(const ParamList& params) {
  for (Param* p : params) p->zero_grad();
}

std::size_t count_values(const ParamList& params) {
  std::size_t n = 0;
  for (const Param* p : params) n += static_cast<std::size_t>(p->value.size());
  return n;
}

}  // namespace posediff::nn
