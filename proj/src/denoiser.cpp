#include "posediff/denoiser.hpp"

#include "posediff/errors.hpp"

#include <cmath>

namespace posediff {

void DenoiserConfig::validate() const {
  if (width <= 0 || pose_width <= 0 || pose_width >= width)
    fail(ErrorKind::Config, "denoiser width must exceed pose_width > 0");
  if (heads * head_dim != width)
    fail(ErrorKind::Config, "denoiser width must equal heads * head_dim");
  if (token_count * head_dim != width)
    fail(ErrorKind::Config, "denoiser width must equal token_count * head_dim");
  if (num_blocks < 1) fail(ErrorKind::Config, "denoiser needs at least one block");
  if (num_skips != num_blocks / 2)
    fail(ErrorKind::Config, "num_skips must equal floor(num_blocks / 2)");
  if (mlp_ratio < 1) fail(ErrorKind::Config, "mlp_ratio must be >= 1");
}

TransformerBlock::TransformerBlock(const std::string& name, const DenoiserConfig& cfg,
                                   std::mt19937_64& rng)
    : tokens_(cfg.token_count),
      head_dim_(cfg.head_dim),
      ln1_(name + ".ln1", cfg.width),
      q_(name + ".q", cfg.width, cfg.width, rng),
      k_(name + ".k", cfg.width, cfg.width, rng),
      v_(name + ".v", cfg.width, cfg.width, rng),
      proj_(name + ".proj", cfg.width, cfg.width, rng),
      ln2_(name + ".ln2", cfg.width),
      fc1_(name + ".fc1", cfg.width, cfg.mlp_ratio * cfg.width, rng),
      fc2_(name + ".fc2", cfg.mlp_ratio * cfg.width, cfg.width, rng) {}

namespace {

using TokenMap = Eigen::Map<Mat>;
using ConstTokenMap = Eigen::Map<const Mat>;

}  // namespace

Mat TransformerBlock::forward(const Mat& x, Cache* cache) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  const auto rows = x.rows();
  const auto width = x.cols();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(head_dim_));

  c.h1 = ln1_.forward(x, &c.ln1);
  c.q = q_.forward(c.h1);
  c.k = k_.forward(c.h1);
  c.v = v_.forward(c.h1);
  c.attn.resize(rows, static_cast<Eigen::Index>(tokens_) * tokens_);
  c.o.resize(rows, width);
  for (Eigen::Index r = 0; r < rows; ++r) {
    ConstTokenMap q(c.q.row(r).data(), tokens_, head_dim_);
    ConstTokenMap k(c.k.row(r).data(), tokens_, head_dim_);
    ConstTokenMap v(c.v.row(r).data(), tokens_, head_dim_);
    const Mat a = nn::softmax_rows(q * k.transpose() * inv_sqrt_d);
    TokenMap(c.attn.row(r).data(), tokens_, tokens_) = a;
    TokenMap(c.o.row(r).data(), tokens_, head_dim_) = a * v;
  }
  c.y1 = x + proj_.forward(c.o);
  c.h2 = ln2_.forward(c.y1, &c.ln2);
  c.m1 = fc1_.forward(c.h2);
  Mat y = c.y1 + fc2_.forward(nn::gelu(c.m1));
  if (cache) c.x = x;
  return y;
}

Mat TransformerBlock::backward(const Cache& c, const Mat& dy) {
  const auto rows = dy.rows();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(head_dim_));

  // MLP branch.
  const Mat dg = fc2_.backward(nn::gelu(c.m1), dy);
  const Mat dh2 = fc1_.backward(c.h2, nn::gelu_backward(c.m1, dg));
  Mat dy1 = dy + ln2_.backward(c.ln2, dh2);

  // Attention branch.
  const Mat d_o = proj_.backward(c.o, dy1);
  Mat dq(rows, dy.cols()), dk(rows, dy.cols()), dv(rows, dy.cols());
  for (Eigen::Index r = 0; r < rows; ++r) {
    ConstTokenMap q(c.q.row(r).data(), tokens_, head_dim_);
    ConstTokenMap k(c.k.row(r).data(), tokens_, head_dim_);
    ConstTokenMap v(c.v.row(r).data(), tokens_, head_dim_);
    ConstTokenMap a(c.attn.row(r).data(), tokens_, tokens_);
    ConstTokenMap dor(d_o.row(r).data(), tokens_, head_dim_);
    const Mat da = dor * v.transpose();
    TokenMap(dv.row(r).data(), tokens_, head_dim_) = a.transpose() * dor;
    Mat ds = a.cwiseProduct(da);
    const Eigen::VectorXd rowdot = ds.rowwise().sum();
    ds -= (a.array().colwise() * rowdot.array()).matrix();
    TokenMap(dq.row(r).data(), tokens_, head_dim_) = ds * k * inv_sqrt_d;
    TokenMap(dk.row(r).data(), tokens_, head_dim_) = ds.transpose() * q * inv_sqrt_d;
  }
  Mat dh1 = q_.backward(c.h1, dq);
  dh1 += k_.backward(c.h1, dk);
  dh1 += v_.backward(c.h1, dv);
  return dy1 + ln1_.backward(c.ln1, dh1);
}

Mat TransformerBlock::attention_matrix(const Mat& x_row) const {
  Cache c;
  forward(x_row.topRows(1), &c);
  return ConstTokenMap(c.attn.row(0).data(), tokens_, tokens_);
}

void TransformerBlock::collect(nn::ParamList& out) {
  ln1_.collect(out);
  q_.collect(out);
  k_.collect(out);
  v_.collect(out);
  proj_.collect(out);
  ln2_.collect(out);
  fc1_.collect(out);
  fc2_.collect(out);
}

Denoiser::Denoiser(const DenoiserConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
  cfg_.validate();
  pose1_ = nn::Linear("denoiser.pose1", 15, cfg_.pose_width, rng);
  pose2_ = nn::Linear("denoiser.pose2", cfg_.pose_width, cfg_.pose_width, rng);
  for (int b = 0; b < cfg_.num_blocks; ++b)
    blocks_.emplace_back("denoiser.block" + std::to_string(b + 1), cfg_, rng);
  for (int s = 0; s < cfg_.num_skips; ++s)
    reduce_.emplace_back("denoiser.skip" + std::to_string(s + 1), 2 * cfg_.width, cfg_.width, rng);
  head_ = nn::Linear("denoiser.head", cfg_.width, 15, rng, cfg_.head_gain);
}

int Denoiser::skip_source(int consumer) const {
  if (consumer < cfg_.num_blocks - cfg_.num_skips) return -1;
  return cfg_.num_blocks - 1 - consumer;
}

Mat Denoiser::embed_pose(const Mat& x_t, Mat* pre) const {
  Mat p = pose1_.forward(x_t);
  Mat out = pose2_.forward(nn::silu(p));
  if (pre) *pre = std::move(p);
  return out;
}

Mat Denoiser::forward(const Mat& x_t, const Mat& condition, Cache* cache,
                      const DenoiseOptions& options) const {
  if (x_t.cols() != 15 || condition.cols() != cfg_.condition_width() || x_t.rows() != condition.rows())
    fail(ErrorKind::Shape, "denoiser expects rows x 15 poses and rows x " +
                               std::to_string(cfg_.condition_width()) + " conditions");
  Cache local;
  Cache& c = cache ? *cache : local;
  const auto rows = x_t.rows();
  const Mat f_pose = embed_pose(x_t, &c.pose_pre);
  Mat h(rows, cfg_.width);
  h << condition, f_pose;
  c.input = h;
  c.blocks.resize(static_cast<std::size_t>(cfg_.num_blocks));
  c.reduce_in.assign(static_cast<std::size_t>(cfg_.num_skips), Mat());
  std::vector<Mat> saved(static_cast<std::size_t>(cfg_.num_skips));
  for (int b = 0; b < cfg_.num_blocks; ++b) {
    const int src = skip_source(b);
    if (src >= 0) {
      const auto s = static_cast<std::size_t>(src);
      const bool off = s < options.disabled_skips.size() && options.disabled_skips[s];
      Mat cat(rows, 2 * cfg_.width);
      cat << h, (off ? Mat(Mat::Zero(rows, cfg_.width)) : saved[s]);
      h = reduce_[s].forward(cat);
      c.reduce_in[s] = std::move(cat);
    }
    h = blocks_[static_cast<std::size_t>(b)].forward(h, &c.blocks[static_cast<std::size_t>(b)]);
    ++block_calls_.n;
    if (b < cfg_.num_skips) saved[static_cast<std::size_t>(b)] = h;
  }
  Mat eps = head_.forward(h);
  if (!eps.allFinite()) fail(ErrorKind::Diverged, "denoiser produced non-finite activations");
  if (cache) {
    c.final = std::move(h);
    c.x_t = x_t;
  }
  return eps;
}

Mat Denoiser::backward(const Cache& c, const Mat& d_eps) {
  const auto rows = d_eps.rows();
  Mat dh = head_.backward(c.final, d_eps);
  std::vector<Mat> d_saved(static_cast<std::size_t>(cfg_.num_skips), Mat::Zero(rows, cfg_.width));
  for (int b = cfg_.num_blocks - 1; b >= 0; --b) {
    if (b < cfg_.num_skips) dh += d_saved[static_cast<std::size_t>(b)];
    dh = blocks_[static_cast<std::size_t>(b)].backward(c.blocks[static_cast<std::size_t>(b)], dh);
    const int src = skip_source(b);
    if (src >= 0) {
      const auto s = static_cast<std::size_t>(src);
      const Mat dcat = reduce_[s].backward(c.reduce_in[s], dh);
      dh = dcat.leftCols(cfg_.width);
      d_saved[s] += dcat.rightCols(cfg_.width);
    }
  }
  const int cw = cfg_.condition_width();
  const Mat df = dh.rightCols(cfg_.pose_width);
  const Mat dp = pose2_.backward(nn::silu(c.pose_pre), df);
  pose1_.backward_params(c.x_t, nn::silu_backward(c.pose_pre, dp));
  return dh.leftCols(cw);
}

PoseVec15 Denoiser::denoise(const PoseVec15& x_t, const RowVec& condition,
                            const DenoiseOptions& options) const {
  const Mat out = forward(x_t.transpose(), condition, nullptr, options);
  return out.row(0).transpose();
}

void Denoiser::collect(nn::ParamList& out) {
  pose1_.collect(out);
  pose2_.collect(out);
  for (auto& b : blocks_) b.collect(out);
  for (auto& r : reduce_) r.collect(out);
  head_.collect(out);
}

}  // namespace posediff
