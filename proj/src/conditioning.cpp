#include "posediff/conditioning.hpp"

#include "posediff/errors.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <limits>

namespace posediff {

void ConditioningConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) fail(ErrorKind::Config, std::string(name) + " must be positive");
  };
  positive(T, "T");
  positive(time_width, "time_width");
  positive(rgb_width, "rgb_width");
  positive(point_width, "point_width");
  positive(num_points, "num_points");
  if (shape_width <= 0 || shape_width % 2 != 0)
    fail(ErrorKind::Config, "shape_width must be positive and even");
  if (sinusoid_dims <= 0 || sinusoid_dims % 2 != 0)
    fail(ErrorKind::Config, "sinusoid_dims must be positive and even");
  if (image_size < 16 || image_size % 16 != 0)
    fail(ErrorKind::Config, "image_size must be a multiple of 16");
  if (rgb_width % 8 != 0) fail(ErrorKind::Config, "rgb_width must be a multiple of 8");
}

NormalizationContext make_context(const Mat& points, double scale) {
  if (points.rows() == 0 || points.cols() != 3)
    fail(ErrorKind::Shape, "point cloud must be a non-empty n x 3 matrix");
  NormalizationContext ctx;
  ctx.centroid = points.colwise().mean().transpose();
  ctx.scale = scale;
  ctx.validate();
  return ctx;
}

Mat normalize_points(const Mat& points, const NormalizationContext& ctx) {
  Mat out = points;
  out.rowwise() -= ctx.centroid.transpose();
  out /= ctx.scale;
  return out;
}

namespace {

// Column-wise max with the first maximal row recorded per column.
RowVec max_pool(const Mat& x, std::vector<Eigen::Index>* argmax) {
  RowVec out(x.cols());
  if (argmax) argmax->assign(static_cast<std::size_t>(x.cols()), 0);
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    Eigen::Index best = 0;
    double v = x(0, c);
    for (Eigen::Index r = 1; r < x.rows(); ++r) {
      if (x(r, c) > v) {
        v = x(r, c);
        best = r;
      }
    }
    out(c) = v;
    if (argmax) (*argmax)[static_cast<std::size_t>(c)] = best;
  }
  return out;
}

Mat max_pool_backward(const std::vector<Eigen::Index>& argmax, const RowVec& dy, Eigen::Index rows) {
  Mat dx = Mat::Zero(rows, dy.cols());
  for (Eigen::Index c = 0; c < dy.cols(); ++c) dx(argmax[static_cast<std::size_t>(c)], c) = dy(c);
  return dx;
}

}  // namespace

TimestepEmbedder::TimestepEmbedder(const ConditioningConfig& cfg, std::mt19937_64& rng)
    : T_(cfg.T),
      dims_(cfg.sinusoid_dims),
      fc1_("time.fc1", cfg.sinusoid_dims, cfg.time_width, rng),
      fc2_("time.fc2", cfg.time_width, cfg.time_width, rng) {}

Mat TimestepEmbedder::sinusoid(const std::vector<int>& ts) const {
  const int half = dims_ / 2;
  Mat s(static_cast<Eigen::Index>(ts.size()), dims_);
  for (std::size_t r = 0; r < ts.size(); ++r) {
    const int t = ts[r];
    if (t < 1 || t > T_)
      fail(ErrorKind::Index, "time step " + std::to_string(t) + " outside [1, " +
                                 std::to_string(T_) + "]");
    for (int k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(10000.0) * k / half);
      const auto row = static_cast<Eigen::Index>(r);
      s(row, k) = std::sin(t * freq);
      s(row, half + k) = std::cos(t * freq);
    }
  }
  return s;
}

Mat TimestepEmbedder::forward(const std::vector<int>& ts, Cache* cache) const {
  Mat sinus = sinusoid(ts);
  Mat pre = fc1_.forward(sinus);
  Mat out = fc2_.forward(nn::silu(pre));
  if (cache) {
    cache->sinus = std::move(sinus);
    cache->pre = std::move(pre);
  }
  return out;
}

void TimestepEmbedder::backward(const Cache& cache, const Mat& dy) {
  const Mat dh = fc2_.backward(nn::silu(cache.pre), dy);
  fc1_.backward_params(cache.sinus, nn::silu_backward(cache.pre, dh));
}

void TimestepEmbedder::collect(nn::ParamList& out) {
  fc1_.collect(out);
  fc2_.collect(out);
}

ImageEncoder::ImageEncoder(const ConditioningConfig& cfg, std::mt19937_64& rng)
    : size_(cfg.image_size) {
  const int c4 = cfg.rgb_width;
  const int channels[5] = {3, c4 / 8, c4 / 4, c4 / 2, c4};
  for (int i = 0; i < 4; ++i)
    convs_.emplace_back("image.conv" + std::to_string(i + 1), channels[i], channels[i + 1], rng);
  head_ = nn::Linear("image.head", c4, cfg.rgb_width, rng);
}

RowVec ImageEncoder::forward(const Mat& image, Cache* cache) const {
  if (image.rows() != static_cast<Eigen::Index>(size_) * size_ || image.cols() != 3)
    fail(ErrorKind::Shape, "image must be " + std::to_string(size_) + "x" +
                               std::to_string(size_) + "x3");
  Mat x = image;
  int extent = size_;
  if (cache) {
    cache->conv.resize(convs_.size());
    cache->pre.resize(convs_.size());
  }
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    Mat pre = convs_[i].forward(x, extent, extent, cache ? &cache->conv[i] : nullptr);
    x = nn::relu(pre);
    if (cache) cache->pre[i] = std::move(pre);
    extent = nn::Conv3x3s2::out_extent(extent);
  }
  Mat pooled = x.colwise().mean();
  RowVec out = head_.forward(pooled);
  if (cache) cache->pooled = std::move(pooled);
  return out;
}

void ImageEncoder::backward(const Cache& cache, const RowVec& dy) {
  const Mat dpooled = head_.backward(cache.pooled, dy);
  std::vector<int> extents{size_};
  for (std::size_t i = 0; i < convs_.size(); ++i)
    extents.push_back(nn::Conv3x3s2::out_extent(extents.back()));
  const Eigen::Index last_rows = cache.pre.back().rows();
  Mat dx = dpooled.replicate(last_rows, 1) / static_cast<double>(last_rows);
  for (std::size_t k = convs_.size(); k-- > 0;) {
    const Mat dpre = nn::relu_backward(cache.pre[k], dx);
    const Mat din = convs_[k].backward(cache.conv[k], dpre, extents[k], extents[k]);
    if (k > 0) dx = din;
  }
}

void ImageEncoder::collect(nn::ParamList& out) {
  for (auto& c : convs_) c.collect(out);
  head_.collect(out);
}

PointEncoder::PointEncoder(const ConditioningConfig& cfg, std::mt19937_64& rng)
    : fc1_("point.fc1", 3, cfg.local_width, rng),
      fc2_("point.fc2", cfg.local_width, cfg.point_hidden, rng),
      fc3_("point.fc3", cfg.point_hidden, cfg.point_width, rng) {}

PointEncoder::Output PointEncoder::forward(const Mat& points, Cache* cache) const {
  // Any point count works; the observation-level check pins it to num_points.
  if (points.cols() != 3 || points.rows() < 1)
    fail(ErrorKind::Shape, "point encoder expects n x 3 points, got " + std::to_string(points.rows()) + " x " +
                               std::to_string(points.cols()));
  Mat pre1 = fc1_.forward(points);
  Mat local = nn::relu(pre1);
  Mat pre2 = fc2_.forward(local);
  Mat h2 = nn::relu(pre2);
  Mat h3 = fc3_.forward(h2);
  Output out;
  out.global = max_pool(h3, cache ? &cache->argmax : nullptr);
  out.local = local;
  if (cache) {
    cache->x = points;
    cache->pre1 = std::move(pre1);
    cache->local = std::move(local);
    cache->pre2 = std::move(pre2);
    cache->h2 = std::move(h2);
  }
  return out;
}

void PointEncoder::backward(const Cache& cache, const RowVec& d_global, const Mat& d_local) {
  const Mat dh3 = max_pool_backward(cache.argmax, d_global, cache.h2.rows());
  const Mat dh2 = fc3_.backward(cache.h2, dh3);
  Mat dlocal = fc2_.backward(cache.local, nn::relu_backward(cache.pre2, dh2));
  if (d_local.size() > 0) dlocal += d_local;
  fc1_.backward_params(cache.x, nn::relu_backward(cache.pre1, dlocal));
}

void PointEncoder::collect(nn::ParamList& out) {
  fc1_.collect(out);
  fc2_.collect(out);
  fc3_.collect(out);
}

ShapeEstimator::ShapeEstimator(const ConditioningConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
  shape_ = make_branch("shape.rs", rng);
  nocs_ = make_branch("shape.ns", rng);
}

ShapeEstimator::Branch ShapeEstimator::make_branch(const std::string& name,
                                                   std::mt19937_64& rng) const {
  Branch b;
  const int in = cfg_.local_width + cfg_.rgb_width;
  b.w1.name = name + ".fc1.weight";
  b.b1.name = name + ".fc1.bias";
  b.w1.value.resize(in, cfg_.decoder_hidden);
  b.b1.value.resize(1, cfg_.decoder_hidden);
  nn::init_uniform(b.w1, in, rng);
  nn::init_uniform(b.b1, in, rng);
  b.fc2 = nn::Linear(name + ".fc2", cfg_.decoder_hidden, cfg_.decoder_hidden2, rng);
  b.fc3 = nn::Linear(name + ".fc3", cfg_.decoder_hidden2, 3, rng);
  b.enc1 = nn::Linear(name + ".enc1", 3, cfg_.shape_encoder_hidden, rng);
  b.enc2 = nn::Linear(name + ".enc2", cfg_.shape_encoder_hidden, cfg_.shape_width / 2, rng);
  return b;
}

Mat ShapeEstimator::branch_forward(const Branch& b, const Mat& local, const RowVec& c_rgb,
                                   BranchCache& c) const {
  // [local_i, c_rgb] * W1 evaluated as local_i * W1_top + c_rgb * W1_bottom.
  const int lw = cfg_.local_width;
  RowVec shared = c_rgb * b.w1.value.bottomRows(cfg_.rgb_width) + b.b1.value;
  c.pre1 = local * b.w1.value.topRows(lw);
  c.pre1.rowwise() += shared;
  c.h1 = nn::relu(c.pre1);
  c.pre2 = b.fc2.forward(c.h1);
  c.h2 = nn::relu(c.pre2);
  c.out = b.fc3.forward(c.h2);
  return c.out;
}

RowVec ShapeEstimator::branch_encode(const Branch& b, const Mat& points, BranchCache& c) const {
  c.epre1 = b.enc1.forward(points);
  c.eh1 = nn::relu(c.epre1);
  c.epre2 = b.enc2.forward(c.eh1);
  c.eh2 = nn::relu(c.epre2);
  return max_pool(c.eh2, &c.argmax);
}

ShapeEstimator::Output ShapeEstimator::forward(const Mat& local, const RowVec& c_rgb,
                                               double metric_scale, Cache* cache) const {
  if (local.cols() != cfg_.local_width || c_rgb.cols() != cfg_.rgb_width)
    fail(ErrorKind::Shape, "shape estimator input widths do not match the configuration");
  Cache scratch;
  Cache& c = cache ? *cache : scratch;
  const Mat rs = branch_forward(shape_, local, c_rgb, c.shape);
  const Mat ns = branch_forward(nocs_, local, c_rgb, c.nocs);
  const RowVec code_rs = branch_encode(shape_, rs, c.shape);
  const RowVec code_ns = branch_encode(nocs_, ns, c.nocs);

  Output out;
  out.shapes.R_s = rs * metric_scale;
  out.shapes.N_s = ns;
  out.c_shape.resize(cfg_.shape_width);
  out.c_shape << code_rs, code_ns;
  if (ns.cwiseAbs().maxCoeff() > 0.6)
    spdlog::debug("NOCS estimate leaves the soft bound: max |N_s| = {}", ns.cwiseAbs().maxCoeff());
  if (cache) {
    c.local = local;
    c.c_rgb = c_rgb;
  }
  return out;
}

void ShapeEstimator::branch_backward(Branch& b, const BranchCache& c, const Mat& local,
                                     const RowVec& c_rgb, const Mat& d_out, const RowVec& d_code,
                                     InputGrads& grads) {
  const Mat deh2 = max_pool_backward(c.argmax, d_code, c.eh2.rows());
  const Mat deh1 = b.enc2.backward(c.eh1, nn::relu_backward(c.epre2, deh2));
  Mat dout = b.enc1.backward(c.out, nn::relu_backward(c.epre1, deh1));
  dout += d_out;
  const Mat dh2 = b.fc3.backward(c.h2, dout);
  const Mat dh1 = b.fc2.backward(c.h1, nn::relu_backward(c.pre2, dh2));
  const Mat dpre1 = nn::relu_backward(c.pre1, dh1);
  const int lw = cfg_.local_width;
  const RowVec dshared = dpre1.colwise().sum();
  b.w1.grad.topRows(lw).noalias() += local.transpose() * dpre1;
  b.w1.grad.bottomRows(cfg_.rgb_width).noalias() += c_rgb.transpose() * dshared;
  b.b1.grad += dshared;
  grads.d_local.noalias() += dpre1 * b.w1.value.topRows(lw).transpose();
  grads.d_rgb.noalias() += dshared * b.w1.value.bottomRows(cfg_.rgb_width).transpose();
}

ShapeEstimator::InputGrads ShapeEstimator::backward(const Cache& cache, const Mat& dR_s,
                                                    const Mat& dN_s, const RowVec& d_shape,
                                                    double metric_scale) {
  InputGrads g;
  g.d_local = Mat::Zero(cache.local.rows(), cache.local.cols());
  g.d_rgb = RowVec::Zero(cache.c_rgb.cols());
  const int half = cfg_.shape_width / 2;
  const Mat d_rs = dR_s.size() ? Mat(dR_s * metric_scale) : Mat::Zero(cache.local.rows(), 3);
  const Mat d_ns = dN_s.size() ? dN_s : Mat::Zero(cache.local.rows(), 3);
  const RowVec ds = d_shape.size() ? d_shape : RowVec::Zero(cfg_.shape_width);
  branch_backward(shape_, cache.shape, cache.local, cache.c_rgb, d_rs, ds.head(half), g);
  branch_backward(nocs_, cache.nocs, cache.local, cache.c_rgb, d_ns, ds.tail(half), g);
  return g;
}

void ShapeEstimator::collect(nn::ParamList& out) {
  for (Branch* b : {&shape_, &nocs_}) {
    out.push_back(&b->w1);
    out.push_back(&b->b1);
    b->fc2.collect(out);
    b->fc3.collect(out);
    b->enc1.collect(out);
    b->enc2.collect(out);
  }
}

ConditionNet::ConditionNet(const ConditioningConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
  cfg_.validate();
  time_ = TimestepEmbedder(cfg_, rng);
  image_ = ImageEncoder(cfg_, rng);
  points_ = PointEncoder(cfg_, rng);
  shape_ = ShapeEstimator(cfg_, rng);
}

RowVec ConditionNet::embed_timestep(int t) const { return time_.forward({t}); }

RowVec ConditionNet::encode_image(const Mat& image) const { return image_.forward(image); }

PointEncoder::Output ConditionNet::encode_points(const Mat& normalized_points) const {
  return points_.forward(normalized_points);
}

ShapeEstimator::Output ConditionNet::estimate_shapes(const Mat& local, const RowVec& c_rgb,
                                                     double metric_scale) const {
  return shape_.forward(local, c_rgb, metric_scale);
}

SceneFeatures ConditionNet::encode_scene(const ObservationBatch& obs, const NormalizationContext& ctx,
                                         Cache* cache) const {
  if (obs.points.rows() != cfg_.num_points || obs.points.cols() != 3)
    fail(ErrorKind::Shape, "observation must hold " + std::to_string(cfg_.num_points) + " x 3 points, got " +
                               std::to_string(obs.points.rows()) + " x " + std::to_string(obs.points.cols()));
  SceneFeatures f;
  f.c_rgb = image_.forward(obs.image, cache ? &cache->image : nullptr);
  const auto pts = points_.forward(normalize_points(obs.points, ctx), cache ? &cache->points : nullptr);
  f.c_point = pts.global;
  auto shape = shape_.forward(pts.local, f.c_rgb, ctx.scale, cache ? &cache->shape : nullptr);
  f.c_shape = std::move(shape.c_shape);
  f.shapes = std::move(shape.shapes);
  return f;
}

void ConditionNet::backward_scene(const Cache& cache, const RowVec& d_rgb, const RowVec& d_point,
                                  const RowVec& d_shape, const Mat& dR_s, const Mat& dN_s,
                                  double metric_scale) {
  const auto g = shape_.backward(cache.shape, dR_s, dN_s, d_shape, metric_scale);
  points_.backward(cache.points, d_point, g.d_local);
  image_.backward(cache.image, d_rgb + g.d_rgb);
}

ConditionVector ConditionNet::assemble(const RowVec& c_timestep, const SceneFeatures& scene,
                                       const ConditionMask& mask) const {
  ConditionVector cv;
  cv.c_timestep = mask.timestep ? c_timestep : RowVec::Zero(cfg_.time_width);
  cv.c_rgb = mask.rgb ? scene.c_rgb : RowVec::Zero(cfg_.rgb_width);
  cv.c_point = mask.point ? scene.c_point : RowVec::Zero(cfg_.point_width);
  cv.c_shape = mask.shape ? scene.c_shape : RowVec::Zero(cfg_.shape_width);
  cv.c.resize(cfg_.condition_width());
  cv.c << cv.c_timestep, cv.c_rgb, cv.c_point, cv.c_shape;
  return cv;
}

ConditionVector ConditionNet::build_condition(int t, const ObservationBatch& obs,
                                              const NormalizationContext& ctx,
                                              const ConditionMask& mask) const {
  return assemble(embed_timestep(t), encode_scene(obs, ctx), mask);
}

void ConditionNet::collect(nn::ParamList& out) {
  time_.collect(out);
  image_.collect(out);
  points_.collect(out);
  shape_.collect(out);
}

double chamfer_loss(const Mat& a, const Mat& b, Mat* grad_a) {
  if (a.rows() == 0 || b.rows() == 0) fail(ErrorKind::InvalidInput, "chamfer loss of an empty set");
  if (a.cols() != 3 || b.cols() != 3) fail(ErrorKind::Shape, "chamfer loss expects n x 3 sets");
  // Nearest neighbours from the expanded squared distance; the loss itself uses exact differences.
  const Eigen::VectorXd na = a.rowwise().squaredNorm();
  const Eigen::VectorXd nb = b.rowwise().squaredNorm();
  Mat d = -2.0 * a * b.transpose();
  d.colwise() += na;
  d.rowwise() += nb.transpose();

  const auto n = a.rows();
  const auto m = b.rows();
  if (grad_a) grad_a->setZero(n, 3);
  double sum_a = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index j = 0;
    d.row(i).minCoeff(&j);
    const Eigen::RowVector3d diff = a.row(i) - b.row(j);
    sum_a += diff.squaredNorm();
    if (grad_a) grad_a->row(i) += diff * (1.0 / static_cast<double>(n));
  }
  double sum_b = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    Eigen::Index i = 0;
    d.col(j).minCoeff(&i);
    const Eigen::RowVector3d diff = a.row(i) - b.row(j);
    sum_b += diff.squaredNorm();
    if (grad_a) grad_a->row(i) += diff * (1.0 / static_cast<double>(m));
  }
  return 0.5 * (sum_a / static_cast<double>(n) + sum_b / static_cast<double>(m));
}

double smooth_l1_branch(double x) { return x <= 0.1 ? 5.0 * x * x : x - 0.05; }

double smooth_l1_nocs_loss(const Mat& pred, const Mat& target, Mat* grad_pred) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols() || pred.cols() != 3)
    fail(ErrorKind::Shape, "smooth-L1 loss expects two row-correspondent n x 3 sets");
  if (pred.rows() == 0) fail(ErrorKind::InvalidInput, "smooth-L1 loss of an empty set");
  const double inv_n = 1.0 / static_cast<double>(pred.rows());
  if (grad_pred) grad_pred->setZero(pred.rows(), 3);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    for (int k = 0; k < 3; ++k) {
      const double diff = pred(i, k) - target(i, k);
      const double x = std::abs(diff);
      sum += smooth_l1_branch(x);
      if (grad_pred) {
        const double slope = x <= 0.1 ? 10.0 * x : 1.0;
        (*grad_pred)(i, k) = (diff >= 0.0 ? slope : -slope) * inv_n;
      }
    }
  }
  return sum * inv_n;
}

}  // namespace posediff
