#include "posediff/trainer.hpp"

#include "posediff/errors.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

namespace posediff {

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.batch = 16;
  c.cycle_half_steps = 500;
  return c;
}

void TrainConfig::validate() const {
  if (T < 1) fail(ErrorKind::Config, "T must be >= 1");
  if (batch < 1) fail(ErrorKind::Config, "batch must be >= 1");
  if (!(lr_lo > 0.0) || !(lr_lo < lr_hi)) fail(ErrorKind::Config, "need 0 < lr_lo < lr_hi");
  if (cycle_half_steps < 1) fail(ErrorKind::Config, "cycle_half_steps must be >= 1");
  if (max_steps < 0) fail(ErrorKind::Config, "max_steps must be >= 0");
  if (noise_draws < 1) fail(ErrorKind::Config, "noise_draws must be >= 1");
  if (checkpoint_every < 0) fail(ErrorKind::Config, "checkpoint_every must be >= 0");
  if (time_budget_s < 0.0) fail(ErrorKind::Config, "time_budget_s must be >= 0");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"T", T},
          {"batch", batch},
          {"lr_lo", lr_lo},
          {"lr_hi", lr_hi},
          {"cycle_half_steps", cycle_half_steps},
          {"max_steps", max_steps},
          {"seed", seed},
          {"noise_draws", noise_draws},
          {"drop_rgb", drop_rgb},
          {"drop_shape", drop_shape},
          {"drop_timestep", drop_timestep},
          {"checkpoint_every", checkpoint_every},
          {"time_budget_s", time_budget_s}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("T", c.T);
  get("batch", c.batch);
  get("lr_lo", c.lr_lo);
  get("lr_hi", c.lr_hi);
  get("cycle_half_steps", c.cycle_half_steps);
  get("max_steps", c.max_steps);
  get("seed", c.seed);
  get("noise_draws", c.noise_draws);
  get("drop_rgb", c.drop_rgb);
  get("drop_shape", c.drop_shape);
  get("drop_timestep", c.drop_timestep);
  get("checkpoint_every", c.checkpoint_every);
  get("time_budget_s", c.time_budget_s);
  return c;
}

double lr_at(long long step, const TrainConfig& cfg) {
  const long long period = 2 * cfg.cycle_half_steps;
  const long long phase = ((step % period) + period) % period;
  const long long dist = phase <= cfg.cycle_half_steps ? phase : period - phase;
  const double frac = static_cast<double>(dist) / static_cast<double>(cfg.cycle_half_steps);
  return cfg.lr_lo + (cfg.lr_hi - cfg.lr_lo) * frac;
}

TrainingExample make_example(const SceneSample& s, double norm_scale) {
  TrainingExample ex;
  ex.id = s.scene_id;
  ex.obs = s.observation();
  ex.ctx = make_context(ex.obs.points, norm_scale);
  ex.x0 = flatten(s.gt_pose, ex.ctx);
  ex.model_points = s.model_points.cast<double>();
  ex.nocs_points = s.nocs_points.cast<double>();
  return ex;
}

double diffusion_loss(const Mat& eps, const Mat& eps_hat, Mat* grad_eps_hat) {
  if (eps.rows() != eps_hat.rows() || eps.cols() != eps_hat.cols())
    fail(ErrorKind::Shape, "diffusion loss: shape mismatch");
  if (eps.rows() == 0) fail(ErrorKind::InvalidInput, "diffusion loss of an empty batch");
  const double n = static_cast<double>(eps.rows());
  const Mat diff = eps_hat - eps;
  if (grad_eps_hat) *grad_eps_hat = diff * (2.0 / n);
  return diff.squaredNorm() / n;
}

Trainer::Trainer(PoseDiffusionModel& model, const TrainConfig& cfg)
    : model_(model), cfg_(cfg), adam_(model.params()) {
  cfg_.validate();
  if (cfg_.T != model_.config().T())
    fail(ErrorKind::Config, "train T " + std::to_string(cfg_.T) + " differs from model T " +
                                std::to_string(model_.config().T()));
}

ConditionMask Trainer::mask() const {
  ConditionMask m;
  m.rgb = !cfg_.drop_rgb;
  m.shape = !cfg_.drop_shape;
  m.timestep = !cfg_.drop_timestep;
  return m;
}

StepLosses Trainer::compute_gradients(const std::vector<const TrainingExample*>& batch,
                                      std::mt19937_64& rng) {
  if (batch.empty()) fail(ErrorKind::InvalidInput, "empty training batch");
  nn::zero_grads(model_.params());
  ConditionNet& cond = model_.conditioning();
  Denoiser& den = model_.denoiser();
  const ConditioningConfig& cc = cond.config();
  const NoiseSchedule& sched = model_.schedule();
  const int B = static_cast<int>(batch.size());
  const int K = cfg_.noise_draws;
  const int rows = B * K;

  auto diverged = [&](const std::string& what, int b) {
    fail(ErrorKind::Diverged, "non-finite " + what + " at step " + std::to_string(step_) + ", sample " +
                                  batch[static_cast<std::size_t>(b)]->id);
  };

  StepLosses out;
  std::vector<ConditionNet::Cache> caches(static_cast<std::size_t>(B));
  std::vector<SceneFeatures> feats(static_cast<std::size_t>(B));
  std::vector<Mat> dR(static_cast<std::size_t>(B)), dN(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    const auto ub = static_cast<std::size_t>(b);
    const TrainingExample& ex = *batch[ub];
    feats[ub] = cond.encode_scene(ex.obs, ex.ctx, &caches[ub]);
    const double cd = chamfer_loss(feats[ub].shapes.R_s, ex.model_points, &dR[ub]);
    const double sl1 = smooth_l1_nocs_loss(feats[ub].shapes.N_s, ex.nocs_points, &dN[ub]);
    if (!std::isfinite(cd)) diverged("chamfer loss", b);
    if (!std::isfinite(sl1)) diverged("smooth-L1 loss", b);
    dR[ub] /= B;
    dN[ub] /= B;
    out.cd += cd / B;
    out.sl1 += sl1 / B;
  }

  std::uniform_int_distribution<int> tdist(1, sched.T);
  std::vector<int> ts(static_cast<std::size_t>(rows));
  Mat x_t(rows, 15), eps(rows, 15);
  for (int b = 0; b < B; ++b) {
    for (int k = 0; k < K; ++k) {
      const int r = b * K + k;
      ts[static_cast<std::size_t>(r)] = tdist(rng);
      const PoseVec15 e = standard_normal_vec15(rng);
      eps.row(r) = e.transpose();
      x_t.row(r) = add_noise(batch[static_cast<std::size_t>(b)]->x0, ts[static_cast<std::size_t>(r)], e, sched)
                       .transpose();
    }
  }

  const ConditionMask m = mask();
  TimestepEmbedder::Cache tcache;
  const Mat temb = cond.timestep().forward(ts, &tcache);
  const int tw = cc.time_width, rw = cc.rgb_width, pw = cc.point_width, sw = cc.shape_width;
  Mat C = Mat::Zero(rows, cc.condition_width());
  for (int b = 0; b < B; ++b) {
    const SceneFeatures& f = feats[static_cast<std::size_t>(b)];
    for (int k = 0; k < K; ++k) {
      const int r = b * K + k;
      if (m.timestep) C.block(r, 0, 1, tw) = temb.row(r);
      if (m.rgb) C.block(r, tw, 1, rw) = f.c_rgb;
      if (m.point) C.block(r, tw + rw, 1, pw) = f.c_point;
      if (m.shape) C.block(r, tw + rw + pw, 1, sw) = f.c_shape;
    }
  }

  Denoiser::Cache dcache;
  Mat eps_hat;
  try {
    eps_hat = den.forward(x_t, C, &dcache);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Diverged) throw;
    for (int r = 0; r < rows; ++r)
      if (!C.row(r).allFinite()) diverged("condition", r / K);
    fail(ErrorKind::Diverged, std::string(e.what()) + " at step " + std::to_string(step_));
  }
  Mat g;
  out.diff = diffusion_loss(eps, eps_hat, &g);
  if (!std::isfinite(out.diff)) {
    for (int r = 0; r < rows; ++r)
      if (!eps_hat.row(r).allFinite()) diverged("diffusion loss", r / K);
    diverged("diffusion loss", 0);
  }
  out.total = out.cd + out.sl1 + out.diff;

  const Mat dC = den.backward(dcache, g);
  if (m.timestep) cond.timestep().backward(tcache, dC.leftCols(tw));
  for (int b = 0; b < B; ++b) {
    const auto ub = static_cast<std::size_t>(b);
    const auto rows_b = dC.middleRows(b * K, K);
    const RowVec sum = rows_b.colwise().sum();
    const RowVec d_rgb = m.rgb ? RowVec(sum.segment(tw, rw)) : RowVec::Zero(rw);
    const RowVec d_point = m.point ? RowVec(sum.segment(tw + rw, pw)) : RowVec::Zero(pw);
    const RowVec d_shape = m.shape ? RowVec(sum.segment(tw + rw + pw, sw)) : RowVec::Zero(sw);
    cond.backward_scene(caches[ub], d_rgb, d_point, d_shape, dR[ub], dN[ub], batch[ub]->ctx.scale);
  }
  return out;
}

StepLosses Trainer::train_step(const std::vector<const TrainingExample*>& batch, std::mt19937_64& rng) {
  const StepLosses l = compute_gradients(batch, rng);
  adam_.step(lr_at(step_, cfg_));
  ++step_;
  return l;
}

CheckpointState Trainer::checkpoint_state(const nlohmann::json& meta) {
  CheckpointState s;
  s.step = step_;
  s.meta = meta;
  s.meta["train"] = cfg_.to_json();
  s.meta["wall_s"] = wall_before_;
  s.first_moments = adam_.first_moments();
  s.second_moments = adam_.second_moments();
  s.optimizer_steps = adam_.steps();
  return s;
}

void Trainer::restore(const CheckpointState& state) {
  step_ = state.step;
  if (!state.first_moments.empty()) {
    if (state.first_moments.size() != adam_.first_moments().size())
      fail(ErrorKind::Checkpoint, "optimizer state does not match the model");
    adam_.first_moments() = state.first_moments;
    adam_.second_moments() = state.second_moments;
    adam_.set_steps(state.optimizer_steps);
  }
  wall_before_ = state.meta.value("wall_s", 0.0);
}

Trainer::FitSummary Trainer::fit(const std::vector<TrainingExample>& data, const FitOptions& opts) {
  if (data.empty()) fail(ErrorKind::Ingestion, "no training samples");
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  auto elapsed = [&start] { return std::chrono::duration<double>(clock::now() - start).count(); };

  std::ofstream log;
  if (!opts.log_path.empty()) {
    if (opts.log_path.has_parent_path()) std::filesystem::create_directories(opts.log_path.parent_path());
    log.open(opts.log_path, std::ios::app);
    if (!log) fail(ErrorKind::Config, "cannot open log " + opts.log_path.string());
  }
  auto save = [&] {
    if (opts.checkpoint_path.empty()) return;
    const double saved = wall_before_;
    wall_before_ += elapsed();
    save_checkpoint(opts.checkpoint_path, model_, checkpoint_state(opts.meta));
    wall_before_ = saved;
  };

  FitSummary summary;
  std::vector<std::size_t> order(data.size());
  const std::size_t bsz = std::min(data.size(), static_cast<std::size_t>(cfg_.batch));
  while (step_ < cfg_.max_steps) {
    if (cfg_.time_budget_s > 0.0 && wall_before_ + elapsed() >= cfg_.time_budget_s) {
      spdlog::warn("training time budget of {:.0f} s reached at step {}", cfg_.time_budget_s, step_);
      break;
    }
    // Per-step stream so a resumed run draws the same batches.
    std::mt19937_64 rng(derive_seed(cfg_.seed, 0x74726169ULL, static_cast<std::uint64_t>(step_)));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<const TrainingExample*> batch(bsz);
    for (std::size_t i = 0; i < bsz; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
      std::swap(order[i], order[pick(rng)]);
      batch[i] = &data[order[i]];
    }
    const long long s = step_;
    const double lr = lr_at(s, cfg_);
    const auto t0 = clock::now();
    summary.last = train_step(batch, rng);
    const double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    ++summary.steps_run;
    if (log) {
      log << nlohmann::json{{"step", s},
                            {"lr", lr},
                            {"loss_total", summary.last.total},
                            {"loss_cd", summary.last.cd},
                            {"loss_sl1", summary.last.sl1},
                            {"loss_diff", summary.last.diff},
                            {"wall_ms", ms}}
                 .dump()
          << "\n";
      log.flush();
    }
    if (s % 100 == 0)
      spdlog::info("step {} lr {:.2e} total {:.4f} (cd {:.2e} sl1 {:.4f} diff {:.4f})", s, lr,
                   summary.last.total, summary.last.cd, summary.last.sl1, summary.last.diff);
    if (cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0) save();
  }
  save();
  summary.wall_s = elapsed();
  wall_before_ += summary.wall_s;
  return summary;
}

}  // namespace posediff
