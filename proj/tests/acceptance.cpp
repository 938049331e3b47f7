// Acceptance suite: one PASS/FAIL line per criterion. Criteria 8-10 need the
// trained desk model; it is trained on first run and cached in --cache-dir.

#include "gradcheck.hpp"

#include "posediff/config.hpp"
#include "posediff/dataset.hpp"
#include "posediff/eval.hpp"
#include "posediff/grasp.hpp"
#include "posediff/schedule.hpp"
#include "posediff/trainer.hpp"

#include "CLI11.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>

using namespace posediff;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

PoseVec15 randn15(std::mt19937_64& rng) { return standard_normal_vec15(rng); }

Rotation3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return Rotation3(q.toRotationMatrix());
}

// ---------------------------------------------------------------- 1-3

Outcome scheduler_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  const NoiseSchedule sched = make_linear_schedule(50, 1e-4, 0.02);
  const DdimPlan plan = make_ddim_plan(sched, 50, 1.0);
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> td(1, 50);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const PoseVec15 x = randn15(rng), e = randn15(rng), z = randn15(rng);
    const int t = td(rng);
    const PoseVec15 a = ddim_step(x, e, t, z, plan, sched);
    const PoseVec15 b = ddpm_step(x, e, t, z, sched);
    worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-10 && secs < 5.0, fmt("max |ddim - ddpm| = %.3g (tol 1e-10), %.3f s (limit 5 s)", worst, secs)};
}

Outcome forward_algebra() {
  const int T = 1000;
  const NoiseSchedule s = make_linear_schedule(T, 1e-4, 0.02);
  double rec = 0.0, logsum_err = 0.0;
  long double logsum = 0.0L;
  for (int t = 1; t <= T; ++t) {
    rec = std::max(rec, std::abs(s.alpha_bar_at(t) - s.alpha_bar_at(t - 1) * s.alpha_at(t)) / s.alpha_bar_at(t));
    logsum += std::log1p(-static_cast<long double>(s.beta_at(t)));
    logsum_err = std::max(logsum_err, std::abs(s.alpha_bar_at(t) - static_cast<double>(std::exp(logsum))) /
                                          s.alpha_bar_at(t));
  }
  bool ok = rec <= std::numeric_limits<double>::epsilon() && logsum_err < 1e-12;
  std::string detail = fmt("recursion rel. residual %.3g (<= 1 ulp), rel. error vs exp(sum log(1-beta)) %.3g", rec, logsum_err);
  std::mt19937_64 rng(202);
  const int n = 100000;
  PoseVec15 x0 = PoseVec15::Zero();
  x0(0) = 0.8;
  for (int t : {1, T / 2, T}) {
    const double ab = s.alpha_bar_at(t);
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double v = add_noise(x0, t, randn15(rng), s)(0);
      sum += v;
      sq += v * v;
    }
    const double mean = sum / n;
    const double var = (sq - n * mean * mean) / (n - 1);
    const double se_mean = std::sqrt((1 - ab) / n);
    const double se_var = (1 - ab) * std::sqrt(2.0 / (n - 1));
    const double zm = (mean - std::sqrt(ab) * x0(0)) / se_mean;
    const double zv = (var - (1 - ab)) / se_var;
    ok = ok && std::abs(zm) <= 3 && std::abs(zv) <= 3;
    detail += fmt("; t=%d mean z=%.2f var z=%.2f", t, zm, zv);
  }
  return {ok, detail + " (limit |z| <= 3)"};
}

Outcome oracle_denoiser() {
  const NoiseSchedule s = make_linear_schedule(1000, 1e-4, 0.02);
  std::mt19937_64 rng(303);
  const PoseVec15 x0 = randn15(rng);
  auto oracle = [&](const PoseVec15& x, int t, int) {
    const double ab = s.alpha_bar_at(t);
    return PoseVec15((x - std::sqrt(ab) * x0) / std::sqrt(1 - ab));
  };
  double worst = 0.0;
  for (int S : {2, 3, 10}) {
    const DdimPlan plan = make_ddim_plan(s, S, 1.0);
    worst = std::max(worst, (sample_loop(oracle, 0, plan, s, 7 + S) - x0).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-6, fmt("max |x0_hat - x0| over S in {2,3,10} = %.3g (tol 1e-6)", worst)};
}

// ---------------------------------------------------------------- 4

ModelConfig tiny_model() {
  ModelConfig m;
  auto& c = m.conditioning;
  c.time_width = 8;
  c.rgb_width = 16;
  c.point_width = 16;
  c.shape_width = 8;
  c.image_size = 16;
  c.num_points = 32;
  c.sinusoid_dims = 8;
  c.local_width = 8;
  c.point_hidden = 16;
  c.decoder_hidden = 16;
  c.decoder_hidden2 = 8;
  c.shape_encoder_hidden = 8;
  auto& d = m.denoiser;
  d.width = 64;
  d.pose_width = 16;
  d.heads = 4;
  d.head_dim = 16;
  d.token_count = 4;
  d.num_blocks = 3;
  d.num_skips = 1;
  return m;
}

Outcome loss_units() {
  Mat a(1, 3), b(1, 3);
  a << 0.3, -0.1, 0.2;
  b << -0.2, 0.4, 0.25;
  const double d2 = (a - b).squaredNorm();
  const double cd = chamfer_loss(a, b);
  const double lo = 5.0 * 0.1 * 0.1, hi = 0.1 - 0.05;
  const double kink = smooth_l1_branch(0.1);

  // Total = sum on a real step of a small model.
  PoseDiffusionModel model(tiny_model());
  TrainConfig tc;
  tc.batch = 2;
  Trainer tr(model, tc);
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<TrainingExample> ex(2);
  for (auto& e : ex) {
    e.id = "toy";
    e.obs.image = Mat(256, 3).unaryExpr([&](double) { return 0.5 + 0.5 * u(rng); });
    e.obs.points = Mat(32, 3).unaryExpr([&](double) { return 0.04 * u(rng); });
    e.obs.points.col(2).array() += 0.6;
    e.ctx = make_context(e.obs.points, 0.3);
    Pose9D p;
    p.translation = e.ctx.centroid;
    p.size = Vec3(0.1, 0.1, 0.1);
    e.x0 = flatten(p, e.ctx);
    e.model_points = Mat(32, 3).unaryExpr([&](double) { return 0.05 * u(rng); });
    e.nocs_points = e.model_points / 0.1;
  }
  const StepLosses l = tr.train_step({&ex[0], &ex[1]}, rng);
  const bool ok = cd == d2 && std::abs(lo - 0.05) <= 1e-12 && std::abs(hi - 0.05) <= 1e-12 &&
                  std::abs(kink - 0.05) <= 1e-12 && l.total == l.cd + l.sl1 + l.diff;
  return {ok, fmt("chamfer %.17g vs d^2 %.17g; smooth-L1 at 0.1: quadratic %.3g linear %.3g impl %.3g; "
                  "total - (cd + sl1 + diff) = %.3g",
                  cd, d2, lo - 0.05, hi - 0.05, kink - 0.05, l.total - (l.cd + l.sl1 + l.diff))};
}

// ---------------------------------------------------------------- 5-6

Outcome iou_oracle() {
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> size(0.05, 0.3), off(-0.12, 0.12);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    Pose9D a, b;
    a.translation = Vec3(off(rng), off(rng), 0.6 + off(rng));
    b.translation = a.translation + Vec3(off(rng), off(rng), off(rng));
    a.size = Vec3(size(rng), size(rng), size(rng));
    b.size = Vec3(size(rng), size(rng), size(rng));
    double inter = 1.0;
    for (int d = 0; d < 3; ++d) {
      const double lo = std::max(a.translation(d) - a.size(d) / 2, b.translation(d) - b.size(d) / 2);
      const double hi = std::min(a.translation(d) + a.size(d) / 2, b.translation(d) + b.size(d) / 2);
      inter *= std::max(0.0, hi - lo);
    }
    const double exact = inter / (a.size.prod() + b.size.prod() - inter);
    const double mc = iou3d(box_from_pose(a), box_from_pose(b), std::nullopt, 17, 200000);
    worst = std::max(worst, std::abs(mc - exact));
  }
  return {worst <= 0.01, fmt("max |MC - analytic| over 50 pairs = %.4f (tol 0.01, N=200000)", worst)};
}

Outcome umeyama_recovery() {
  std::mt19937_64 rng(606);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> sc(0.5, 2.0);
  double worst_rot = 0.0, worst_scale = 0.0;
  int traps = 0;
  auto naive_improper = [](const Eigen::MatrixX3d& src, const Eigen::MatrixX3d& dst) {
    const Eigen::MatrixX3d sc0 = src.rowwise() - src.colwise().mean();
    const Eigen::MatrixX3d dc0 = dst.rowwise() - dst.colwise().mean();
    Eigen::JacobiSVD<Mat3> svd(dc0.transpose() * sc0, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0;
  };
  for (int k = 0; k < 100; ++k) {
    const bool trap = k < 10;
    Eigen::MatrixX3d src(trap ? 12 : 30, 3), dst;
    Rotation3 R;
    double s = 1.0;
    // Coplanar sources leave the third singular direction free; keep drawing until the
    // unconstrained U V^T is a reflection, so the det correction is exercised.
    for (int attempt = 0; attempt < 1000; ++attempt) {
      for (Eigen::Index i = 0; i < src.size(); ++i) src.data()[i] = n(rng);
      if (trap) src.col(2).setZero();
      R = random_rotation(rng);
      s = sc(rng);
      const Vec3 t(n(rng), n(rng), n(rng));
      dst = ((s * R.matrix() * src.transpose()).colwise() + t).transpose();
      if (!trap || naive_improper(src, dst)) break;
    }
    if (trap && naive_improper(src, dst)) ++traps;
    const Similarity est = umeyama_align(src, dst);
    worst_rot = std::max(worst_rot, rotation_error_deg(est.rotation, R));
    worst_scale = std::max(worst_scale, std::abs(est.scale - s) / s);
    if (est.rotation.matrix().determinant() < 0) worst_rot = 180.0;
  }
  // Mirrored coplanar sets with forced proper rotation.
  Eigen::MatrixX3d plane(8, 3);
  for (Eigen::Index i = 0; i < plane.size(); ++i) plane.data()[i] = n(rng);
  plane.col(2).setZero();
  Eigen::MatrixX3d mirror = plane;
  mirror.col(0) *= -1.0;
  const double det = umeyama_align(plane, mirror).rotation.matrix().determinant();
  const bool ok = worst_rot < 1e-6 && worst_scale < 1e-9 && traps == 10 && std::abs(det - 1.0) < 1e-12;
  return {ok, fmt("max rotation error %.3g deg (tol 1e-6), max scale rel. error %.3g (tol 1e-9), "
                  "%d of 10 coplanar trap cases have an improper naive SVD solution, mirrored-set det %.12f",
                  worst_rot, worst_scale, traps, det)};
}

// ---------------------------------------------------------------- 7

Outcome gradient_checks() {
  std::mt19937_64 rng(707);
  DenoiserConfig dc;
  dc.width = 32;
  dc.pose_width = 8;
  dc.heads = 4;
  dc.head_dim = 8;
  dc.token_count = 4;
  dc.num_blocks = 3;
  dc.num_skips = 1;
  dc.head_gain = 1.0;
  Denoiser den(dc, rng);
  nn::ParamList ps;
  den.collect(ps);
  std::normal_distribution<double> n;
  auto randn = [&](int r, int c) {
    Mat m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
  };
  const Mat x = randn(3, 15), cond = randn(3, dc.condition_width()), w = randn(3, 15);
  const double den_err = worst_directional_error(
      ps, [&] { return (den.forward(x, cond).array() * w.array()).sum(); },
      [&] {
        Denoiser::Cache c;
        den.forward(x, cond, &c);
        den.backward(c, w);
      },
      20, rng);

  ConditioningConfig cc;
  cc.T = 50;
  cc.time_width = 8;
  cc.rgb_width = 16;
  cc.point_width = 16;
  cc.shape_width = 8;
  cc.image_size = 16;
  cc.num_points = 8;
  cc.sinusoid_dims = 8;
  cc.local_width = 6;
  cc.point_hidden = 10;
  cc.decoder_hidden = 12;
  cc.decoder_hidden2 = 7;
  cc.shape_encoder_hidden = 9;
  ShapeEstimator est(cc, rng);
  nn::ParamList sp;
  est.collect(sp);
  const Mat local = randn(8, cc.local_width);
  const RowVec rgb = randn(1, cc.rgb_width);
  const Mat gt = 0.05 * randn(8, 3), nocs = 0.3 * randn(8, 3);
  const RowVec wc = randn(1, cc.shape_width);
  const double scale = 0.3;
  auto loss = [&] {
    const auto o = est.forward(local, rgb, scale);
    return chamfer_loss(o.shapes.R_s, gt) + smooth_l1_nocs_loss(o.shapes.N_s, nocs) + o.c_shape.dot(wc);
  };
  auto bp = [&] {
    ShapeEstimator::Cache c;
    const auto o = est.forward(local, rgb, scale, &c);
    Mat dR, dN;
    chamfer_loss(o.shapes.R_s, gt, &dR);
    smooth_l1_nocs_loss(o.shapes.N_s, nocs, &dN);
    est.backward(c, dR, dN, wc, scale);
  };
  const double shape_err = worst_directional_error(sp, loss, bp, 20, rng);
  return {den_err < 1e-3 && shape_err < 1e-3,
          fmt("worst relative error over 20 directions: denoiser (width 32, 3 blocks) %.3g, shape branches %.3g "
              "(tol 1e-3)",
              den_err, shape_err)};
}

// ---------------------------------------------------------------- 11

Outcome grasp_geometry() {
  std::mt19937_64 rng(1111);
  std::uniform_real_distribution<double> u(-1, 1);
  double compose_err = 0.0;
  for (int k = 0; k < 100; ++k) {
    const RigidTransform a(random_rotation(rng), Vec3(u(rng), u(rng), u(rng)));
    const RigidTransform b(random_rotation(rng), Vec3(u(rng), u(rng), u(rng)));
    const RigidTransform c(random_rotation(rng), Vec3(u(rng), u(rng), u(rng)));
    const Eigen::Matrix4d direct = a.matrix() * b.matrix() * c.matrix();
    compose_err = std::max(compose_err, (compose_o2t(a, b, c).matrix() - direct).cwiseAbs().maxCoeff());
  }

  GenerationConfig g;
  bool order_ok = true;
  double lift_err = 0.0, tilt_err = 0.0;
  const fs::path plan_file = fs::temp_directory_path() / ("acceptance_plan_" + std::to_string(rng()) + ".json");
  for (int scene = 0; scene < 20; ++scene) {
    std::vector<GraspObject> objs;
    const int count = 2 + scene % 4;
    for (int i = 0; i < count; ++i) {
      const SceneSample s = generate_scene(g, (scene + i) % 3, derive_seed(99, scene, i), "o" + std::to_string(i));
      objs.push_back({s.scene_id, s.gt_pose, s.points.cast<double>()});
    }
    const auto plans = plan_grasps(objs);
    write_plan(plans, plan_file);
    std::ifstream in(plan_file);
    const auto j = nlohmann::json::parse(in);
    std::vector<int> seen;
    double prev_depth = -1e300;
    for (const auto& p : j) {
      const int idx = p["object_index"];
      const double depth = objs[static_cast<std::size_t>(idx)].points.col(2).mean();
      order_ok = order_ok && depth >= prev_depth;
      prev_depth = depth;
      seen.push_back(idx);
      const Vec3 gp(p["grasp_point"][0], p["grasp_point"][1], p["grasp_point"][2]);
      const Vec3 center = objs[static_cast<std::size_t>(idx)].pose.translation;
      lift_err = std::max(lift_err, (gp - center - Vec3(0, 0.02, 0)).cwiseAbs().maxCoeff());
      const Vec3 pre(p["predefined_dir"][0], p["predefined_dir"][1], p["predefined_dir"][2]);
      const Vec3 app(p["approach_dir"][0], p["approach_dir"][1], p["approach_dir"][2]);
      const double ang = std::atan2(pre.cross(app).norm(), pre.dot(app)) * 180.0 / std::numbers::pi;
      tilt_err = std::max(tilt_err, std::abs(ang - 30.0));
    }
    std::sort(seen.begin(), seen.end());
    for (int i = 0; i < count; ++i) order_ok = order_ok && seen.size() == static_cast<std::size_t>(count) && seen[static_cast<std::size_t>(i)] == i;
  }
  fs::remove(plan_file);
  const bool ok = compose_err <= 1e-12 && order_ok && lift_err <= 1e-12 && tilt_err <= 1e-9;
  return {ok, fmt("compose vs direct product %.3g (tol 1e-12); depth ordering on 20 scenes %s; "
                  "lift error %.3g m; tilt error %.3g deg",
                  compose_err, order_ok ? "ok" : "WRONG", lift_err, tilt_err)};
}

// ---------------------------------------------------------------- 8-10

struct DeskRun {
  RunConfig cfg;
  std::vector<SceneSample> test;
  std::unique_ptr<PoseDiffusionModel> model;
  double train_wall_s = 0.0;
  long long train_steps = 0;
};

std::string cache_key(const RunConfig& cfg) {
  nlohmann::json j = cfg.to_json();
  for (const char* k : {"dataset", "out_dir", "checkpoint", "steps", "ddim_eta", "zero_timestep", "zero_rgb",
                        "zero_point", "zero_shape"})
    j.erase(k);
  return j.dump();
}

DeskRun prepare_desk(const fs::path& cache, const fs::path& config_file) {
  DeskRun run;
  run.cfg = load_run_config(config_file);
  const fs::path data = cache / "dataset";
  const fs::path ckpt = cache / "checkpoint.bin";
  const fs::path key_file = cache / "config_key.json";
  const std::string key = cache_key(run.cfg);
  std::string stored;
  if (fs::exists(key_file)) {
    std::ifstream in(key_file);
    std::stringstream ss;
    ss << in.rdbuf();
    stored = ss.str();
  }
  if (stored != key) {
    spdlog::info("desk cache under {} is missing or stale; regenerating", cache.string());
    fs::remove_all(cache);
    fs::create_directories(cache);
    generate_dataset(run.cfg.gen, data);
  }
  run.test = read_dataset(data / "test");
  if (!fs::exists(ckpt) || stored != key) {
    const auto train = read_dataset(data / "train");
    std::vector<TrainingExample> ex;
    for (const auto& s : train) ex.push_back(make_example(s, run.cfg.model.norm_scale));
    PoseDiffusionModel model(run.cfg.model);
    Trainer tr(model, run.cfg.train);
    Trainer::FitOptions fo;
    fo.log_path = cache / "train_log.jsonl";
    fo.checkpoint_path = ckpt;
    fo.meta = {{"run", run.cfg.to_json()}};
    tr.fit(ex, fo);
    std::ofstream(key_file) << key;
  }
  LoadedCheckpoint lc = load_checkpoint(ckpt);
  run.train_wall_s = lc.state.meta.value("wall_s", 0.0);
  run.train_steps = lc.state.step;
  run.model = std::move(lc.model);
  return run;
}

MetricsReport eval_model(const DeskRun& run, int steps, const ConditionMask& mask = {}) {
  RunConfig c = run.cfg;
  c.steps = steps;
  const PoseDiffusionModel* m = run.model.get();
  EvalOptions eo;
  eo.categories = c.gen.categories;
  eo.iou_seed = c.seed;
  return evaluate(
      run.test,
      [&](const SceneSample& s) {
        InferenceOptions io = c.inference(scene_seed(c.seed, s.scene_id));
        io.mask = mask;
        return m->predict(s.observation(), io).pose;
      },
      eo);
}

Outcome toy_end_to_end(const DeskRun& run, const MetricsReport& s3) {
  EvalOptions eo;
  eo.categories = run.cfg.gen.categories;
  const MetricsReport rnd = evaluate(run.test, random_pose_predictor(run.cfg.seed), eo);
  const int n = static_cast<int>(run.test.size());
  const bool ok = n == 60 && run.train_wall_s <= 3 * 3600.0 && s3.mean.deg10_cm5 >= 0.60 && s3.mean.iou50 >= 0.70 &&
                  rnd.mean.deg10_cm5 < 0.02;
  return {ok, fmt("%d held-out scenes, trained %lld steps in %.0f s (limit 10800 s CPU); S=3: 10deg5cm %.3f (>= 0.60), "
                  "3D50 %.3f (>= 0.70), 3D75 %.3f, 5deg2cm %.3f; random baseline 10deg5cm %.3f (< 0.02)",
                  n, run.train_steps, run.train_wall_s, s3.mean.deg10_cm5, s3.mean.iou50, s3.mean.iou75,
                  s3.mean.deg5_cm2, rnd.mean.deg10_cm5)};
}

Outcome s_sweep(const DeskRun& run, const MetricsReport& s1, const MetricsReport& s3, const MetricsReport& s10) {
  const double m1 = s1.mean.deg10_cm5, m3 = s3.mean.deg10_cm5, m10 = s10.mean.deg10_cm5;
  bool ok = m1 <= 0.2 * m3 && std::abs(m3 - m10) <= 0.1 * m3 && m3 > 0.0;
  std::string detail = fmt("10deg5cm S=1 %.3f (<= 0.2 x S=3), S=3 %.3f, S=10 %.3f (within 10%%)", m1, m3, m10);

  using clock = std::chrono::steady_clock;
  const PoseDiffusionModel& m = *run.model;
  const std::size_t frames = std::min<std::size_t>(20, run.test.size());
  std::vector<double> per_frame;
  bool calls_ok = true;
  for (int S : {1, 3, 10, 50}) {
    RunConfig c = run.cfg;
    c.steps = S;
    m.predict(run.test.front().observation(), c.inference(0));  // warm-up
    // Best of three passes damps scheduler noise on a shared machine.
    double best = 1e300;
    for (int rep = 0; rep < 3; ++rep) {
      const auto t0 = clock::now();
      for (std::size_t f = 0; f < frames; ++f) {
        const std::uint64_t before = m.denoiser().block_applications();
        const Prediction p = m.predict(run.test[f].observation(), c.inference(f));
        const std::uint64_t blocks = m.denoiser().block_applications() - before;
        calls_ok = calls_ok && p.denoiser_calls == S &&
                   blocks == static_cast<std::uint64_t>(S) * static_cast<std::uint64_t>(m.config().denoiser.num_blocks);
      }
      best = std::min(best, std::chrono::duration<double, std::milli>(clock::now() - t0).count() / frames);
    }
    per_frame.push_back(best);
  }
  bool mono = true;
  for (std::size_t i = 1; i < per_frame.size(); ++i) mono = mono && per_frame[i] >= 0.9 * per_frame[i - 1];
  ok = ok && calls_ok && mono;
  detail += fmt("; denoiser calls per frame == S: %s; ms/frame S=1 %.2f, S=3 %.2f, S=10 %.2f, S=50 %.2f (monotone within 10%%)",
                calls_ok ? "yes" : "NO", per_frame[0], per_frame[1], per_frame[2], per_frame[3]);
  return {ok, detail};
}

Outcome ablations(const DeskRun& run, const MetricsReport& full) {
  auto masked = [&](auto set) {
    ConditionMask m;
    set(m);
    return eval_model(run, 3, m).mean.deg10_cm5;
  };
  const double no_point = masked([](ConditionMask& m) { m.point = false; });
  const double no_time = masked([](ConditionMask& m) { m.timestep = false; });
  const double no_rgb = masked([](ConditionMask& m) { m.rgb = false; });
  const double no_shape = masked([](ConditionMask& m) { m.shape = false; });
  const double f = full.mean.deg10_cm5;
  const bool ok = no_point < 0.1 && no_time < 0.1 && no_rgb > 0.3 && no_rgb <= f && no_shape > 0.3 && no_shape <= f;
  return {ok, fmt("10deg5cm full %.3f; zero c_point %.3f, zero c_timestep %.3f (< 0.1); zero c_rgb %.3f, "
                  "zero c_shape %.3f (> 0.3 and <= full)",
                  f, no_point, no_time, no_rgb, no_shape)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string cache_dir = "acceptance_cache";
  std::string config = POSEDIFF_DESK_CONFIG;
  bool quick = false;
  app.add_option("--cache-dir", cache_dir, "where the desk dataset and checkpoint live");
  app.add_option("--config", config, "desk run config");
  app.add_flag("--quick", quick, "skip the criteria that need the trained model");
  CLI11_PARSE(app, argc, argv);

  int failed = 0;
  auto report = [&](int id, const char* name, const Outcome& o) {
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << id << ". " << name << ": " << o.detail << std::endl;
    failed += o.pass ? 0 : 1;
  };
  auto guarded = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    try {
      report(id, name, fn());
    } catch (const std::exception& e) {
      report(id, name, {false, std::string("threw: ") + e.what()});
    }
  };

  guarded(1, "scheduler equivalence", scheduler_equivalence);
  guarded(2, "forward-process algebra", forward_algebra);
  guarded(3, "perfect-denoiser oracle", oracle_denoiser);
  guarded(4, "loss units", loss_units);
  guarded(5, "IoU oracle", iou_oracle);
  guarded(6, "Umeyama recovery", umeyama_recovery);
  guarded(7, "gradient checks", gradient_checks);

  if (!quick) {
    try {
      const DeskRun run = prepare_desk(cache_dir, config);
      const MetricsReport s1 = eval_model(run, 1), s3 = eval_model(run, 3), s10 = eval_model(run, 10);
      std::cout << "desk model, S=3 report:\n" << s3.to_csv() << std::flush;
      guarded(8, "toy end-to-end", [&] { return toy_end_to_end(run, s3); });
      guarded(9, "S-sweep", [&] { return s_sweep(run, s1, s3, s10); });
      guarded(10, "ablation direction", [&] { return ablations(run, s3); });
    } catch (const std::exception& e) {
      for (int id : {8, 9, 10}) report(id, "desk model", {false, std::string("setup threw: ") + e.what()});
    }
  }
  guarded(11, "grasp geometry", grasp_geometry);

  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
