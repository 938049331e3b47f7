#include "doctest.h"

#include "posediff/errors.hpp"

#include "posediff/trainer.hpp"

#include <cmath>
#include <fstream>

using namespace posediff;
namespace fs = std::filesystem;

namespace {

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

std::vector<TrainingExample> tiny_data(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<TrainingExample> out;
  for (int i = 0; i < n; ++i) {
    TrainingExample ex;
    ex.id = "toy_" + std::to_string(i);
    ex.obs.image = Mat(256, 3).unaryExpr([&](double) { return 0.5 + 0.5 * u(rng); });
    ex.obs.points = Mat(32, 3).unaryExpr([&](double) { return 0.04 * u(rng); });
    ex.obs.points.col(2).array() += 0.6;
    ex.ctx = make_context(ex.obs.points, 0.3);
    Pose9D p;
    p.translation = ex.ctx.centroid + Vec3(0.01, -0.01, 0.02);
    p.rotation = Rotation3::about_axis(Vec3(u(rng), u(rng), u(rng)), u(rng));
    p.size = Vec3(0.08, 0.1, 0.06);
    ex.x0 = flatten(p, ex.ctx);
    ex.model_points = Mat(32, 3).unaryExpr([&](double) { return 0.05 * u(rng); });
    ex.nocs_points = ex.model_points / 0.1;
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<const TrainingExample*> ptrs(const std::vector<TrainingExample>& d) {
  std::vector<const TrainingExample*> p;
  for (const auto& e : d) p.push_back(&e);
  return p;
}

TrainConfig tiny_train() {
  TrainConfig t;
  t.batch = 4;
  t.cycle_half_steps = 10;
  t.max_steps = 6;
  t.seed = 3;
  return t;
}

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("posediff_trainer_" + name + "_" + std::to_string(std::random_device{}()));
}

}  // namespace

TEST_CASE("cyclic learning rate") {
  TrainConfig c;
  CHECK(lr_at(0, c) == 1e-6);
  CHECK(lr_at(20000, c) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_at(40000, c) == 1e-6);
  CHECK(lr_at(10000, c) == doctest::Approx((1e-4 + 1e-6) / 2));
  CHECK(lr_at(30000, c) == doctest::Approx(lr_at(10000, c)));
  CHECK(lr_at(60000, c) == doctest::Approx(1e-4));
  const TrainConfig d = TrainConfig::desk();
  CHECK(d.batch == 16);
  CHECK(lr_at(500, d) == doctest::Approx(1e-4));
  for (long long s = 0; s < 3000; s += 37) {
    CHECK(lr_at(s, d) >= d.lr_lo);
    CHECK(lr_at(s, d) <= d.lr_hi * (1 + 1e-12));
  }
}

TEST_CASE("config validation and json round trip") {
  TrainConfig c;
  c.lr_lo = 1e-3;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.batch = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = tiny_train();
  c.drop_rgb = true;
  const TrainConfig back = TrainConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
}

TEST_CASE("diffusion loss") {
  std::mt19937_64 rng(1);
  Mat eps(4, 15);
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = standard_normal_vec15(rng)(0);
  CHECK(diffusion_loss(eps, eps) == 0.0);
  CHECK(diffusion_loss(eps, Mat::Zero(4, 15)) == doctest::Approx(eps.squaredNorm() / 4));
  // E|eps|^2 = 15 for a 15-dim standard normal.
  double acc = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) acc += standard_normal_vec15(rng).squaredNorm();
  CHECK(acc / n == doctest::Approx(15.0).epsilon(0.02));
}

TEST_CASE("untrained desk model: first batch diffusion loss") {
  ModelConfig mc = ModelConfig::desk_scale();
  PoseDiffusionModel model(mc);
  Trainer tr(model, TrainConfig::desk());
  GenerationConfig g;
  std::vector<TrainingExample> data;
  for (int i = 0; i < 16; ++i)
    data.push_back(make_example(generate_scene(g, i % 3, static_cast<std::uint64_t>(i), "s" + std::to_string(i)),
                                mc.norm_scale));
  std::mt19937_64 rng(2);
  const StepLosses l = tr.compute_gradients(ptrs(data), rng);
  CHECK(l.diff == doctest::Approx(15.0).epsilon(0.2));
  CHECK(l.total == l.cd + l.sl1 + l.diff);
  CHECK(l.cd > 0.0);
  CHECK(l.sl1 > 0.0);
}

TEST_CASE("losses sum and gradients reach every parameter group") {
  PoseDiffusionModel model(tiny_model());
  Trainer tr(model, tiny_train());
  const auto data = tiny_data(4, 1);
  std::mt19937_64 rng(3);
  const StepLosses l = tr.compute_gradients(ptrs(data), rng);
  CHECK(l.total == l.cd + l.sl1 + l.diff);
  for (auto* p : model.params()) {
    INFO(p->name);
    CHECK(p->grad.cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("drop_timestep leaves the time embedder untouched") {
  PoseDiffusionModel model(tiny_model());
  TrainConfig t = tiny_train();
  t.drop_timestep = true;
  Trainer tr(model, t);
  const auto data = tiny_data(4, 1);
  std::mt19937_64 rng(3);
  tr.compute_gradients(ptrs(data), rng);
  int checked = 0;
  for (auto* p : model.params())
    if (p->name.find("time") != std::string::npos) {
      INFO(p->name);
      CHECK(p->grad.isZero(0.0));
      ++checked;
    }
  CHECK(checked > 0);
}

TEST_CASE("frozen batch: diffusion loss decreases") {
  PoseDiffusionModel model(tiny_model());
  TrainConfig t = tiny_train();
  t.lr_lo = 3e-4;
  t.lr_hi = 3e-4 * (1 + 1e-9);
  t.noise_draws = 1;
  Trainer tr(model, t);
  const auto data = tiny_data(4, 2);
  const auto batch = ptrs(data);
  // Fixed (t, eps) draws so only the parameters change between steps.
  auto frozen_loss = [&] {
    std::mt19937_64 rng(11);
    const StepLosses l = tr.compute_gradients(batch, rng);
    return l.diff;
  };
  double prev = frozen_loss();
  const double first = prev;
  int non_monotone = 0;
  for (int s = 0; s < 50; ++s) {
    std::mt19937_64 rng(11);
    tr.train_step(batch, rng);
    const double cur = frozen_loss();
    if (!(cur < prev)) ++non_monotone;
    prev = cur;
  }
  CHECK(non_monotone <= 5);
  CHECK(prev < 0.5 * first);
}

TEST_CASE("oracle denoiser gives zero diffusion loss") {
  // The loss is a plain squared difference, so predicting eps exactly scores zero.
  std::mt19937_64 rng(4);
  Mat eps(3, 15);
  for (int r = 0; r < 3; ++r) eps.row(r) = standard_normal_vec15(rng).transpose();
  Mat g;
  CHECK(diffusion_loss(eps, eps, &g) == 0.0);
  CHECK(g.isZero(0.0));
}

TEST_CASE("training is reproducible") {
  const auto data = tiny_data(6, 5);
  auto run = [&] {
    PoseDiffusionModel model(tiny_model());
    Trainer tr(model, tiny_train());
    tr.fit(data, {});
    std::vector<Mat> v;
    for (auto* p : model.params()) v.push_back(p->value);
    return v;
  };
  const auto a = run(), b = run();
  REQUIRE(a.size() == b.size());
  bool same = true;
  for (std::size_t i = 0; i < a.size(); ++i) same = same && a[i] == b[i];
  CHECK(same);
}

TEST_CASE("fit writes the log and a checkpoint") {
  const auto data = tiny_data(6, 6);
  PoseDiffusionModel model(tiny_model());
  Trainer tr(model, tiny_train());
  const fs::path dir = temp_path("fit");
  Trainer::FitOptions fo;
  fo.log_path = dir / "train_log.jsonl";
  fo.checkpoint_path = dir / "ckpt.bin";
  const auto sum = tr.fit(data, fo);
  CHECK(sum.steps_run == 6);
  std::ifstream in(fo.log_path);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* k : {"step", "lr", "loss_total", "loss_cd", "loss_sl1", "loss_diff", "wall_ms"}) CHECK(j.contains(k));
    CHECK(j["step"] == n);
    ++n;
  }
  CHECK(n == 6);
  CHECK(fs::exists(fo.checkpoint_path));
  fs::remove_all(dir);
}

TEST_CASE("checkpoint round trip, truncation and mismatch") {
  const fs::path dir = temp_path("ckpt");
  fs::create_directories(dir);
  PoseDiffusionModel model(tiny_model());
  Trainer tr(model, tiny_train());
  const auto data = tiny_data(4, 7);
  std::mt19937_64 rng(1);
  tr.train_step(ptrs(data), rng);
  const fs::path p = dir / "c.bin";
  save_checkpoint(p, model, tr.checkpoint_state());

  const LoadedCheckpoint back = load_checkpoint(p);
  CHECK(back.state.step == 1);
  const auto& a = model.params();
  const auto& b = back.model->params();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value == b[i]->value);
  CHECK(back.state.first_moments.size() == a.size());

  const fs::path cut = dir / "cut.bin";
  fs::copy_file(p, cut);
  fs::resize_file(cut, fs::file_size(p) / 2);
  CHECK_THROWS_AS(load_checkpoint(cut), Error);

  ModelConfig other = tiny_model();
  other.denoiser.width = 80;
  other.denoiser.head_dim = 20;
  other.denoiser.pose_width = 32;
  PoseDiffusionModel wide(other);
  try {
    load_checkpoint_into(p, wide);
    FAIL("mismatched checkpoint loaded");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Checkpoint);
  }
  fs::remove_all(dir);
}

TEST_CASE("resume continues where the uninterrupted run would be") {
  const auto data = tiny_data(6, 8);
  const fs::path dir = temp_path("resume");
  std::vector<Mat> full;
  {
    PoseDiffusionModel model(tiny_model());
    Trainer tr(model, tiny_train());
    tr.fit(data, {});
    for (auto* p : model.params()) full.push_back(p->value);
  }
  {
    PoseDiffusionModel model(tiny_model());
    TrainConfig t = tiny_train();
    t.max_steps = 3;
    Trainer tr(model, t);
    Trainer::FitOptions fo;
    fo.checkpoint_path = dir / "c.bin";
    tr.fit(data, fo);
  }
  PoseDiffusionModel model(tiny_model());
  Trainer tr(model, tiny_train());
  tr.restore(load_checkpoint_into(dir / "c.bin", model));
  CHECK(tr.step() == 3);
  tr.fit(data, {});
  CHECK(tr.step() == 6);
  bool same = true;
  for (std::size_t i = 0; i < full.size(); ++i) same = same && model.params()[i]->value == full[i];
  CHECK(same);
  fs::remove_all(dir);
}
