#include "doctest.h"

#include "posediff/errors.hpp"

#include "posediff/schedule.hpp"

#include <cmath>
#include <random>

using namespace posediff;

namespace {

PoseVec15 ones() { return PoseVec15::Ones(); }

}  // namespace

TEST_CASE("linear schedule examples and invariants") {
  const NoiseSchedule s = make_linear_schedule(1000, 1e-4, 0.02);
  CHECK(s.alpha_bar_at(1) == doctest::Approx(0.9999).epsilon(1e-15));
  for (int t = 2; t <= s.T; ++t) {
    CHECK(s.beta_at(t) > s.beta_at(t - 1));
    CHECK(s.alpha_bar_at(t) < s.alpha_bar_at(t - 1));
    CHECK(s.alpha_bar_at(t) == s.alpha_bar_at(t - 1) * s.alpha_at(t));
  }
  CHECK(s.alpha_bar_at(s.T) > 0.0);

  const NoiseSchedule two = make_linear_schedule(2, 0.1, 0.2);
  CHECK(two.alpha_bar_at(2) == doctest::Approx(0.72).epsilon(1e-15));
  CHECK_THROWS_AS(make_linear_schedule(1, 0.1, 0.1), Error);
  CHECK_THROWS_AS(make_linear_schedule(10, 0.2, 0.1), Error);
  CHECK_THROWS_AS(make_linear_schedule(0, 0.1, 0.2), Error);
}

TEST_CASE("add_noise examples") {
  const NoiseSchedule two = make_linear_schedule(2, 0.1, 0.2);
  const PoseVec15 x2 = add_noise(ones(), 2, ones(), two);
  CHECK((x2 - (std::sqrt(0.72) + std::sqrt(0.28)) * ones()).cwiseAbs().maxCoeff() < 1e-15);
  const PoseVec15 x0 = PoseVec15::LinSpaced(15, -1, 1);
  CHECK((add_noise(x0, 1, PoseVec15::Zero(), two) - std::sqrt(0.9) * x0).norm() < 1e-15);
  CHECK((add_noise(PoseVec15::Zero(), 2, x0, two) - std::sqrt(0.28) * x0).norm() < 1e-15);
  try {
    add_noise(x0, 3, x0, two);
    FAIL("expected index error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Index);
  }
  CHECK_THROWS_AS(add_noise(x0, 0, x0, two), Error);
}

TEST_CASE("single-step noise matches the closed form") {
  const NoiseSchedule s = make_linear_schedule(1000, 1e-4, 0.02);
  for (int t = 1; t <= s.T; ++t)
    CHECK(std::sqrt(1.0 - s.beta_at(t)) * std::sqrt(s.alpha_bar_at(t - 1)) ==
          doctest::Approx(std::sqrt(s.alpha_bar_at(t))).epsilon(1e-14));
  const PoseVec15 e = PoseVec15::LinSpaced(15, 0, 1);
  CHECK((single_step_noise(PoseVec15::Zero(), 5, e, s) - std::sqrt(s.beta_at(5)) * e).norm() < 1e-15);

  // Iterating one step at a time reproduces the marginal of add_noise.
  const NoiseSchedule small = make_linear_schedule(20, 0.01, 0.2);
  std::mt19937_64 rng(4);
  const PoseVec15 x0 = PoseVec15::LinSpaced(15, -1, 1);
  const int n = 20000;
  Eigen::VectorXd samples(n);
  for (int i = 0; i < n; ++i) {
    PoseVec15 x = x0;
    for (int t = 1; t <= small.T; ++t) x = single_step_noise(x, t, standard_normal_vec15(rng), small);
    samples(i) = x(14);
  }
  const double ab = small.alpha_bar_at(small.T);
  const double mean = samples.mean();
  const double var = (samples.array() - mean).square().sum() / (n - 1);
  CHECK(std::abs(mean - std::sqrt(ab)) < 4.0 * std::sqrt((1 - ab) / n));
  CHECK(std::abs(var - (1 - ab)) < 4.0 * (1 - ab) * std::sqrt(2.0 / (n - 1)));
}

TEST_CASE("posterior variance") {
  const NoiseSchedule two = make_linear_schedule(2, 0.1, 0.2);
  CHECK(posterior_variance(1, two) == 0.0);
  CHECK(posterior_variance(2, two) == doctest::Approx(0.1 / 0.28 * 0.2).epsilon(1e-14));
  const NoiseSchedule s = make_linear_schedule(1000, 1e-4, 0.02);
  for (int t = 1; t <= s.T; ++t) CHECK(posterior_variance(t, s) >= 0.0);
}

TEST_CASE("predict_x0 inverts add_noise") {
  const NoiseSchedule s = make_linear_schedule(1000, 1e-4, 0.02);
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> td(1, 1000);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const PoseVec15 x0 = standard_normal_vec15(rng), e = standard_normal_vec15(rng);
    const int t = td(rng);
    worst = std::max(worst, (predict_x0(add_noise(x0, t, e, s), e, t, s) - x0).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-9);
  const PoseVec15 x = PoseVec15::LinSpaced(15, 1, 2);
  CHECK((predict_x0(x, PoseVec15::Zero(), 10, s) - x / std::sqrt(s.alpha_bar_at(10))).norm() < 1e-14);
}

TEST_CASE("ddpm step against the analytic posterior q(x_{t-1} | x_t, x_0)") {
  const NoiseSchedule s = make_linear_schedule(1000, 1e-4, 0.02);
  std::mt19937_64 rng(12);
  for (int t : {1, 2, 10, 500, 1000}) {
    const PoseVec15 x0 = standard_normal_vec15(rng), e = standard_normal_vec15(rng);
    const PoseVec15 xt = add_noise(x0, t, e, s);
    const double ab = s.alpha_bar_at(t), abp = s.alpha_bar_at(t - 1), b = s.beta_at(t), a = s.alpha_at(t);
    const PoseVec15 mu = std::sqrt(abp) * b / (1 - ab) * x0 + std::sqrt(a) * (1 - abp) / (1 - ab) * xt;
    CHECK((ddpm_step(xt, e, t, PoseVec15::Zero(), s) - mu).cwiseAbs().maxCoeff() < 1e-10);
  }
  // Final step ignores the noise argument.
  const PoseVec15 x = standard_normal_vec15(rng), e = standard_normal_vec15(rng);
  CHECK(ddpm_step(x, e, 1, ones(), s) == ddpm_step(x, e, 1, PoseVec15::Zero(), s));

  // Spread of the output equals the posterior variance.
  const int t = 300, n = 10000;
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = ddpm_step(x, e, t, standard_normal_vec15(rng), s)(3);
  const double m = v.mean();
  const double var = (v.array() - m).square().sum() / (n - 1);
  CHECK(var == doctest::Approx(posterior_variance(t, s)).epsilon(0.05));
}

TEST_CASE("ddim plans") {
  const NoiseSchedule s = make_linear_schedule(1000, 1e-4, 0.02);
  CHECK(make_ddim_plan(s, 3).taus == std::vector<int>{334, 667, 1000});
  CHECK(make_ddim_plan(s, 1).taus == std::vector<int>{1000});
  const DdimPlan full = make_ddim_plan(s, 1000);
  for (int i = 1; i <= 1000; ++i) CHECK(full.tau(i) == i);
  CHECK_THROWS_AS(make_ddim_plan(s, 1001), Error);
  CHECK_THROWS_AS(make_ddim_plan(s, 0), Error);
  for (int S : {1, 2, 3, 7, 50, 1000}) {
    const DdimPlan p = make_ddim_plan(s, S);
    for (int i = 1; i <= S; ++i) {
      const double ab = s.alpha_bar_at(p.tau(i)), abp = s.alpha_bar_at(p.prev_tau(i));
      CHECK(std::abs(p.sigma(i) * p.sigma(i) - (1 - abp) / (1 - ab) * s.beta_at(p.tau(i))) < 1e-12);
      CHECK(p.sigma(i) >= 0.0);
    }
  }
  const DdimPlan half = make_ddim_plan(s, 3, 0.5);
  CHECK(half.sigma(2) == doctest::Approx(0.5 * make_ddim_plan(s, 3).sigma(2)));
}

TEST_CASE("deterministic ddim branch reproduces the sqrt(alpha_bar) relation") {
  const NoiseSchedule s = make_linear_schedule(1000, 1e-4, 0.02);
  const DdimPlan p = make_ddim_plan(s, 3, 0.0);
  std::mt19937_64 rng(2);
  const PoseVec15 x0 = standard_normal_vec15(rng), e = standard_normal_vec15(rng);
  for (int i = 3; i >= 2; --i) {
    const PoseVec15 xt = add_noise(x0, p.tau(i), e, s);
    const PoseVec15 prev = ddim_step(xt, e, i, standard_normal_vec15(rng), p, s);
    CHECK((prev - add_noise(x0, p.prev_tau(i), e, s)).cwiseAbs().maxCoeff() < 1e-10);
  }
  // Zero-noise chain with eps_hat = 0.
  const PoseVec15 xT = std::sqrt(s.alpha_bar_at(1000)) * x0;
  const PoseVec15 out = ddim_step(xT, PoseVec15::Zero(), 3, PoseVec15::Zero(), p, s);
  CHECK((out - std::sqrt(s.alpha_bar_at(667)) * x0).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("sample loop call count, determinism and oracle recovery") {
  const NoiseSchedule s = make_linear_schedule(1000, 1e-4, 0.02);
  const PoseVec15 target = PoseVec15::LinSpaced(15, -0.8, 1.3);
  int calls = 0;
  auto oracle = [&](const PoseVec15& x, int t, int) -> PoseVec15 {
    ++calls;
    const double ab = s.alpha_bar_at(t);
    return (x - std::sqrt(ab) * target) / std::sqrt(1.0 - ab);
  };
  for (int S : {2, 3, 10}) {
    calls = 0;
    const PoseVec15 x = sample_loop(oracle, 0, make_ddim_plan(s, S), s, 77);
    CHECK(calls == S);
    CHECK((x - target).cwiseAbs().maxCoeff() < 1e-6);
  }
  auto zero = [](const PoseVec15&, int, int) -> PoseVec15 { return PoseVec15::Zero(); };
  const PoseVec15 a = sample_loop(zero, 0, make_ddim_plan(s, 3), s, 5);
  const PoseVec15 b = sample_loop(zero, 0, make_ddim_plan(s, 3), s, 5);
  CHECK(a == b);
  auto bad = [](const PoseVec15&, int, int) -> PoseVec15 {
    return PoseVec15::Constant(std::numeric_limits<double>::infinity());
  };
  try {
    sample_loop(bad, 0, make_ddim_plan(s, 3), s, 5);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Diverged);
  }
}

TEST_CASE("schedule hash tracks the tables") {
  CHECK(schedule_hash(make_linear_schedule(1000, 1e-4, 0.02)) ==
        schedule_hash(make_linear_schedule(1000, 1e-4, 0.02)));
  CHECK(schedule_hash(make_linear_schedule(1000, 1e-4, 0.02)) !=
        schedule_hash(make_linear_schedule(1000, 1e-4, 0.021)));
}
