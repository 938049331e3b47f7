#include "posediff/schedule.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <cstring>
#include <sstream>
#include <iomanip>

namespace posediff {

void NoiseSchedule::check_step(int t) const {
  if (t < 1 || t > T)
    fail(ErrorKind::Index, "time step " + std::to_string(t) + " outside [1, " +
                               std::to_string(T) + "]");
}

NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) fail(ErrorKind::Config, "schedule needs T >= 1");
  if (!(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0))
    fail(ErrorKind::Config, "schedule needs 0 < beta_start < beta_end < 1");
  NoiseSchedule s;
  s.T = T;
  s.beta.resize(static_cast<std::size_t>(T));
  s.alpha.resize(s.beta.size());
  s.alpha_bar.resize(s.beta.size());
  double prod = 1.0;
  for (int i = 0; i < T; ++i) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(i) / (T - 1);
    const auto k = static_cast<std::size_t>(i);
    s.beta[k] = beta_start + frac * (beta_end - beta_start);
    s.alpha[k] = 1.0 - s.beta[k];
    prod *= s.alpha[k];
    s.alpha_bar[k] = prod;
  }
  return s;
}

std::string schedule_hash(const NoiseSchedule& sched) {
  // FNV-1a over the raw beta table.
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  mix(&sched.T, sizeof(sched.T));
  mix(sched.beta.data(), sched.beta.size() * sizeof(double));
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

DdimPlan make_ddim_plan(const NoiseSchedule& sched, int S, double eta) {
  if (S < 1 || S > sched.T)
    fail(ErrorKind::Config, "DDIM steps must lie in [1, T], got " + std::to_string(S));
  if (!(eta >= 0.0)) fail(ErrorKind::Config, "ddim_eta must be non-negative");
  DdimPlan plan;
  plan.eta = eta;
  // Even stride anchored at T: tau_i = T - (S - i) * floor(T / S).
  const int stride = sched.T / S;
  for (int i = 1; i <= S; ++i) plan.taus.push_back(sched.T - (S - i) * stride);
  for (int i = 1; i <= S; ++i) {
    const double ab = sched.alpha_bar_at(plan.taus[static_cast<std::size_t>(i - 1)]);
    const double ab_prev = sched.alpha_bar_at(plan.prev_tau(i));
    const double var = (1.0 - ab_prev) / (1.0 - ab) * sched.beta_at(plan.tau(i));
    plan.sigmas.push_back(eta * std::sqrt(var));
  }
  return plan;
}

PoseVec15 add_noise(const PoseVec15& x0, int t, const PoseVec15& eps, const NoiseSchedule& sched) {
  sched.check_step(t);
  const double ab = sched.alpha_bar_at(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

PoseVec15 single_step_noise(const PoseVec15& x_prev, int t, const PoseVec15& eps_t,
                            const NoiseSchedule& sched) {
  sched.check_step(t);
  const double b = sched.beta_at(t);
  return std::sqrt(b) * eps_t + std::sqrt(1.0 - b) * x_prev;
}

double posterior_variance(int t, const NoiseSchedule& sched) {
  sched.check_step(t);
  return (1.0 - sched.alpha_bar_at(t - 1)) / (1.0 - sched.alpha_bar_at(t)) * sched.beta_at(t);
}

PoseVec15 predict_x0(const PoseVec15& x_t, const PoseVec15& eps_hat, int t,
                     const NoiseSchedule& sched) {
  sched.check_step(t);
  const double ab = sched.alpha_bar_at(t);
  return (x_t - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);
}

PoseVec15 posterior_mean(const PoseVec15& x_t, const PoseVec15& eps_hat, int t,
                         const NoiseSchedule& sched) {
  sched.check_step(t);
  const double a = sched.alpha_at(t);
  const double ab = sched.alpha_bar_at(t);
  return (x_t - (1.0 - a) / std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(a);
}

PoseVec15 ddpm_step(const PoseVec15& x_t, const PoseVec15& eps_hat, int t,
                    const PoseVec15& noise, const NoiseSchedule& sched) {
  const PoseVec15 mean = posterior_mean(x_t, eps_hat, t, sched);
  if (t == 1) return mean;
  return mean + std::sqrt(posterior_variance(t, sched)) * noise;
}

PoseVec15 ddim_step(const PoseVec15& x_tau, const PoseVec15& eps_hat, int i,
                    const PoseVec15& noise, const DdimPlan& plan, const NoiseSchedule& sched) {
  if (i < 1 || i > plan.steps())
    fail(ErrorKind::Index, "plan index " + std::to_string(i) + " out of range");
  const int tau = plan.tau(i);
  const double ab = sched.alpha_bar_at(tau);
  const double ab_prev = sched.alpha_bar_at(plan.prev_tau(i));
  const double sigma = plan.sigma(i);
  const PoseVec15 x0_hat = predict_x0(x_tau, eps_hat, tau, sched);
  double dir_var = 1.0 - ab_prev - sigma * sigma;
  if (dir_var < 0.0) {
    spdlog::warn("ddim_step: negative direction variance {} at tau {}, clamped to 0", dir_var, tau);
    dir_var = 0.0;
  }
  const PoseVec15 eps_dir = (x_tau - std::sqrt(ab) * x0_hat) / std::sqrt(1.0 - ab);
  PoseVec15 out = std::sqrt(ab_prev) * x0_hat + std::sqrt(dir_var) * eps_dir;
  if (i > 1) out += sigma * noise;
  return out;
}

PoseVec15 standard_normal_vec15(std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  PoseVec15 v;
  for (int k = 0; k < 15; ++k) v(k) = nd(rng);
  return v;
}

}  // namespace posediff
