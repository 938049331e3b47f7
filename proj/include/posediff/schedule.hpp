#pragma once

#include "posediff/errors.hpp"
#include "posediff/pose.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace posediff {

// Variance schedule over steps 1..T. Tables are stored 0-based: beta[t-1] is beta_t.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;

  double beta_at(int t) const { return beta[static_cast<std::size_t>(t - 1)]; }
  double alpha_at(int t) const { return alpha[static_cast<std::size_t>(t - 1)]; }
  // alpha_bar_0 is 1 by definition.
  double alpha_bar_at(int t) const {
    return t == 0 ? 1.0 : alpha_bar[static_cast<std::size_t>(t - 1)];
  }
  void check_step(int t) const;
};

NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end);

// Stable hex digest of the schedule tables, echoed into checkpoints.
std::string schedule_hash(const NoiseSchedule& sched);

// Subsampled reverse schedule. taus ascending; sigmas[i] pairs with taus[i].
struct DdimPlan {
  std::vector<int> taus;
  std::vector<double> sigmas;
  double eta = 1.0;

  int steps() const { return static_cast<int>(taus.size()); }
  // tau_{i-1} for 1-based plan index i; tau_0 is 0.
  int prev_tau(int i) const { return i == 1 ? 0 : taus[static_cast<std::size_t>(i - 2)]; }
  int tau(int i) const { return taus[static_cast<std::size_t>(i - 1)]; }
  double sigma(int i) const { return sigmas[static_cast<std::size_t>(i - 1)]; }
};

DdimPlan make_ddim_plan(const NoiseSchedule& sched, int S, double eta = 1.0);

PoseVec15 add_noise(const PoseVec15& x0, int t, const PoseVec15& eps, const NoiseSchedule& sched);
PoseVec15 single_step_noise(const PoseVec15& x_prev, int t, const PoseVec15& eps_t,
                            const NoiseSchedule& sched);
double posterior_variance(int t, const NoiseSchedule& sched);
PoseVec15 predict_x0(const PoseVec15& x_t, const PoseVec15& eps_hat, int t,
                     const NoiseSchedule& sched);
PoseVec15 posterior_mean(const PoseVec15& x_t, const PoseVec15& eps_hat, int t,
                         const NoiseSchedule& sched);
PoseVec15 ddpm_step(const PoseVec15& x_t, const PoseVec15& eps_hat, int t,
                    const PoseVec15& noise, const NoiseSchedule& sched);
// One reverse step from tau_i to tau_{i-1}; i is the 1-based plan index.
PoseVec15 ddim_step(const PoseVec15& x_tau, const PoseVec15& eps_hat, int i,
                    const PoseVec15& noise, const DdimPlan& plan, const NoiseSchedule& sched);

PoseVec15 standard_normal_vec15(std::mt19937_64& rng);

// Reverse diffusion from x ~ N(0, I) through the plan. `denoise(x, t, condition)`
// returns the predicted noise; it is called exactly plan.steps() times.
template <typename DenoiseFn, typename Condition>
PoseVec15 sample_loop(DenoiseFn&& denoise, const Condition& condition, const DdimPlan& plan,
                      const NoiseSchedule& sched, std::uint64_t rng_seed) {
  std::mt19937_64 rng(rng_seed);
  PoseVec15 x = standard_normal_vec15(rng);
  for (int i = plan.steps(); i >= 1; --i) {
    const PoseVec15 eps_hat = denoise(static_cast<const PoseVec15&>(x), plan.tau(i), condition);
    const PoseVec15 noise = i > 1 ? standard_normal_vec15(rng) : PoseVec15::Zero().eval();
    x = ddim_step(x, eps_hat, i, noise, plan, sched);
    if (!x.allFinite())
      fail(ErrorKind::Diverged, "sampler diverged at plan index " + std::to_string(i));
  }
  return x;
}

}  // namespace posediff
