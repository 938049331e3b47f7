#pragma once

#include "posediff/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

// Central finite differences along random directions in parameter space.
// `loss()` evaluates the scalar loss; `backprop()` fills the parameter gradients
// (it is called with gradients zeroed).
template <class Loss, class Backprop>
double worst_directional_error(const posediff::nn::ParamList& params, Loss loss, Backprop backprop,
                               int directions, std::mt19937_64& rng, double h = 1e-6) {
  using posediff::nn::Mat;
  posediff::nn::zero_grads(params);
  backprop();
  std::normal_distribution<double> n;
  double worst = 0.0;
  for (int d = 0; d < directions; ++d) {
    std::vector<Mat> dir;
    double analytic = 0.0;
    for (auto* p : params) {
      Mat D(p->value.rows(), p->value.cols());
      for (Eigen::Index i = 0; i < D.size(); ++i) D.data()[i] = n(rng);
      analytic += (p->grad.array() * D.array()).sum();
      dir.push_back(std::move(D));
    }
    for (std::size_t k = 0; k < params.size(); ++k) params[k]->value += h * dir[k];
    const double up = loss();
    for (std::size_t k = 0; k < params.size(); ++k) params[k]->value -= 2.0 * h * dir[k];
    const double down = loss();
    for (std::size_t k = 0; k < params.size(); ++k) params[k]->value += h * dir[k];
    const double fd = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(fd), std::abs(analytic), 1e-10});
    worst = std::max(worst, std::abs(fd - analytic) / scale);
  }
  return worst;
}

// Input-gradient check for a function of one matrix.
template <class Loss>
double worst_input_error(posediff::nn::Mat& x, const posediff::nn::Mat& analytic_grad, Loss loss,
                         int directions, std::mt19937_64& rng, double h = 1e-6) {
  using posediff::nn::Mat;
  std::normal_distribution<double> n;
  double worst = 0.0;
  for (int d = 0; d < directions; ++d) {
    Mat D(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < D.size(); ++i) D.data()[i] = n(rng);
    const double analytic = (analytic_grad.array() * D.array()).sum();
    x += h * D;
    const double up = loss();
    x -= 2.0 * h * D;
    const double down = loss();
    x += h * D;
    const double fd = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(fd), std::abs(analytic), 1e-10});
    worst = std::max(worst, std::abs(fd - analytic) / scale);
  }
  return worst;
}
