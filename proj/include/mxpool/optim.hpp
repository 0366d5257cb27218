#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mxpool/tensor.hpp"

namespace mxpool {

// Trainable tensor plus its Adam state.
struct Parameter {
  std::string name;
  Tensor tensor;
  Matrix adam_m;
  Matrix adam_v;
  long step_count = 0;

  Parameter() = default;
  Parameter(std::string n, Matrix init)
      : name(std::move(n)),
        tensor(Tensor::variable(std::move(init))),
        adam_m(Matrix::Zero(tensor.rows(), tensor.cols())),
        adam_v(Matrix::Zero(tensor.rows(), tensor.cols())) {}
};

inline void zero_grads(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) p->tensor.zero_grad();
}

// Standard Adam with bias correction (Kingma & Ba defaults are the caller's
// responsibility; only the learning rate is dataset-dependent here).
inline void adam_step(const std::vector<Parameter*>& params, double lr, double beta1 = 0.9,
                      double beta2 = 0.999, double eps = 1e-8) {
  for (Parameter* p : params) {
    const Matrix& g = p->tensor.grad();
    p->step_count += 1;
    p->adam_m = beta1 * p->adam_m + (1.0 - beta1) * g;
    p->adam_v = beta2 * p->adam_v + (1.0 - beta2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(p->step_count));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(p->step_count));
    const Matrix mhat = p->adam_m / c1;
    const Matrix vhat = p->adam_v / c2;
    p->tensor.mutable_value() -=
        lr * mhat.cwiseQuotient(vhat.cwiseSqrt() + Matrix::Constant(g.rows(), g.cols(), eps));
  }
}

// Central-difference check of the reverse-mode gradients. `forward` must
// rebuild the loss tensor from the current parameter values on every call.
// Returns the max relative error over the sampled coordinates.
//
// Large tensors are sampled at the coordinates with the largest analytic
// gradients. Coordinates whose true gradient sits below the central-difference
// noise floor (one ulp of the loss over 2h) carry no information about the
// reverse-mode sweep, so sampling them only measures the oracle's roundoff.
inline double gradient_check(const std::function<Tensor()>& forward,
                             const std::vector<Parameter*>& params, double h = 1e-5,
                             int min_coords_per_tensor = 20) {
  Tensor loss = forward();
  {
    Tensor again = forward();
    if (loss.value() != again.value()) {
      throw ContractError("gradient_check: forward closure is not deterministic");
    }
  }
  zero_grads(params);
  loss.backward();

  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->tensor.grad());

  // Resolution of the central-difference oracle itself: rounding error of the
  // two loss evaluations propagated through the divided difference. Analytic
  // and measured gradients that agree within this cannot be told apart by the
  // oracle; any dropped or wrong dependency shows up far above it.
  const double fd_noise = 16.0 * std::numeric_limits<double>::epsilon() *
                          std::max(1.0, std::abs(loss.value()(0, 0))) / (2.0 * h);

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Matrix& w = params[pi]->tensor.mutable_value();
    const Eigen::Index total = w.size();
    std::vector<Eigen::Index> coords(static_cast<std::size_t>(total));
    for (Eigen::Index k = 0; k < total; ++k) coords[k] = k;
    if (total > min_coords_per_tensor) {
      std::stable_sort(coords.begin(), coords.end(), [&](Eigen::Index a, Eigen::Index b) {
        return std::abs(analytic[pi](a)) > std::abs(analytic[pi](b));
      });
      coords.resize(min_coords_per_tensor);
    }
    for (Eigen::Index k : coords) {
      const double saved = w(k);
      w(k) = saved + h;
      const double up = forward().value()(0, 0);
      w(k) = saved - h;
      const double dn = forward().value()(0, 0);
      w(k) = saved;
      const double fd = (up - dn) / (2.0 * h);
      const double ad = analytic[pi](k);
      if (std::abs(ad - fd) <= fd_noise) continue;
      const double rel = std::abs(ad - fd) / std::max(1e-8, std::abs(ad) + std::abs(fd));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace mxpool
