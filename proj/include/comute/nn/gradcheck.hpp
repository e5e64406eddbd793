#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>

#include <Eigen/Core>

#include "comute/nn/network.hpp"

namespace comute::nn {

struct GradCheckReport {
  double max_relative_error = 0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  bool passed = false;
};

/// Central differences (J(theta+h) - J(theta-h)) / 2h for every entry of
/// `params`, where `loss` re-evaluates J with the current parameter values.
template <typename LossFn>
Eigen::VectorXd numeric_gradient(LossFn&& loss, std::span<double> params, double h) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = loss();
    params[i] = saved - h;
    const double down = loss();
    params[i] = saved;
    out[static_cast<Eigen::Index>(i)] = (up - down) / (2.0 * h);
  }
  return out;
}

/// |a - n| / max(|a|, |n|, floor); the floor keeps entries whose true
/// gradient is zero from dividing roundoff by roundoff.
inline GradCheckReport compare_gradients(const Eigen::VectorXd& analytic,
                                         const Eigen::VectorXd& numeric, double tol,
                                         double floor = 1e-7) {
  if (analytic.size() != numeric.size()) throw ShapeMismatch("gradient vectors differ in length");
  GradCheckReport report;
  report.checked = static_cast<std::size_t>(analytic.size());
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    const double rel = std::abs(analytic[i] - numeric[i]) / denom;
    if (rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_index = static_cast<std::size_t>(i);
    }
  }
  report.passed = report.max_relative_error <= tol;
  return report;
}

/// Backpropagated gradient of the loss for (inputs, truth) with frozen
/// dropout masks, flattened in parameter order.
inline Eigen::VectorXd analytic_gradient(Network<double>& net, const Matrix<double>& inputs,
                                         const Matrix<double>& truth, std::uint64_t mask_seed) {
  net.forward(inputs, mask_seed);
  net.backward(truth);
  const auto g = net.get_gradients();
  return Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
}

inline Eigen::VectorXd network_numeric_gradient(Network<double>& net,
                                                const Matrix<double>& inputs,
                                                const Matrix<double>& truth, double h,
                                                std::uint64_t mask_seed) {
  auto flat = net.get_parameters();
  auto loss = [&] {
    net.set_parameters(flat);
    net.forward(inputs, mask_seed);
    return net.loss(truth);
  };
  auto grad = numeric_gradient(loss, std::span<double>(flat), h);
  net.set_parameters(flat);
  return grad;
}

inline GradCheckReport gradient_check(Network<double>& net, const Matrix<double>& inputs,
                                      const Matrix<double>& truth, double h, double tol,
                                      std::uint64_t mask_seed = 1) {
  const auto analytic = analytic_gradient(net, inputs, truth, mask_seed);
  const auto numeric = network_numeric_gradient(net, inputs, truth, h, mask_seed);
  return compare_gradients(analytic, numeric, tol);
}

}  // namespace comute::nn
