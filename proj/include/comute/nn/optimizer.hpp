#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "comute/nn/layers.hpp"

namespace comute::nn {

enum class OptimizerKind { kAdam, kSgd };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(const std::string& text);

/// Adam keeps its first and second moment estimates in double precision
/// regardless of the parameter scalar.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<Eigen::VectorXd> first_moment;
  std::vector<Eigen::VectorXd> second_moment;
};

/// One update of every parameter from its gradient buffer.
///   SGD:  theta -= lr * g
///   Adam: m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2;
///         theta -= lr * m_hat / (sqrt(v_hat) + eps)
template <typename Scalar>
void optimizer_step(OptimizerState& state, std::span<const ParamRef<Scalar>> params) {
  if (!(state.learning_rate > 0)) throw std::invalid_argument("learning rate must be > 0");
  for (const auto& p : params) {
    if (p.value.size() != p.grad.size()) throw ShapeMismatch("gradient size differs from parameter");
  }
  ++state.step;
  if (state.kind == OptimizerKind::kSgd) {
    for (const auto& p : params) {
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        p.value[i] = Scalar(double(p.value[i]) - state.learning_rate * double(p.grad[i]));
      }
    }
    return;
  }

  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.value.size())));
      state.second_moment.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.value.size())));
    }
  }
  if (state.first_moment.size() != params.size()) throw ShapeMismatch("moment count mismatch");

  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(state.beta1, t);
  const double correct2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t j = 0; j < params.size(); ++j) {
    const auto& p = params[j];
    auto& m = state.first_moment[j];
    auto& v = state.second_moment[j];
    if (static_cast<std::size_t>(m.size()) != p.value.size()) {
      throw ShapeMismatch("moment shape differs from parameter " + p.name);
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = static_cast<double>(p.grad[i]);
      const auto ii = static_cast<Eigen::Index>(i);
      m[ii] = state.beta1 * m[ii] + (1.0 - state.beta1) * g;
      v[ii] = state.beta2 * v[ii] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[ii] / correct1;
      const double v_hat = v[ii] / correct2;
      p.value[i] = Scalar(double(p.value[i]) -
                          state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon));
    }
  }
}

template <typename Scalar>
void optimizer_step(OptimizerState& state, const std::vector<ParamRef<Scalar>>& params) {
  optimizer_step(state, std::span<const ParamRef<Scalar>>(params));
}

}  // namespace comute::nn
