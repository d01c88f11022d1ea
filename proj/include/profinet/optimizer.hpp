#pragma once

#include "profinet/types.hpp"

#include <cmath>
#include <string>

namespace profinet {

enum class OptimizerKind { kAdam, kSgd };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& name);

/// First-order optimizer over a flat parameter vector. Adam keeps bias-
/// corrected moment estimates; SGD is the plain gradient step.
template <typename T>
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerKind kind, double learning_rate, Eigen::Index size)
      : kind_(kind), lr_(learning_rate) {
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
    if (kind == OptimizerKind::kAdam) {
      m_ = Vec<T>::Zero(size);
      v_ = Vec<T>::Zero(size);
    }
  }

  void step(Vec<T>& params, const Vec<T>& grad) {
    if (grad.size() != params.size()) throw ShapeError("optimizer: gradient and parameter sizes differ");
    ++steps_;
    if (kind_ == OptimizerKind::kSgd) {
      params -= T(lr_) * grad;
      return;
    }
    m_ = T(beta1) * m_ + T(1 - beta1) * grad;
    v_ = T(beta2) * v_ + T(1 - beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1, double(steps_));
    const double c2 = 1.0 - std::pow(beta2, double(steps_));
    const T step_size = T(lr_ / c1);
    const T inv_c2 = T(1.0 / c2);
    params.array() -= step_size * m_.array() / ((v_.array() * inv_c2).sqrt() + T(eps));
  }

  OptimizerKind kind() const { return kind_; }
  double learning_rate() const { return lr_; }
  long long steps() const { return steps_; }
  Vec<T>& first_moment() { return m_; }
  Vec<T>& second_moment() { return v_; }
  const Vec<T>& first_moment() const { return m_; }
  const Vec<T>& second_moment() const { return v_; }
  void set_steps(long long s) { steps_ = s; }

  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double eps = 1e-8;

 private:
  OptimizerKind kind_ = OptimizerKind::kAdam;
  double lr_ = 1e-4;
  long long steps_ = 0;
  Vec<T> m_, v_;
};

}  // namespace profinet
