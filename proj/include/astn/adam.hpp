#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "astn/tensor.hpp"

namespace astn::ag {

// Adam with bias correction. One state per disjoint parameter partition;
// moments are keyed by position in the parameter list given at construction.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, T lr = T(0.001), T beta1 = T(0.9), T beta2 = T(0.999),
       T epsilon = T(1e-8))
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].numel(), T(0));
      v_[i].assign(params_[i].numel(), T(0));
    }
  }

  // Consumes params[i].grad(); does not zero it.
  void step() {
    ++step_count_;
    const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(step_count_));
    const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(step_count_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i].value();
      const auto& g = params_[i].grad();
      if (g.size() != p.size()) throw std::invalid_argument("adam: grad/param shape mismatch");
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        m[j] = beta1_ * m[j] + (T(1) - beta1_) * g[j];
        v[j] = beta2_ * v[j] + (T(1) - beta2_) * g[j] * g[j];
        const T mhat = m[j] / bc1;
        const T vhat = v[j] / bc2;
        p[j] -= lr_ * mhat / (std::sqrt(vhat) + epsilon_);
      }
    }
  }

  std::uint64_t step_count() const { return step_count_; }
  T lr() const { return lr_; }
  void set_lr(T lr) { lr_ = lr; }

  // moment access for checkpoint/resume
  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  void set_step_count(std::uint64_t c) { step_count_ = c; }

 private:
  std::vector<Tensor<T>> params_;
  T lr_, beta1_, beta2_, epsilon_;
  std::uint64_t step_count_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

}  // namespace astn::ag
