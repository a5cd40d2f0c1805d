#pragma once

#include <cmath>
#include <vector>

#include "degflow/tape.hpp"

namespace degflow {

// Per-parameter Adam state. Moment buffers always match the parameter shape.
template <typename T>
struct AdamState {
  std::vector<T> first_moment;
  std::vector<T> second_moment;
};

// Standard Adam with bias correction.
template <typename T>
class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::vector<Param<T>*> params, T learning_rate, T beta1 = T(0.9),
                         T beta2 = T(0.999), T epsilon = T(1e-8))
      : params_(std::move(params)),
        lr_(learning_rate),
        beta1_(beta1),
        beta2_(beta2),
        eps_(epsilon) {
    slots_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      slots_[i].first_moment.assign(params_[i]->value.data.size(), T(0));
      slots_[i].second_moment.assign(params_[i]->value.data.size(), T(0));
    }
  }

  // Applies one update from the gradients accumulated in each param, then
  // clears them. Errors (naming the parameter) on non-finite gradients.
  void step() {
    ++step_count_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(beta1_), step_count_);
    const double bc2 = 1.0 - std::pow(static_cast<double>(beta2_), step_count_);
    for (size_t p = 0; p < params_.size(); ++p) {
      Param<T>& prm = *params_[p];
      auto& g = prm.grad_buf();
      auto& m = slots_[p].first_moment;
      auto& v = slots_[p].second_moment;
      for (size_t i = 0; i < g.size(); ++i) {
        if (!std::isfinite(static_cast<double>(g[i])))
          throw DivergenceError("adam: non-finite gradient in parameter '" + prm.name + "'");
        m[i] = beta1_ * m[i] + (T(1) - beta1_) * g[i];
        v[i] = beta2_ * v[i] + (T(1) - beta2_) * g[i] * g[i];
        const T mhat = static_cast<T>(m[i] / bc1);
        const T vhat = static_cast<T>(v[i] / bc2);
        prm.value.data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
      prm.zero_grad();
    }
  }

  int64_t step_count() const { return step_count_; }
  T learning_rate() const { return lr_; }

 private:
  std::vector<Param<T>*> params_;
  std::vector<AdamState<T>> slots_;
  int64_t step_count_ = 0;
  T lr_, beta1_, beta2_, eps_;
};

}  // namespace degflow
