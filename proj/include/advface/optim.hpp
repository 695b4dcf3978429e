#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "advface/tensor.hpp"

namespace advface {

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam over a fixed list of tensors.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // params[i] -= update(grads[i]). Moment buffers are created lazily to match
  // the parameter shapes on the first call.
  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
    if (m_.empty()) {
      for (const Tensor* p : params) {
        m_.push_back(Tensor::zeros_like(*p));
        v_.push_back(Tensor::zeros_like(*p));
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& p = *params[i];
      for (std::size_t k = 0; k < p.size(); ++k) {
        const double g = grads[i][k];
        m_[i][k] = config_.beta1 * m_[i][k] + (1.0 - config_.beta1) * g;
        v_[i][k] = config_.beta2 * v_[i][k] + (1.0 - config_.beta2) * g * g;
        p[k] -= config_.learning_rate * (m_[i][k] / c1) / (std::sqrt(v_[i][k] / c2) + config_.epsilon);
      }
    }
  }

  std::size_t iterations() const noexcept { return t_; }

 private:
  AdamConfig config_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace advface
