#pragma once

#include <vector>

#include "fsmix/autodiff.hpp"
#include "fsmix/common.hpp"

namespace fsmix {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moments are exposed for bit-exact checkpointing.
class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  AdamOptimizer(std::vector<ad::Var> params, AdamConfig cfg)
      : params_(std::move(params)), cfg_(cfg) {
    for (auto& p : params_) {
      m_.push_back(Tensor::zeros(p.val().shape()));
      v_.push_back(Tensor::zeros(p.val().shape()));
    }
  }

  void step(const std::vector<ad::Var>& grads) {
    if (grads.size() != params_.size())
      throw InvalidArgumentError("AdamOptimizer: gradient count mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      Tensor& p = params_[i].mutable_val();
      const Tensor& g = grads[i].val();
      Tensor& m = m_[i];
      Tensor& v = v_[i];
      for (int64_t j = 0; j < p.numel(); ++j) {
        m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
        v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
        const double mhat = m[j] / c1;
        const double vhat = v[j] / c2;
        p[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  int64_t iterations() const { return t_; }
  void set_iterations(int64_t t) { t_ = t; }
  std::vector<Tensor>& moments1() { return m_; }
  std::vector<Tensor>& moments2() { return v_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<ad::Var> params_;
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  int64_t t_ = 0;
};

}  // namespace fsmix
