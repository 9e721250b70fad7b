#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "driftmeta/autodiff.hpp"

namespace driftmeta {

// Named view of one parameter matrix owned by a model struct.
struct ParamRef {
  std::string name;
  Matrix* value = nullptr;
};

// One plain gradient step: theta -= lr * grad. Used for the inner adaptation
// update, which stays a pure single gradient step (no momentum state).
void sgd_step(const std::vector<ParamRef>& params,
              const std::vector<const Matrix*>& grads, double lr);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment buffers are created on first step and
// always match the parameter shapes.
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void step(const std::vector<ParamRef>& params,
            const std::vector<const Matrix*>& grads);

  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  int64_t steps_taken() const { return t_; }

  // Exposed for checkpointing.
  std::vector<Matrix>& moments_m() { return m_; }
  std::vector<Matrix>& moments_v() { return v_; }
  const std::vector<Matrix>& moments_m() const { return m_; }
  const std::vector<Matrix>& moments_v() const { return v_; }
  void set_steps_taken(int64_t t) { t_ = t; }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

}  // namespace driftmeta
