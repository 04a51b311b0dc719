#pragma once

#include <cstddef>
#include <vector>

#include "rap/encoders.hpp"

namespace rap {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

/// Adam with decoupled weight decay: p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p).
class AdamW {
 public:
  AdamW() = default;
  AdamW(const ParameterSet& params, AdamWConfig cfg);

  /// Updates `params` in place from the gradients accumulated on `bound`
  /// (the taped copies of the same parameters).
  void step(ParameterSet& params, const ParameterSet& bound, double lr);

  std::size_t steps() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t t_ = 0;
};

/// Linear ramp from `initial_lr` to `peak_lr` over `warmup_steps`, then
/// constant at `peak_lr`.
struct WarmupSchedule {
  double initial_lr = 1e-6;
  double peak_lr = 3e-4;
  std::size_t warmup_steps = 0;

  double lr(std::size_t step) const;
};

}  // namespace rap
