#include "rap/optimizer.hpp"

#include <cmath>

#include "rap/error.hpp"

namespace rap {

AdamW::AdamW(const ParameterSet& params, AdamWConfig cfg) : cfg_(cfg) {
  for (const auto& p : params.values()) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void AdamW::step(ParameterSet& params, const ParameterSet& bound, double lr) {
  if (params.size() != m_.size() || bound.size() != m_.size()) {
    throw DimensionError("AdamW: parameter set does not match optimizer state");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < m_.size(); ++i) {
    auto p = params.values()[i].mutable_values();
    const auto g = bound.values()[i].grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g.empty() ? 0.0 : g[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
      const double update = (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.eps);
      p[j] -= lr * (update + cfg_.weight_decay * p[j]);
    }
  }
}

double WarmupSchedule::lr(std::size_t step) const {
  if (warmup_steps == 0 || step >= warmup_steps) return peak_lr;
  const double frac = static_cast<double>(step) / static_cast<double>(warmup_steps);
  return initial_lr + (peak_lr - initial_lr) * frac;
}

}  // namespace rap
