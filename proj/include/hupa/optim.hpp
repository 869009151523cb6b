#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "hupa/tensor.hpp"

namespace hupa::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam on one parameter block. `step` is the already
/// incremented step count (1 on the first update).
template <class T>
void adam_update(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v, long step,
                 const AdamConfig& cfg) {
  if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size())
    throw std::invalid_argument("adam: moment/gradient sizes do not match parameters");
  if (step < 1) throw std::invalid_argument("adam: step must be >= 1");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T step_size = static_cast<T>(cfg.lr / c1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
  const T eps = static_cast<T>(cfg.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = grads[i];
    m[i] = b1 * m[i] + (T(1) - b1) * g;
    v[i] = b2 * v[i] + (T(1) - b2) * g * g;
    params[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_c2 + eps);
  }
}

/// Optimizer state for a whole ParamSet: first/second moments per parameter.
template <class T>
class Adam {
 public:
  explicit Adam(const ParamSet<T>& ps, AdamConfig cfg = {}) : cfg_(cfg) {
    for (const auto& p : ps) {
      m_.emplace_back(p.value.shape());
      v_.emplace_back(p.value.shape());
    }
  }

  void step(ParamSet<T>& ps) {
    if (ps.count() != static_cast<int>(m_.size())) throw std::invalid_argument("adam: parameter set changed");
    ++t_;
    for (int i = 0; i < ps.count(); ++i)
      adam_update<T>(ps[i].value.span(), ps[i].grad.span(), m_[static_cast<std::size_t>(i)].span(),
                     v_[static_cast<std::size_t>(i)].span(), t_, cfg_);
  }

  long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<Tensor<T>> m_, v_;
  long t_ = 0;
};

}  // namespace hupa::nn
