#pragma once

#include "sptok/numerics/param_store.hpp"

namespace sptok {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// One bias-corrected AdamW step with decoupled weight decay:
//   w <- w * (1 - lr * wd)
//   w <- w - lr * m_hat / (sqrt(v_hat) + eps)
// Only parameters present in `grads` move. A gradient for a frozen
// parameter is an error, as is a gradient whose shape differs.
template <typename T>
void adamw_step(BasicParamStore<T>& params, const GradMap<T>& grads, const AdamWConfig& config);

}  // namespace sptok
