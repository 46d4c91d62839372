#pragma once

#include <functional>
#include <string>

#include "sptok/numerics/param_store.hpp"

namespace sptok {

// Evaluates the loss at `params`; when `grads` is non-null it must also
// fill analytic gradients for every trainable parameter.
using LossFn64 = std::function<double(const ParamStore64& params, GradMap<double>* grads)>;

struct GradCheckResult {
  double max_rel_error = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;
  std::size_t checked = 0;
};

// Central finite differences against the analytic gradient over every
// trainable scalar. Relative error uses max(|a|, |n|, 1e-12) as the
// denominator. Throws EmptyTrainableSet and NonDeterministicLoss.
GradCheckResult grad_check(const LossFn64& loss_fn, const ParamStore64& params, double eps = 1e-6);

}  // namespace sptok
