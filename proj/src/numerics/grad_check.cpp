#include "sptok/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace sptok {

GradCheckResult grad_check(const LossFn64& loss_fn, const ParamStore64& params, double eps) {
  require(params.trainable_count() > 0, ErrorCode::kEmptyTrainableSet, "no trainable parameters");
  require(eps > 0, ErrorCode::kInvalidArgument, "eps must be positive");

  GradMap<double> analytic = zero_grads(params);
  const double base = loss_fn(params, &analytic);
  const double again = loss_fn(params, nullptr);
  require(base == again, ErrorCode::kNonDeterministicLoss, "two evaluations at identical parameters differ");

  ParamStore64 probe = params;
  GradCheckResult result;
  for (const std::string& name : params.trainable_names()) {
    const auto it = analytic.find(name);
    require(it != analytic.end(), ErrorCode::kUnknownParameter, "loss_fn produced no gradient for " + name);
    auto& value = probe.mutable_value(name);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + eps;
      const double plus = loss_fn(probe, nullptr);
      value[i] = saved - eps;
      const double minus = loss_fn(probe, nullptr);
      value[i] = saved;

      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = it->second[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
      const double rel = std::abs(a - numeric) / denom;
      ++result.checked;
      if (rel > result.max_rel_error || result.worst_param.empty()) {
        result.max_rel_error = std::max(result.max_rel_error, rel);
        if (rel >= result.max_rel_error) {
          result.worst_param = name;
          result.worst_index = i;
          result.worst_analytic = a;
          result.worst_numeric = numeric;
        }
      }
    }
  }
  return result;
}

}  // namespace sptok
