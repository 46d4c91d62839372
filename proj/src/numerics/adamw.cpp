#include "sptok/numerics/adamw.hpp"

#include <cmath>

namespace sptok {

template <typename T>
void adamw_step(BasicParamStore<T>& params, const GradMap<T>& grads, const AdamWConfig& config) {
  require(config.lr >= 0 && config.beta1 >= 0 && config.beta1 < 1 && config.beta2 >= 0 && config.beta2 < 1 &&
              config.eps > 0 && config.weight_decay >= 0,
          ErrorCode::kInvalidArgument, "AdamW hyperparameters out of range");
  // Validate everything before mutating anything.
  for (const auto& [name, grad] : grads) {
    const auto& e = params.entry(name);
    require(e.trainable, ErrorCode::kFrozenParameter, "gradient supplied for frozen parameter " + name);
    require(grad.same_shape(e.value), ErrorCode::kShapeMismatch,
            name + ": gradient " + grad.shape_string() + " vs parameter " + e.value.shape_string());
  }

  for (const auto& [name, grad] : grads) {
    auto& e = params.entry(name);
    if (!e.adam) {
      e.adam = AdamState<T>{BasicTensor<T>(e.value.shape()), BasicTensor<T>(e.value.shape()), 0};
    }
    AdamState<T>& st = *e.adam;
    st.step += 1;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(st.step));
    const T b1 = static_cast<T>(config.beta1);
    const T b2 = static_cast<T>(config.beta2);
    const T decay = static_cast<T>(1.0 - config.lr * config.weight_decay);
    const T lr = static_cast<T>(config.lr);
    const T eps = static_cast<T>(config.eps);
    const T inv_bc1 = static_cast<T>(1.0 / bc1);
    const T inv_bc2 = static_cast<T>(1.0 / bc2);

    T* w = e.value.raw();
    T* m = st.first_moment.raw();
    T* v = st.second_moment.raw();
    const T* g = grad.raw();
    for (std::size_t i = 0; i < grad.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const T m_hat = m[i] * inv_bc1;
      const T v_hat = v[i] * inv_bc2;
      if (config.weight_decay != 0.0) w[i] *= decay;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
    debug_check_finite(e.value, name.c_str());
  }
}

template void adamw_step<float>(ParamStore&, const GradMap<float>&, const AdamWConfig&);
template void adamw_step<double>(ParamStore64&, const GradMap<double>&, const AdamWConfig&);

}  // namespace sptok
