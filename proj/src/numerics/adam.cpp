#include "acbvae/numerics/adam.hpp"

#include <cmath>

namespace acbvae {

template <typename T>
void adam_step(ParamSet<T>& params, const Gradients<T>& grads, const AdamOptions& options) {
  if (!(options.lr > 0.0)) throw UsageError("adam_step: learning rate must be positive");
  for (const std::string& key : params.keys()) {
    auto it = grads.find(key);
    if (it == grads.end()) continue;
    if (it->second.shape() != params.parameter(key).shape()) {
      throw DimensionError("adam_step: gradient for '" + key + "' has shape " +
                           shape_string(it->second.shape()) + ", parameter has " +
                           shape_string(params.parameter(key).shape()));
    }
    if (!it->second.all_finite()) {
      throw TrainingError("adam_step: non-finite gradient for parameter '" + key + "'");
    }
  }

  for (const std::string& key : params.keys()) {
    Tensor<T>& p = params.parameter(key);
    AdamMoments<T>& state = params.adam[key];
    if (state.m.shape() != p.shape()) {
      state = AdamMoments<T>{Tensor<T>::zeros_like(p), Tensor<T>::zeros_like(p), 0};
    }
    auto it = grads.find(key);
    const Tensor<T>* g = it == grads.end() ? nullptr : &it->second;
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const T b1 = static_cast<T>(options.beta1);
    const T b2 = static_cast<T>(options.beta2);
    const T c1 = static_cast<T>(1.0 - std::pow(options.beta1, t));
    const T c2 = static_cast<T>(1.0 - std::pow(options.beta2, t));
    const T lr = static_cast<T>(options.lr);
    const T eps = static_cast<T>(options.eps);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const T gi = g ? (*g)[i] : T{0};
      state.m[i] = b1 * state.m[i] + (T{1} - b1) * gi;
      state.v[i] = b2 * state.v[i] + (T{1} - b2) * gi * gi;
      const T m_hat = state.m[i] / c1;
      const T v_hat = state.v[i] / c2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template void adam_step(ParamSet<float>&, const Gradients<float>&, const AdamOptions&);
template void adam_step(ParamSet<double>&, const Gradients<double>&, const AdamOptions&);

}  // namespace acbvae
