#ifndef ACBVAE_NUMERICS_ADAM_HPP_
#define ACBVAE_NUMERICS_ADAM_HPP_

#include "acbvae/numerics/mlp.hpp"

namespace acbvae {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update of every parameter in `params`.
/// Parameters without an entry in `grads` are treated as having zero
/// gradient. Throws TrainingError naming the parameter on a non-finite
/// gradient; no parameter is modified in that case.
template <typename T>
void adam_step(ParamSet<T>& params, const Gradients<T>& grads, const AdamOptions& options);

}  // namespace acbvae

#endif  // ACBVAE_NUMERICS_ADAM_HPP_
