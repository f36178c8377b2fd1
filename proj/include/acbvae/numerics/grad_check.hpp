#ifndef ACBVAE_NUMERICS_GRAD_CHECK_HPP_
#define ACBVAE_NUMERICS_GRAD_CHECK_HPP_

#include <functional>
#include <span>
#include <vector>

#include "acbvae/numerics/mlp.hpp"

namespace acbvae {

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central-difference gradient of f at `point`.
std::vector<double> central_difference(const ScalarFunction& f, std::span<const double> point,
                                       double eps);

/// max_i |analytic_i - fd_i| / max(1, |analytic_i|) with fd the central
/// difference at step eps. eps must lie in [1e-6, 1e-2].
double grad_check(const ScalarFunction& f, std::span<const double> point,
                  std::span<const double> analytic, double eps);

/// Builds a loss on a fresh tape from the current parameter values.
using LossBuilder = std::function<Var<double>(Tape<double>&)>;

/// Gradient check of every coordinate of the named parameters against the
/// tape's backward pass. `params` are perturbed in place and restored.
double grad_check_parameters(const LossBuilder& build, std::span<Tensor<double>* const> params,
                             std::span<const std::string> names, double eps);

}  // namespace acbvae

#endif  // ACBVAE_NUMERICS_GRAD_CHECK_HPP_
