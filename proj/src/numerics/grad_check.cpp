#include "acbvae/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace acbvae {

std::vector<double> central_difference(const ScalarFunction& f, std::span<const double> point,
                                       double eps) {
  std::vector<double> x(point.begin(), point.end());
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double up = f(x);
    x[i] = saved - eps;
    const double down = f(x);
    x[i] = saved;
    out[i] = (up - down) / (2.0 * eps);
  }
  return out;
}

double grad_check(const ScalarFunction& f, std::span<const double> point,
                  std::span<const double> analytic, double eps) {
  if (eps < 1e-6 || eps > 1e-2) throw UsageError("grad_check: eps must lie in [1e-6, 1e-2]");
  if (analytic.size() != point.size()) {
    throw DimensionError("grad_check: analytic gradient has " + std::to_string(analytic.size()) +
                         " entries for a point of " + std::to_string(point.size()));
  }
  const std::vector<double> fd = central_difference(f, point, eps);
  double worst = 0.0;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    worst = std::max(worst, std::abs(analytic[i] - fd[i]) / std::max(1.0, std::abs(analytic[i])));
  }
  return worst;
}

double grad_check_parameters(const LossBuilder& build, std::span<Tensor<double>* const> params,
                             std::span<const std::string> names, double eps) {
  if (params.size() != names.size()) throw UsageError("grad_check_parameters: names/params mismatch");
  Gradients<double> analytic;
  {
    Tape<double> tape;
    analytic = tape.backward(build(tape));
  }
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor<double>& param = *params[p];
    auto it = analytic.find(names[p]);
    if (it == analytic.end()) throw UsageError("grad_check_parameters: no gradient for '" + names[p] + "'");
    std::vector<double> point(param.data().begin(), param.data().end());
    auto f = [&](std::span<const double> x) {
      std::copy(x.begin(), x.end(), param.data().begin());
      Tape<double> tape(GradMode::kDisabled);
      return build(tape).value()[0];
    };
    const double err = grad_check(f, point, it->second.data(), eps);
    std::copy(point.begin(), point.end(), param.data().begin());
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace acbvae
