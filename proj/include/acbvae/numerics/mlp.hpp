#ifndef ACBVAE_NUMERICS_MLP_HPP_
#define ACBVAE_NUMERICS_MLP_HPP_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "acbvae/numerics/autograd.hpp"
#include "acbvae/numerics/rng.hpp"

namespace acbvae {

template <typename T>
struct DenseLayer {
  std::string name;
  Tensor<T> weight;  // [out x in]
  Tensor<T> bias;    // [out]

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }
};

template <typename T>
struct AdamMoments {
  Tensor<T> m;
  Tensor<T> v;
  std::int64_t step_count = 0;
};

// Named dense layers plus per-parameter Adam state. Parameter keys are
// "<prefix>.<layer>.weight" and "<prefix>.<layer>.bias".
template <typename T>
struct ParamSet {
  std::string prefix;
  std::vector<DenseLayer<T>> layers;
  std::map<std::string, AdamMoments<T>> adam;

  static std::string weight_key(const std::string& prefix, const DenseLayer<T>& l) {
    return prefix + "." + l.name + ".weight";
  }
  static std::string bias_key(const std::string& prefix, const DenseLayer<T>& l) {
    return prefix + "." + l.name + ".bias";
  }

  /// Every parameter key in layer order (weight before bias).
  std::vector<std::string> keys() const;
  Tensor<T>& parameter(const std::string& key);
  const Tensor<T>& parameter(const std::string& key) const;
  std::size_t parameter_count() const;

  template <typename U>
  ParamSet<U> cast() const;

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    if (a.prefix != b.prefix || a.layers.size() != b.layers.size() || a.adam.size() != b.adam.size()) {
      return false;
    }
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
      const auto& la = a.layers[i];
      const auto& lb = b.layers[i];
      if (la.name != lb.name || !(la.weight == lb.weight) || !(la.bias == lb.bias)) return false;
    }
    for (const auto& [k, ma] : a.adam) {
      auto it = b.adam.find(k);
      if (it == b.adam.end()) return false;
      if (!(ma.m == it->second.m) || !(ma.v == it->second.v) || ma.step_count != it->second.step_count) {
        return false;
      }
    }
    return true;
  }
};

/// Layers of the given widths with uniform(+-sqrt(6 / (fan_in + fan_out)))
/// weights, zero biases and fresh Adam state. Layer names are fc0, fc1, ...
template <typename T>
ParamSet<T> make_mlp(const std::string& prefix, std::span<const std::size_t> widths, Rng& rng);

/// Applies each layer and its activation tag. The input width must equal the
/// first layer's in-dimension.
template <typename T>
Var<T> forward_mlp(const ParamSet<T>& params, Var<T> input, std::span<const Activation> activations);

}  // namespace acbvae

#endif  // ACBVAE_NUMERICS_MLP_HPP_
