#include "acbvae/numerics/mlp.hpp"

#include <cmath>

namespace acbvae {

template <typename T>
std::vector<std::string> ParamSet<T>::keys() const {
  std::vector<std::string> out;
  for (const auto& l : layers) {
    out.push_back(weight_key(prefix, l));
    out.push_back(bias_key(prefix, l));
  }
  return out;
}

template <typename T>
Tensor<T>& ParamSet<T>::parameter(const std::string& key) {
  for (auto& l : layers) {
    if (weight_key(prefix, l) == key) return l.weight;
    if (bias_key(prefix, l) == key) return l.bias;
  }
  throw UsageError("unknown parameter '" + key + "'");
}

template <typename T>
const Tensor<T>& ParamSet<T>::parameter(const std::string& key) const {
  return const_cast<ParamSet*>(this)->parameter(key);
}

template <typename T>
std::size_t ParamSet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

template <typename T>
template <typename U>
ParamSet<U> ParamSet<T>::cast() const {
  ParamSet<U> out;
  out.prefix = prefix;
  for (const auto& l : layers) {
    out.layers.push_back({l.name, l.weight.template cast<U>(), l.bias.template cast<U>()});
  }
  for (const auto& [k, s] : adam) {
    out.adam[k] = AdamMoments<U>{s.m.template cast<U>(), s.v.template cast<U>(), s.step_count};
  }
  return out;
}

template <typename T>
ParamSet<T> make_mlp(const std::string& prefix, std::span<const std::size_t> widths, Rng& rng) {
  if (widths.size() < 2) throw UsageError("make_mlp: need at least input and output widths");
  ParamSet<T> set;
  set.prefix = prefix;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::size_t in = widths[i], out = widths[i + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    DenseLayer<T> layer{"fc" + std::to_string(i), Tensor<T>({out, in}), Tensor<T>({out})};
    for (T& w : layer.weight.data()) w = static_cast<T>(rng.uniform(-limit, limit));
    set.layers.push_back(std::move(layer));
  }
  for (const auto& l : set.layers) {
    set.adam[ParamSet<T>::weight_key(prefix, l)] =
        AdamMoments<T>{Tensor<T>::zeros_like(l.weight), Tensor<T>::zeros_like(l.weight), 0};
    set.adam[ParamSet<T>::bias_key(prefix, l)] =
        AdamMoments<T>{Tensor<T>::zeros_like(l.bias), Tensor<T>::zeros_like(l.bias), 0};
  }
  return set;
}

template <typename T>
Var<T> forward_mlp(const ParamSet<T>& params, Var<T> input, std::span<const Activation> activations) {
  if (activations.size() != params.layers.size()) {
    throw UsageError("forward_mlp: " + std::to_string(activations.size()) + " activation tags for " +
                     std::to_string(params.layers.size()) + " layers");
  }
  if (!input.traced()) throw UsageError("forward_mlp: input is untraced");
  Tape<T>& tape = *input.tape;
  Var<T> x = input;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    const std::string wkey = ParamSet<T>::weight_key(params.prefix, l);
    if (x.value().cols() != l.in_dim()) {
      throw DimensionError("layer '" + wkey.substr(0, wkey.size() - 7) + "': expected input " +
                           "width " + std::to_string(l.in_dim()) + ", got shape " +
                           shape_string(x.shape()));
    }
    Var<T> w = tape.parameter(wkey, l.weight);
    Var<T> b = tape.parameter(ParamSet<T>::bias_key(params.prefix, l), l.bias);
    x = ag::activate(ag::linear(x, w, b, params.prefix + "." + l.name), activations[i]);
  }
  return x;
}

template struct ParamSet<float>;
template struct ParamSet<double>;
template ParamSet<double> ParamSet<float>::cast<double>() const;
template ParamSet<float> ParamSet<double>::cast<float>() const;
template ParamSet<float> ParamSet<float>::cast<float>() const;
template ParamSet<float> make_mlp<float>(const std::string&, std::span<const std::size_t>, Rng&);
template ParamSet<double> make_mlp<double>(const std::string&, std::span<const std::size_t>, Rng&);
template Var<float> forward_mlp(const ParamSet<float>&, Var<float>, std::span<const Activation>);
template Var<double> forward_mlp(const ParamSet<double>&, Var<double>, std::span<const Activation>);

}  // namespace acbvae
