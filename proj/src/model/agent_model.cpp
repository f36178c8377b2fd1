#include "acbvae/model/agent_model.hpp"

#include <algorithm>
#include <cmath>

namespace acbvae {

namespace {

template <typename T>
std::vector<Activation> hidden_relu(const ParamSet<T>& set, Activation last) {
  std::vector<Activation> acts(set.layers.size(), Activation::kRelu);
  acts.back() = last;
  return acts;
}

std::vector<std::size_t> widths(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

template <typename T>
std::vector<float> to_float(const Tensor<T>& t, std::size_t row) {
  auto r = t.row(row);
  return std::vector<float>(r.begin(), r.end());
}

}  // namespace

void ModelConfig::validate() const {
  if (latent_dim == 0) throw UsageError("latent_dim must be positive");
  if (action_dims >= latent_dim) {
    throw UsageError("action_dims (" + std::to_string(action_dims) + ") must be smaller than latent_dim (" +
                     std::to_string(latent_dim) + ")");
  }
  if (image_pixels == 0 || num_actions == 0 || head_hidden == 0) {
    throw UsageError("model widths must be positive");
  }
  if (!(logvar_min < logvar_max)) throw UsageError("logvar clamp range is empty");
}

std::vector<float> LatentStats::h() const {
  std::vector<float> out(mu);
  out.insert(out.end(), logvar.begin(), logvar.end());
  return out;
}

std::vector<float> LatentStats::sigma() const {
  std::vector<float> out(logvar.size());
  for (std::size_t i = 0; i < logvar.size(); ++i) out[i] = std::exp(0.5f * logvar[i]);
  return out;
}

template <typename T>
AgentModel<T> AgentModel<T>::create(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  AgentModel<T> m;
  m.config = config;
  const std::size_t n = config.latent_dim;
  const std::vector<std::size_t> head{config.head_hidden};
  auto enc = widths(config.image_pixels, config.encoder_hidden, 2 * n);
  auto dec = widths(n, config.decoder_hidden, config.image_pixels);
  auto pol = widths(2 * n, head, config.num_actions);
  auto val = widths(2 * n, head, 1);
  m.encoder = make_mlp<T>("encoder", enc, rng);
  m.decoder = make_mlp<T>("decoder", dec, rng);
  m.policy = make_mlp<T>("policy", pol, rng);
  m.value_head = make_mlp<T>("value", val, rng);
  return m;
}

template <typename T>
typename AgentModel<T>::Latent AgentModel<T>::encode(Var<T> obs) const {
  const std::size_t n = config.latent_dim;
  const auto acts = hidden_relu(encoder, Activation::kIdentity);
  Var<T> raw = forward_mlp(encoder, obs, acts);
  Var<T> mu = ag::slice_cols(raw, 0, n);
  Var<T> logvar = ag::clamp(ag::slice_cols(raw, n, 2 * n), static_cast<T>(config.logvar_min),
                            static_cast<T>(config.logvar_max));
  return {mu, logvar, ag::concat_cols(mu, logvar)};
}

template <typename T>
Var<T> AgentModel<T>::decode_logits(Var<T> z_plus) const {
  return forward_mlp(decoder, z_plus, hidden_relu(decoder, Activation::kIdentity));
}

template <typename T>
Var<T> AgentModel<T>::policy_logits(Var<T> h) const {
  return forward_mlp(policy, h, hidden_relu(policy, Activation::kIdentity));
}

template <typename T>
Var<T> AgentModel<T>::value(Var<T> h) const {
  return forward_mlp(value_head, ag::stop_gradient(h), hidden_relu(value_head, Activation::kIdentity));
}

template <typename T>
LatentStats AgentModel<T>::encode(const Observation& obs) const {
  const Observation* ptr = &obs;
  return encode_batch(std::span<const Observation* const>(&ptr, 1)).front();
}

template <typename T>
std::vector<LatentStats> AgentModel<T>::encode_batch(std::span<const Observation* const> obs) const {
  if (obs.empty()) return {};
  Tensor<T> input({obs.size(), config.image_pixels});
  for (std::size_t r = 0; r < obs.size(); ++r) {
    if (obs[r]->pixels.size() != config.image_pixels) {
      throw DimensionError("encode: observation has " + std::to_string(obs[r]->pixels.size()) +
                           " pixels, model expects " + std::to_string(config.image_pixels));
    }
    std::copy(obs[r]->pixels.begin(), obs[r]->pixels.end(), input.row(r).begin());
  }
  Tape<T> tape(GradMode::kDisabled);
  Latent lat = encode(tape.constant(std::move(input)));
  std::vector<LatentStats> out(obs.size());
  for (std::size_t r = 0; r < obs.size(); ++r) {
    out[r].mu = to_float(lat.mu.value(), r);
    out[r].logvar = to_float(lat.logvar.value(), r);
  }
  return out;
}

template <typename T>
std::vector<float> AgentModel<T>::decode(std::span<const float> z_plus) const {
  if (z_plus.size() != config.latent_dim) {
    throw DimensionError("decode: expected latent of length " + std::to_string(config.latent_dim) +
                         ", got " + std::to_string(z_plus.size()));
  }
  Tape<T> tape(GradMode::kDisabled);
  Var<T> z = tape.constant(Tensor<T>({1, z_plus.size()}, std::vector<T>(z_plus.begin(), z_plus.end())));
  Var<T> probs = ag::sigmoid(decode_logits(z));
  return to_float(probs.value(), 0);
}

template <typename T>
std::vector<float> AgentModel<T>::policy_probs(std::span<const float> h) const {
  if (h.size() != 2 * config.latent_dim) {
    throw DimensionError("policy: expected h of length " + std::to_string(2 * config.latent_dim) +
                         ", got " + std::to_string(h.size()));
  }
  Tape<T> tape(GradMode::kDisabled);
  Var<T> hv = tape.constant(Tensor<T>({1, h.size()}, std::vector<T>(h.begin(), h.end())));
  return to_float(ag::softmax(policy_logits(hv)).value(), 0);
}

template <typename T>
float AgentModel<T>::value(std::span<const float> h) const {
  if (h.size() != 2 * config.latent_dim) {
    throw DimensionError("value: expected h of length " + std::to_string(2 * config.latent_dim) +
                         ", got " + std::to_string(h.size()));
  }
  Tape<T> tape(GradMode::kDisabled);
  Var<T> hv = tape.constant(Tensor<T>({1, h.size()}, std::vector<T>(h.begin(), h.end())));
  return static_cast<float>(value(hv).value()[0]);
}

template <typename T>
template <typename U>
AgentModel<U> AgentModel<T>::cast() const {
  AgentModel<U> out;
  out.config = config;
  out.encoder = encoder.template cast<U>();
  out.decoder = decoder.template cast<U>();
  out.policy = policy.template cast<U>();
  out.value_head = value_head.template cast<U>();
  return out;
}

std::vector<float> reparameterize(const LatentStats& stats, Rng& rng) {
  std::vector<float> z(stats.mu.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const float eps = static_cast<float>(rng.normal());
    z[i] = stats.mu[i] + std::exp(0.5f * stats.logvar[i]) * eps;
  }
  return z;
}

template <typename T>
Var<T> reparameterize(Var<T> mu, Var<T> logvar, const Tensor<T>& noise) {
  Tape<T>& tape = *mu.tape;
  Var<T> sigma = ag::exp(ag::scale(logvar, T{0.5}));
  return ag::add(mu, ag::mul(sigma, tape.constant(noise)));
}

std::vector<float> make_action_map(std::span<const float> action, std::size_t n) {
  if (action.size() > n) {
    throw DimensionError("action map: action of length " + std::to_string(action.size()) +
                         " does not fit latent length " + std::to_string(n));
  }
  std::vector<float> out(n, 0.0f);
  std::copy(action.begin(), action.end(), out.begin());
  return out;
}

template class AgentModel<float>;
template class AgentModel<double>;
template AgentModel<double> AgentModel<float>::cast<double>() const;
template AgentModel<float> AgentModel<double>::cast<float>() const;
template Var<float> reparameterize(Var<float>, Var<float>, const Tensor<float>&);
template Var<double> reparameterize(Var<double>, Var<double>, const Tensor<double>&);

}  // namespace acbvae
