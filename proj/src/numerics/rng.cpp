#include "acbvae/numerics/rng.hpp"

#include <cmath>
#include <numbers>

namespace acbvae {

namespace {

std::uint64_t finalize(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t Rng::next() {
  state_ += 0x9e3779b97f4a7c15ULL;
  return finalize(state_);
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint32_t Rng::below(std::uint32_t k) {
  return static_cast<std::uint32_t>(((next() >> 32) * static_cast<std::uint64_t>(k)) >> 32);
}

double Rng::normal() {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::categorical(std::span<const float> weights) {
  double total = 0.0;
  for (float w : weights) total += w;
  const double target = uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (target < acc) return i;
  }
  // Rounding left target at the top of the range; take the last non-zero.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0f) return i;
  }
  return weights.size() - 1;
}

Rng Rng::split() { return Rng(next() ^ 0x6a09e667f3bcc909ULL); }

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return finalize(a ^ ((b << 29) | (b >> 35)) ^ 0x9e3779b97f4a7c15ULL);
}

}  // namespace acbvae
