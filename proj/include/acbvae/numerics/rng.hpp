#ifndef ACBVAE_NUMERICS_RNG_HPP_
#define ACBVAE_NUMERICS_RNG_HPP_

#include <cstddef>
#include <cstdint>
#include <span>

namespace acbvae {

/// SplitMix64 stream.
///
/// The state advances by the golden-ratio increment and each output is the
/// standard SplitMix64 finalizer of the new state. All derived samples are
/// computed from the raw 64-bit outputs with integer arithmetic and IEEE
/// double operations only, so a seed produces the same sequence everywhere.
///
///   uniform()      = (next() >> 11) * 2^-53             in [0, 1)
///   uniform(a, b)  = a + (b - a) * uniform()
///   below(k)       = (next() >> 32) * k >> 32           (k < 2^32)
///   normal()       = Box-Muller on two uniforms, cosine branch only
///   split()        = Rng(next() ^ 0x6a09e667f3bcc909)
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next();
  double uniform();
  double uniform(double lo, double hi);
  std::uint32_t below(std::uint32_t k);
  double normal();

  /// Draws an index with probability proportional to `weights`.
  std::size_t categorical(std::span<const float> weights);

  /// Independent child stream; advances this stream by one draw.
  Rng split();

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

/// Mixes two integers into a seed (SplitMix64 finalizer of a ^ rotated b).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace acbvae

#endif  // ACBVAE_NUMERICS_RNG_HPP_
