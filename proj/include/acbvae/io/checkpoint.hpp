#ifndef ACBVAE_IO_CHECKPOINT_HPP_
#define ACBVAE_IO_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <string>

#include "acbvae/io/run_config.hpp"

namespace acbvae {

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  RunConfig config;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  AgentModelF model;
};

/// Single JSON document: header {format_version, config, seed, step,
/// manifest[{name, shape, adam_step}]}, a CRC-32 of the payload bytes and
/// the payload itself as base64 of little-endian float32. Every manifest
/// entry contributes parameter, Adam m and Adam v arrays in that order.
std::string serialize_checkpoint(const Checkpoint& checkpoint);
/// Throws UnsupportedVersionError for another format version and
/// IntegrityError for anything malformed, truncated or corrupted.
Checkpoint deserialize_checkpoint(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace acbvae

#endif  // ACBVAE_IO_CHECKPOINT_HPP_
