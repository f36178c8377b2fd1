#ifndef ACBVAE_IO_PGM_HPP_
#define ACBVAE_IO_PGM_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace acbvae {

// Square grayscale images of side `side`, pixels in [0, 1].
struct PgmLayout {
  std::size_t side = 64;
  std::size_t rows = 1;
  std::size_t cols = 1;
};

/// p -> round(255 p), clamped to [0, 255].
std::uint8_t to_byte(float p);

/// Binary "P5" mosaic with 1-pixel white separators between tiles. Cells
/// past images.size() stay black. Throws UsageError on mismatched sizes.
std::string encode_pgm(std::span<const std::vector<float>> images, const PgmLayout& layout);
void write_pgm(const std::filesystem::path& path, std::span<const std::vector<float>> images,
               const PgmLayout& layout);

}  // namespace acbvae

#endif  // ACBVAE_IO_PGM_HPP_
