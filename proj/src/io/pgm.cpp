#include "acbvae/io/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "acbvae/errors.hpp"

namespace acbvae {

std::uint8_t to_byte(float p) {
  const double v = std::round(255.0 * static_cast<double>(p));
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

std::string encode_pgm(std::span<const std::vector<float>> images, const PgmLayout& layout) {
  if (layout.side == 0 || layout.rows == 0 || layout.cols == 0) throw UsageError("pgm: empty layout");
  if (images.size() > layout.rows * layout.cols) throw UsageError("pgm: more images than grid cells");
  const std::size_t tile = layout.side * layout.side;
  for (const auto& img : images) {
    if (img.size() != tile) {
      throw UsageError("pgm: image has " + std::to_string(img.size()) + " pixels, expected " + std::to_string(tile));
    }
  }
  const std::size_t width = layout.cols * layout.side + (layout.cols - 1);
  const std::size_t height = layout.rows * layout.side + (layout.rows - 1);
  std::vector<std::uint8_t> pixels(width * height, 255);
  for (std::size_t r = 0; r < layout.rows; ++r) {
    for (std::size_t c = 0; c < layout.cols; ++c) {
      const std::size_t k = r * layout.cols + c;
      const std::size_t top = r * (layout.side + 1);
      const std::size_t left = c * (layout.side + 1);
      for (std::size_t y = 0; y < layout.side; ++y) {
        for (std::size_t x = 0; x < layout.side; ++x) {
          pixels[(top + y) * width + left + x] = k < images.size() ? to_byte(images[k][y * layout.side + x]) : 0;
        }
      }
    }
  }
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.append(pixels.begin(), pixels.end());
  return out;
}

void write_pgm(const std::filesystem::path& path, std::span<const std::vector<float>> images,
               const PgmLayout& layout) {
  const std::string bytes = encode_pgm(images, layout);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << bytes;
}

}  // namespace acbvae
