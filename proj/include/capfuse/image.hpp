#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace capfuse {

/// 8-bit RGB raster, row-major, three bytes per pixel.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

  std::uint8_t* at(int x, int y) { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* at(int x, int y) const {
    return &pixels[(static_cast<std::size_t>(y) * width + x) * 3];
  }
};

/// Binary (P6) or ASCII (P3) PPM with maxval 255. Throws UnreadableImage.
RgbImage read_ppm(const std::filesystem::path& path);
RgbImage parse_ppm(std::string_view bytes, const std::filesystem::path& origin = {});
/// Writes P6.
void write_ppm(const std::filesystem::path& path, const RgbImage& image);

/// Joint RGB histogram with `bins_per_channel`^3 cells, normalized to sum 1.
Eigen::VectorXd color_histogram(const RgbImage& image, int bins_per_channel);

/// Foreground = pixels whose max-min channel spread reaches `min_spread`.
std::vector<bool> saturated_mask(const RgbImage& image, int min_spread);

}  // namespace capfuse
