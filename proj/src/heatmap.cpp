#include "simba/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "simba/errors.hpp"

namespace simba {

Heatmap render_heatmap(std::span<const Keypoint> keypoints, int width, int height, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw NonPositiveSigma("heatmap sigma must be positive");
  if (width <= 0 || height <= 0) throw DimensionMismatch("heatmap dimensions must be positive");
  for (const auto& k : keypoints) {
    if (!(k.x >= 0.0 && k.x < width && k.y >= 0.0 && k.y < height))
      throw OutOfBounds("keypoint (" + std::to_string(k.x) + ", " + std::to_string(k.y) + ") outside " +
                        std::to_string(width) + "x" + std::to_string(height) + " raster");
  }

  Heatmap h{width, height, std::vector<double>(static_cast<std::size_t>(width) * height, 0.0)};
  const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      // Max of exp(-d^2) is exp(-min d^2); taking the min first keeps the max-composition exact.
      double best = INFINITY;
      for (const auto& k : keypoints) {
        const double dx = x - k.x;
        const double dy = y - k.y;
        best = std::min(best, dx * dx + dy * dy);
      }
      if (std::isfinite(best)) h.values[static_cast<std::size_t>(y) * width + x] = std::exp(-best * inv_two_var);
    }
  }
  return h;
}

TwoChannelRaster attach_heatmap(const GrayImage& image, const Heatmap& heatmap) {
  if (image.width != heatmap.width || image.height != heatmap.height)
    throw DimensionMismatch("image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                            " vs heatmap " + std::to_string(heatmap.width) + "x" +
                            std::to_string(heatmap.height));
  TwoChannelRaster out{image.width, image.height, {}};
  const std::size_t plane = static_cast<std::size_t>(image.width) * image.height;
  out.data.resize(2 * plane);
  for (std::size_t i = 0; i < plane; ++i) {
    out.data[i] = static_cast<float>(image.pixels[i]) / 255.0f;
    out.data[plane + i] = static_cast<float>(heatmap.values[i]);
  }
  return out;
}

GrayImage heatmap_to_image(const Heatmap& heatmap) {
  GrayImage img(heatmap.width, heatmap.height);
  for (std::size_t i = 0; i < heatmap.values.size(); ++i) {
    const double v = std::clamp(heatmap.values[i], 0.0, 1.0);
    img.pixels[i] = static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
  }
  return img;
}

void save_heatmap_png(const Heatmap& heatmap, const std::filesystem::path& path) {
  write_png(heatmap_to_image(heatmap), path);
}

}  // namespace simba
