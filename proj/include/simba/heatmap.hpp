#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "simba/dataset.hpp"
#include "simba/image.hpp"

namespace simba {

/// Single-channel attention raster with values in [0, 1], row-major.
struct Heatmap {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// H(p) = max_k exp(-|p - k|^2 / (2 sigma^2)) over all keypoints k.
/// Throws OutOfBounds for keypoints outside [0, width) x [0, height), NonPositiveSigma for sigma <= 0.
Heatmap render_heatmap(std::span<const Keypoint> keypoints, int width, int height, double sigma);

/// Default Gaussian width for a square raster of the given size.
inline double default_heatmap_sigma(int image_size) { return image_size / 16.0; }

/// Channel-major (2, H, W) raster: channel 0 is the image scaled to [0, 1], channel 1 the heatmap.
struct TwoChannelRaster {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  static constexpr int channels = 2;
  float at(int channel, int x, int y) const {
    return data[(static_cast<std::size_t>(channel) * height + y) * width + x];
  }
};

/// Throws DimensionMismatch.
TwoChannelRaster attach_heatmap(const GrayImage& image, const Heatmap& heatmap);

/// Debug export: value * 255 rounded half-up.
GrayImage heatmap_to_image(const Heatmap& heatmap);
void save_heatmap_png(const Heatmap& heatmap, const std::filesystem::path& path);

}  // namespace simba
