#pragma once

#include <cstdint>
#include <filesystem>

#include "simba/dataset.hpp"
#include "simba/image.hpp"

namespace simba {

/// Generative law linking bone age and gender to visible structure.
struct GrowthOracle {
  double maturity_age_female = 192.0;
  double maturity_age_male = 216.0;
  double blob_base_radius = 2.0;  // px
  double blob_gain = 4.0;         // px at full maturity
  double noise_std = 8.0;         // 8-bit intensity units
  double relative_age_std = 12.0;
  double background_level = 24.0;
  double blob_level = 208.0;
  int image_size = 64;
  int keypoint_count = kDefaultKeypointCount;

  double maturity_age(Gender g) const { return g == Gender::female ? maturity_age_female : maturity_age_male; }
  double development(double bone_age_months, Gender g) const;
  double blob_radius(double development) const { return blob_base_radius + blob_gain * development; }

  /// Throws std::invalid_argument when the oracle is inconsistent.
  void validate() const;
};

struct SyntheticSample {
  PatientRecord record;
  GrayImage image;
  double development = 0.0;
};

/// Hand-like keypoint layout scaled to the raster, before jitter.
std::vector<Keypoint> keypoint_template(int image_size, int keypoint_count);

/// Every random draw is a pure function of rng_seed.
SyntheticSample sample_patient(std::uint64_t rng_seed, const GrowthOracle& oracle);

/// Renders the blobs for a given record without noise; used by the generator and by oracle tests.
GrayImage render_blobs(const std::vector<Keypoint>& keypoints, double radius, const GrowthOracle& oracle);

/// Writes out_dir/images/<id>.png and out_dir/manifest.json. Sample i uses derive_seed(seed, i).
Manifest generate_dataset(int n, std::uint64_t seed, const GrowthOracle& oracle, const std::filesystem::path& out_dir,
                          Split split = Split::train);

}  // namespace simba
