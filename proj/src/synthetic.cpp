#include "simba/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "simba/errors.hpp"
#include "simba/random.hpp"

namespace simba {

namespace {

constexpr int kSupersample = 8;
constexpr double kKeypointJitter = 2.0;
constexpr double kMinBoneAge = 12.0;
constexpr double kMaxBoneAge = 228.0;

}  // namespace

double GrowthOracle::development(double bone_age_months, Gender g) const {
  return std::min(bone_age_months / maturity_age(g), 1.0);
}

void GrowthOracle::validate() const {
  if (!(maturity_age_female > 0.0 && maturity_age_male > 0.0))
    throw std::invalid_argument("maturity ages must be positive");
  if (!(maturity_age_female < maturity_age_male))
    throw std::invalid_argument("female maturity age must be below the male maturity age");
  if (blob_base_radius < 0.0 || blob_gain < 0.0 || noise_std < 0.0 || relative_age_std < 0.0)
    throw std::invalid_argument("oracle radii and noise levels must be non-negative");
  if (image_size < 8) throw std::invalid_argument("image_size too small");
  if (keypoint_count < 1) throw std::invalid_argument("keypoint_count must be positive");
}

std::vector<Keypoint> keypoint_template(int image_size, int keypoint_count) {
  // Three rows of fingertips/knuckles/wrist, spaced far enough apart that
  // fully grown blobs plus jitter never overlap at the default oracle.
  static constexpr double layout[][2] = {
      {0.20, 0.20}, {0.50, 0.20}, {0.80, 0.20}, {0.20, 0.50}, {0.50, 0.50},
      {0.80, 0.50}, {0.35, 0.80}, {0.65, 0.80}, {0.20, 0.80}, {0.80, 0.80},
  };
  constexpr int layout_size = static_cast<int>(std::size(layout));
  std::vector<Keypoint> kps;
  kps.reserve(keypoint_count);
  for (int i = 0; i < keypoint_count; ++i) {
    // Beyond the fixed layout, fall back to a ring around the center.
    if (i < layout_size) {
      kps.push_back({layout[i][0] * image_size, layout[i][1] * image_size});
    } else {
      const double angle = 2.0 * M_PI * (i - layout_size) / std::max(1, keypoint_count - layout_size);
      kps.push_back({(0.5 + 0.3 * std::cos(angle)) * image_size, (0.5 + 0.3 * std::sin(angle)) * image_size});
    }
  }
  return kps;
}

GrayImage render_blobs(const std::vector<Keypoint>& keypoints, double radius, const GrowthOracle& oracle) {
  const int size = oracle.image_size;
  // Fractional coverage per pixel from a kSupersample^2 grid, so disk area
  // varies smoothly with radius.
  std::vector<double> coverage(static_cast<std::size_t>(size) * size, 0.0);
  const double r2 = radius * radius;
  for (const auto& k : keypoints) {
    const int x0 = std::max(0, static_cast<int>(std::floor(k.x - radius - 1)));
    const int x1 = std::min(size - 1, static_cast<int>(std::ceil(k.x + radius + 1)));
    const int y0 = std::max(0, static_cast<int>(std::floor(k.y - radius - 1)));
    const int y1 = std::min(size - 1, static_cast<int>(std::ceil(k.y + radius + 1)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        int hits = 0;
        for (int sy = 0; sy < kSupersample; ++sy) {
          const double py = y - 0.5 + (sy + 0.5) / kSupersample - k.y;
          for (int sx = 0; sx < kSupersample; ++sx) {
            const double px = x - 0.5 + (sx + 0.5) / kSupersample - k.x;
            if (px * px + py * py <= r2) ++hits;
          }
        }
        auto& c = coverage[static_cast<std::size_t>(y) * size + x];
        c = std::min(1.0, c + static_cast<double>(hits) / (kSupersample * kSupersample));
      }
    }
  }
  GrayImage img(size, size);
  for (std::size_t i = 0; i < coverage.size(); ++i) {
    const double v = oracle.background_level + (oracle.blob_level - oracle.background_level) * coverage[i];
    img.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
  }
  return img;
}

SyntheticSample sample_patient(std::uint64_t rng_seed, const GrowthOracle& oracle) {
  oracle.validate();
  Rng rng(rng_seed);

  SyntheticSample s;
  auto& r = s.record;
  const double bone = rng.uniform(kMinBoneAge, kMaxBoneAge);
  r.gender = rng.bernoulli(0.5) ? Gender::female : Gender::male;
  r.bone_age_months = bone;
  r.chronological_age_months = std::clamp(bone + rng.normal(0.0, oracle.relative_age_std), 0.0, kMaxAgeMonths);
  s.development = oracle.development(bone, r.gender);

  r.keypoints = keypoint_template(oracle.image_size, oracle.keypoint_count);
  const double hi = std::nextafter(static_cast<double>(oracle.image_size), 0.0);
  for (auto& k : r.keypoints) {
    k.x = std::clamp(k.x + rng.uniform(-kKeypointJitter, kKeypointJitter), 0.0, hi);
    k.y = std::clamp(k.y + rng.uniform(-kKeypointJitter, kKeypointJitter), 0.0, hi);
  }

  s.image = render_blobs(r.keypoints, oracle.blob_radius(s.development), oracle);
  if (oracle.noise_std > 0.0) {
    for (auto& p : s.image.pixels) {
      const double v = p + rng.normal(0.0, oracle.noise_std);
      p = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
    }
  }
  return s;
}

Manifest generate_dataset(int n, std::uint64_t seed, const GrowthOracle& oracle, const std::filesystem::path& out_dir,
                          Split split) {
  if (n < 1) throw std::invalid_argument("generate_dataset: n must be at least 1");
  oracle.validate();

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "images").string() + ": " + ec.message());

  Manifest m;
  m.image_size = oracle.image_size;
  m.split = split;
  m.base_dir = out_dir;
  m.records.reserve(n);
  for (int i = 0; i < n; ++i) {
    SyntheticSample s = sample_patient(derive_seed(seed, static_cast<std::uint64_t>(i)), oracle);
    char id[32];
    std::snprintf(id, sizeof id, "s%06d", i);
    s.record.id = id;
    s.record.image_path = "images/" + s.record.id + ".png";
    write_png(s.image, out_dir / s.record.image_path);
    m.records.push_back(std::move(s.record));
  }
  validate_manifest(m, oracle.keypoint_count);
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

}  // namespace simba
