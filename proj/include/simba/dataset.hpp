#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace simba {

inline constexpr double kMaxAgeMonths = 300.0;
inline constexpr int kDefaultKeypointCount = 8;

/// Gender code fed to the gender multiplier.
enum class Gender : int { male = 0, female = 1 };

inline double gender_value(Gender g) { return static_cast<double>(static_cast<int>(g)); }

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct PatientRecord {
  std::string id;
  std::string image_path;  // relative to the manifest directory
  Gender gender = Gender::male;
  double chronological_age_months = 0.0;
  std::optional<double> bone_age_months;
  std::vector<Keypoint> keypoints;

  friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

enum class Split { train, val, test };

const char* to_string(Split split);
Split split_from_string(const std::string& s);

struct Manifest {
  std::vector<PatientRecord> records;
  Split split = Split::train;
  int image_size = 64;
  /// Directory image paths are resolved against. Not serialized.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const PatientRecord& r) const { return base_dir / r.image_path; }

  friend bool operator==(const Manifest& a, const Manifest& b) {
    return a.records == b.records && a.split == b.split && a.image_size == b.image_size;
  }
};

/// Signed difference c - b; negative means bone age runs ahead of chronological age.
struct RelativeAge {
  double value_months = 0.0;
};

RelativeAge relative_age(double chronological_months, double bone_months);

/// Throws ValidationError naming the first offending record and field.
void validate_record(const PatientRecord& record, int image_size, int keypoint_count);
void validate_manifest(const Manifest& manifest, int keypoint_count = kDefaultKeypointCount);

/// Throws ParseError / ValidationError / IoError.
Manifest parse_manifest(const std::string& json_text, int keypoint_count = kDefaultKeypointCount);
Manifest load_manifest(const std::filesystem::path& path, int keypoint_count = kDefaultKeypointCount);

std::string dump_manifest(const Manifest& manifest);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

struct SplitFractions {
  double train = 0.6;
  double val = 0.2;
};

struct SplitResult {
  Manifest train;
  Manifest val;
  Manifest test;
};

/// Partition depends only on the sorted ids and the seed. Throws EmptySplit.
SplitResult split_deterministic(const Manifest& manifest, std::uint64_t seed, SplitFractions fractions);

}  // namespace simba
