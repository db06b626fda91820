#include "simba/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <unordered_set>

#include "simba/errors.hpp"
#include "simba/random.hpp"

namespace simba {

using nlohmann::json;

const char* to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ParseError("unknown split '" + s + "'");
}

RelativeAge relative_age(double chronological_months, double bone_months) {
  if (!std::isfinite(chronological_months) || !std::isfinite(bone_months) || chronological_months < 0.0 ||
      bone_months < 0.0)
    throw std::invalid_argument("relative_age: ages must be finite and non-negative");
  return RelativeAge{chronological_months - bone_months};
}

void validate_record(const PatientRecord& r, int image_size, int keypoint_count) {
  auto fail = [&](const char* field, const std::string& what) { throw ValidationError(r.id, field, what); };
  if (r.id.empty()) fail("id", "empty id");
  if (r.gender != Gender::male && r.gender != Gender::female) fail("gender", "must be 0 or 1");
  const double c = r.chronological_age_months;
  if (!std::isfinite(c) || c < 0.0 || c > kMaxAgeMonths) fail("chronological_age_months", "outside [0, 300]");
  if (r.bone_age_months) {
    const double b = *r.bone_age_months;
    if (!std::isfinite(b) || b < 0.0 || b > kMaxAgeMonths) fail("bone_age_months", "outside [0, 300]");
  }
  if (static_cast<int>(r.keypoints.size()) != keypoint_count)
    fail("keypoints", "expected " + std::to_string(keypoint_count) + " keypoints, got " +
                          std::to_string(r.keypoints.size()));
  for (const auto& k : r.keypoints) {
    if (!(k.x >= 0.0 && k.x < image_size && k.y >= 0.0 && k.y < image_size))
      fail("keypoints", "coordinate outside the image");
  }
}

void validate_manifest(const Manifest& m, int keypoint_count) {
  if (m.image_size <= 0) throw ValidationError("<manifest>", "image_size", "must be positive");
  std::unordered_set<std::string> seen;
  for (const auto& r : m.records) {
    validate_record(r, m.image_size, keypoint_count);
    if (!seen.insert(r.id).second) throw ValidationError(r.id, "id", "duplicate id");
  }
}

namespace {

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(where + ": missing key '" + key + "'");
  return *it;
}

PatientRecord parse_record(const json& j, std::size_t index) {
  const std::string where = "records[" + std::to_string(index) + "]";
  if (!j.is_object()) throw ParseError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    static const std::unordered_set<std::string> known = {"id", "image", "gender", "chronological_age_months",
                                                          "bone_age_months", "keypoints"};
    if (!known.count(key)) throw ParseError(where + ": unknown key '" + key + "'");
  }

  PatientRecord r;
  const auto& id = require(j, "id", where);
  if (!id.is_string()) throw ParseError(where + ": 'id' must be a string");
  r.id = id.get<std::string>();

  const auto& image = require(j, "image", where);
  if (!image.is_string()) throw ParseError(where + ": 'image' must be a string");
  r.image_path = image.get<std::string>();

  const auto& gender = require(j, "gender", where);
  if (!gender.is_number_integer()) throw ValidationError(r.id, "gender", "must be the integer 0 or 1");
  const auto g = gender.get<long long>();
  if (g != 0 && g != 1) throw ValidationError(r.id, "gender", "must be 0 or 1, got " + std::to_string(g));
  r.gender = static_cast<Gender>(g);

  const auto& chrono = require(j, "chronological_age_months", where);
  if (!chrono.is_number()) throw ParseError(where + ": 'chronological_age_months' must be a number");
  r.chronological_age_months = chrono.get<double>();

  // Inference-only records may carry null or omit the key.
  const auto bone_it = j.find("bone_age_months");
  if (bone_it == j.end() || bone_it->is_null()) {
    r.bone_age_months.reset();
  } else if (bone_it->is_number()) {
    r.bone_age_months = bone_it->get<double>();
  } else {
    throw ParseError(where + ": 'bone_age_months' must be a number or null");
  }

  const auto& kps = require(j, "keypoints", where);
  if (!kps.is_array()) throw ParseError(where + ": 'keypoints' must be an array");
  for (const auto& kp : kps) {
    if (!kp.is_array() || kp.size() != 2 || !kp[0].is_number() || !kp[1].is_number())
      throw ParseError(where + ": each keypoint must be an [x, y] pair of numbers");
    r.keypoints.push_back({kp[0].get<double>(), kp[1].get<double>()});
  }
  return r;
}

}  // namespace

Manifest parse_manifest(const std::string& text, int keypoint_count) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("manifest must be a JSON object");
  for (const auto& [key, _] : doc.items())
    if (key != "image_size" && key != "records" && key != "split")
      throw ParseError("manifest: unknown key '" + key + "'");

  Manifest m;
  const auto& size = require(doc, "image_size", "manifest");
  if (!size.is_number_integer()) throw ParseError("manifest: 'image_size' must be an integer");
  m.image_size = size.get<int>();
  if (auto it = doc.find("split"); it != doc.end()) {
    if (!it->is_string()) throw ParseError("manifest: 'split' must be a string");
    m.split = split_from_string(it->get<std::string>());
  }
  const auto& records = require(doc, "records", "manifest");
  if (!records.is_array()) throw ParseError("manifest: 'records' must be an array");
  for (std::size_t i = 0; i < records.size(); ++i) m.records.push_back(parse_record(records[i], i));

  validate_manifest(m, keypoint_count);
  return m;
}

Manifest load_manifest(const std::filesystem::path& path, int keypoint_count) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  Manifest m = parse_manifest(buffer.str(), keypoint_count);
  m.base_dir = path.parent_path();
  return m;
}

std::string dump_manifest(const Manifest& m) {
  json records = json::array();
  for (const auto& r : m.records) {
    json kps = json::array();
    for (const auto& k : r.keypoints) kps.push_back({k.x, k.y});
    records.push_back({
        {"id", r.id},
        {"image", r.image_path},
        {"gender", static_cast<int>(r.gender)},
        {"chronological_age_months", r.chronological_age_months},
        {"bone_age_months", r.bone_age_months ? json(*r.bone_age_months) : json(nullptr)},
        {"keypoints", std::move(kps)},
    });
  }
  json doc = {{"image_size", m.image_size}, {"split", to_string(m.split)}, {"records", std::move(records)}};
  return doc.dump(1) + "\n";
}

void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << dump_manifest(m);
  if (!out) throw IoError("failed writing manifest " + path.string());
}

SplitResult split_deterministic(const Manifest& manifest, std::uint64_t seed, SplitFractions fractions) {
  if (!(fractions.train > 0.0 && fractions.val > 0.0 && fractions.train + fractions.val < 1.0))
    throw std::invalid_argument("split fractions must be positive and sum to less than 1");

  std::vector<const PatientRecord*> order;
  order.reserve(manifest.records.size());
  for (const auto& r : manifest.records) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->id < b->id; });
  Rng rng(mix_seed(seed));
  rng.shuffle(order.begin(), order.end());

  const auto n = order.size();
  // The small epsilon keeps e.g. 10 * 0.6 from flooring to 5.
  const auto n_train = static_cast<std::size_t>(std::floor(n * fractions.train + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(n * fractions.val + 1e-9));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n)
    throw EmptySplit("split of " + std::to_string(n) + " records leaves an empty partition");

  SplitResult out;
  for (Manifest* part : {&out.train, &out.val, &out.test}) {
    part->image_size = manifest.image_size;
    part->base_dir = manifest.base_dir;
  }
  out.train.split = Split::train;
  out.val.split = Split::val;
  out.test.split = Split::test;
  for (std::size_t i = 0; i < n; ++i) {
    Manifest& dst = i < n_train ? out.train : (i < n_train + n_val ? out.val : out.test);
    dst.records.push_back(*order[i]);
  }
  return out;
}

}  // namespace simba
