#include <doctest.h>

#include <algorithm>
#include <set>

#include "simba/dataset.hpp"
#include "simba/errors.hpp"
#include "simba/random.hpp"
#include "test_support.hpp"

using namespace simba;

namespace {

std::string kps_json(int k, double x = 10, double y = 12) {
  std::string s = "[";
  for (int i = 0; i < k; ++i) s += (i ? "," : "") + std::string("[") + std::to_string(x) + "," + std::to_string(y) + "]";
  return s + "]";
}

std::string record_json(const std::string& id, const std::string& gender = "1", const std::string& kps = kps_json(8),
                        const std::string& bone = "120.5") {
  return R"({"id": ")" + id + R"(", "image": "images/)" + id + R"(.png", "gender": )" + gender +
         R"(, "chronological_age_months": 118.25, "bone_age_months": )" + bone + R"(, "keypoints": )" + kps + "}";
}

Manifest make_manifest(int n) {
  Manifest m;
  m.image_size = 64;
  Rng rng(3);
  for (int i = 0; i < n; ++i) {
    PatientRecord r;
    r.id = "p" + std::to_string(1000 + i);
    r.image_path = "images/" + r.id + ".png";
    r.gender = rng.bernoulli(0.5) ? Gender::female : Gender::male;
    r.chronological_age_months = rng.uniform(0, 250);
    if (i % 5 != 0) r.bone_age_months = rng.uniform(0, 250);
    for (int k = 0; k < 8; ++k) r.keypoints.push_back({rng.uniform(0, 63.9), rng.uniform(0, 63.9)});
    m.records.push_back(r);
  }
  return m;
}

std::vector<std::string> ids(const Manifest& m) {
  std::vector<std::string> out;
  for (const auto& r : m.records) out.push_back(r.id);
  return out;
}

}  // namespace

TEST_CASE("relative age follows c - b") {
  CHECK(relative_age(100.0, 138.0).value_months == -38.0);
  CHECK(relative_age(120.0, 120.0).value_months == 0.0);
  CHECK(relative_age(121.0, 120.0).value_months == 1.0);
  CHECK_THROWS_AS(relative_age(-1.0, 3.0), std::invalid_argument);
  CHECK_THROWS_AS(relative_age(NAN, 3.0), std::invalid_argument);
}

TEST_CASE("relative age plus bone age recovers chronological age") {
  Rng rng(11);
  for (int i = 0; i < 10000; ++i) {
    // Integer-valued ages (and halves) keep the subtraction exact.
    const double c = std::floor(rng.uniform(0, 600)) / 2.0;
    const double b = std::floor(rng.uniform(0, 600)) / 2.0;
    REQUIRE(relative_age(c, b).value_months + b == c);
  }
}

TEST_CASE("parse a well-formed three-record manifest") {
  const std::string text = R"({"image_size": 64, "records": [)" + record_json("a") + "," + record_json("b", "0") + "," +
                           record_json("c", "1", kps_json(8), "null") + "]}";
  const Manifest m = parse_manifest(text);
  REQUIRE(m.records.size() == 3);
  CHECK(m.image_size == 64);
  CHECK(m.records[0].gender == Gender::female);
  CHECK(m.records[1].gender == Gender::male);
  CHECK(m.records[0].chronological_age_months == 118.25);
  CHECK(*m.records[0].bone_age_months == 120.5);
  CHECK_FALSE(m.records[2].bone_age_months.has_value());
  CHECK(m.records[0].keypoints.size() == 8);

  std::string omitted = record_json("d");
  omitted.erase(omitted.find(R"(, "bone_age_months")"), std::string(R"(, "bone_age_months": 120.5)").size());
  const Manifest inference = parse_manifest(R"({"image_size": 64, "records": [)" + omitted + "]}");
  CHECK_FALSE(inference.records[0].bone_age_months.has_value());
}

TEST_CASE("manifest validation names the offending record") {
  SUBCASE("gender 2") {
    const std::string text = R"({"image_size": 64, "records": [)" + record_json("ok") + "," +
                             record_json("bad-gender", "2") + "]}";
    try {
      parse_manifest(text);
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK(e.record_id() == "bad-gender");
      CHECK(e.field() == "gender");
    }
  }
  SUBCASE("zero keypoints when K = 8") {
    const std::string text = R"({"image_size": 64, "records": [)" + record_json("nokp", "0", "[]") + "]}";
    try {
      parse_manifest(text);
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK(e.record_id() == "nokp");
      CHECK(e.field() == "keypoints");
    }
  }
  SUBCASE("keypoint outside the image") {
    const std::string text = R"({"image_size": 64, "records": [)" + record_json("out", "0", kps_json(8, 64.0)) + "]}";
    CHECK_THROWS_AS(parse_manifest(text), ValidationError);
  }
  SUBCASE("age cap") {
    std::string rec = record_json("old");
    rec.replace(rec.find("118.25"), 6, "301.00");
    CHECK_THROWS_AS(parse_manifest(R"({"image_size": 64, "records": [)" + rec + "]}"), ValidationError);
  }
  SUBCASE("duplicate ids") {
    const std::string text =
        R"({"image_size": 64, "records": [)" + record_json("dup") + "," + record_json("dup") + "]}";
    CHECK_THROWS_AS(parse_manifest(text), ValidationError);
  }
}

TEST_CASE("malformed manifests are parse errors") {
  CHECK_THROWS_AS(parse_manifest("{not json"), ParseError);
  CHECK_THROWS_AS(parse_manifest(R"({"records": []})"), ParseError);
  CHECK_THROWS_AS(parse_manifest(R"({"image_size": 64, "records": [{"id": "x"}]})"), ParseError);
  CHECK_THROWS_AS(parse_manifest(R"({"image_size": 64, "records": [], "extra": 1})"), ParseError);
  CHECK_THROWS_AS(load_manifest("/nonexistent/manifest.json"), IoError);
}

TEST_CASE("manifest save/load round-trip is field exact") {
  testing::TempDir dir;
  for (int n : {0, 1, 7, 40}) {
    Manifest m = make_manifest(n);
    m.split = n % 2 ? Split::val : Split::test;
    save_manifest(m, dir / "m.json");
    const Manifest back = load_manifest(dir / "m.json");
    CHECK(back == m);
    CHECK(back.base_dir == dir.path());
  }
}

TEST_CASE("deterministic split sizes and reproducibility") {
  const Manifest m = make_manifest(10);
  const auto a = split_deterministic(m, 7, {0.6, 0.2});
  CHECK(a.train.records.size() == 6);
  CHECK(a.val.records.size() == 2);
  CHECK(a.test.records.size() == 2);
  const auto b = split_deterministic(m, 7, {0.6, 0.2});
  CHECK(ids(a.train) == ids(b.train));
  CHECK(ids(a.val) == ids(b.val));
  CHECK(ids(a.test) == ids(b.test));

  std::set<std::string> all;
  for (const auto* part : {&a.train, &a.val, &a.test})
    for (const auto& r : part->records) all.insert(r.id);
  CHECK(all.size() == 10);
}

TEST_CASE("different seeds give different partitions") {
  const Manifest m = make_manifest(100);
  const auto a = split_deterministic(m, 7, {0.6, 0.2});
  const auto b = split_deterministic(m, 8, {0.6, 0.2});
  auto as_set = [](const Manifest& x) {
    auto v = ids(x);
    return std::set<std::string>(v.begin(), v.end());
  };
  CHECK(as_set(a.train) != as_set(b.train));
}

TEST_CASE("split is invariant under record permutation") {
  Manifest m = make_manifest(57);
  const auto ref = split_deterministic(m, 99, {0.5, 0.25});
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    rng.shuffle(m.records.begin(), m.records.end());
    const auto got = split_deterministic(m, 99, {0.5, 0.25});
    REQUIRE(ids(got.train) == ids(ref.train));
    REQUIRE(ids(got.val) == ids(ref.val));
    REQUIRE(ids(got.test) == ids(ref.test));
  }
}

TEST_CASE("split errors") {
  CHECK_THROWS_AS(split_deterministic(make_manifest(3), 1, {0.6, 0.2}), EmptySplit);
  CHECK_THROWS_AS(split_deterministic(make_manifest(10), 1, {0.6, 0.4}), std::invalid_argument);
  CHECK_THROWS_AS(split_deterministic(make_manifest(10), 1, {0.0, 0.4}), std::invalid_argument);
}
