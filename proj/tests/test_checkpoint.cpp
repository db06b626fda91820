#include <doctest.h>

#include <zlib.h>

#include <cstring>

#include "simba/checkpoint.hpp"
#include "simba/errors.hpp"
#include "simba/random.hpp"
#include "test_support.hpp"

using namespace simba;

namespace {

SimbaModel random_model(Rng& rng) {
  ModelConfig c;
  c.image_size = 8 << rng.below(3);
  c.backbone.stage_channels.clear();
  const int stages = 1 + static_cast<int>(rng.below(3));
  for (int s = 0; s < stages; ++s) c.backbone.stage_channels.push_back(1 + static_cast<int>(rng.below(12)));
  c.hidden = 1 + static_cast<int>(rng.below(16));
  c.flags = ModelFlags{rng.bernoulli(0.5), rng.bernoulli(0.5), rng.bernoulli(0.5)};
  c.heatmap_sigma = rng.uniform(0.5, 6.0);
  c.keypoint_count = 1 + static_cast<int>(rng.below(20));
  SimbaModel m(c, rng.next_u64());
  m.parameters().for_each(3, [&](const ParamInfo&, Matrix<float>& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<float>(rng.normal(0.0, 1.0) * 3.0);
  });
  return m;
}

bool bit_equal(const Parameters<float>& a, const Parameters<float>& b) {
  std::vector<const Matrix<float>*> la, lb;
  a.for_each(3, [&](const ParamInfo&, const Matrix<float>& t) { la.push_back(&t); });
  b.for_each(3, [&](const ParamInfo&, const Matrix<float>& t) { lb.push_back(&t); });
  if (la.size() != lb.size()) return false;
  for (std::size_t i = 0; i < la.size(); ++i) {
    if (la[i]->rows() != lb[i]->rows() || la[i]->cols() != lb[i]->cols()) return false;
    if (std::memcmp(la[i]->data(), lb[i]->data(), sizeof(float) * la[i]->size()) != 0) return false;
  }
  return true;
}

void rewrite_crc(std::vector<std::uint8_t>& bytes) {
  const std::size_t body = bytes.size() - 4;
  const auto crc = static_cast<std::uint32_t>(crc32(crc32(0L, Z_NULL, 0), bytes.data(), static_cast<uInt>(body)));
  for (int i = 0; i < 4; ++i) bytes[body + i] = static_cast<std::uint8_t>(crc >> (8 * i));
}

}  // namespace

TEST_CASE("checkpoints round-trip bit-exactly") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const SimbaModel m = random_model(rng);
    const TrainMeta meta{static_cast<int>(rng.below(500)), rng.uniform(0, 50), rng.next_u64()};
    const auto bytes = encode_checkpoint(m, meta);
    const Checkpoint back = decode_checkpoint(bytes);
    REQUIRE(back.model.config() == m.config());
    REQUIRE(back.meta == meta);
    REQUIRE(bit_equal(back.model.parameters(), m.parameters()));
    REQUIRE(encode_checkpoint(back.model, back.meta) == bytes);
  }
}

TEST_CASE("checkpoint files survive save and load") {
  testing::TempDir dir;
  Rng rng(5);
  const SimbaModel m = random_model(rng);
  save_checkpoint(m, TrainMeta{7, 1.5, 9}, dir / "a.smba");
  const auto back = load_checkpoint(dir / "a.smba");
  CHECK(bit_equal(back.model.parameters(), m.parameters()));
  CHECK(back.meta.epoch == 7);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.smba"), IoError);
}

TEST_CASE("damaged checkpoints are rejected") {
  Rng rng(6);
  const auto bytes = encode_checkpoint(random_model(rng), TrainMeta{});

  auto truncated = bytes;
  truncated.resize(bytes.size() / 2);
  CHECK_THROWS_AS(decode_checkpoint(truncated), CorruptChecksum);

  auto tiny = std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 6);
  CHECK_THROWS_AS(decode_checkpoint(tiny), CorruptChecksum);

  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  CHECK_THROWS_AS(decode_checkpoint(flipped), CorruptChecksum);

  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(magic), ParseError);

  auto old = bytes;
  old[4] = old[5] = old[6] = old[7] = 0;
  rewrite_crc(old);
  CHECK_THROWS_AS(decode_checkpoint(old), VersionMismatch);

  auto future = bytes;
  future[4] = 2;
  rewrite_crc(future);
  CHECK_THROWS_AS(decode_checkpoint(future), VersionMismatch);
}

TEST_CASE("tensor names and shapes follow the parameter layout") {
  ModelConfig c;
  SimbaModel m(c, 0);
  std::vector<std::string> names;
  m.parameters().for_each(3, [&](const ParamInfo& info, const Matrix<float>& t) {
    names.push_back(info.name);
    std::int64_t count = 1;
    for (auto d : info.shape) count *= d;
    CHECK(count == t.size());
  });
  REQUIRE(names.size() == 16);
  CHECK(names.front() == "backbone.conv0.weight");
  CHECK(names[8] == "head.m_g");
  CHECK(names[9] == "head.m_c");
  CHECK(names.back() == "head.out.bias");
}

TEST_CASE("model config json is strict") {
  const auto j = model_config_to_json(ModelConfig{});
  CHECK(model_config_from_json(j) == ModelConfig{});
  auto extra = j;
  extra["dropout"] = 0.5;
  CHECK_THROWS_AS(model_config_from_json(extra), ConfigError);
}
