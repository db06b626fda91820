#include "simba/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "simba/errors.hpp"

namespace simba {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'S', 'M', 'B', 'A'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  void need(std::size_t n) const {
    if (n > size_ - pos_) throw ParseError("checkpoint truncated");
  }
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(crc32(crc, data, static_cast<uInt>(n)));
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const char* k : keys) known = known || key == k;
    if (!known) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

}  // namespace

json model_config_to_json(const ModelConfig& c) {
  return {
      {"backbone",
       {{"in_channels", c.backbone.in_channels},
        {"stage_channels", c.backbone.stage_channels},
        {"kernel", c.backbone.kernel},
        {"stride", c.backbone.stride}}},
      {"hidden", c.hidden},
      {"flags",
       {{"use_gender", c.flags.use_gender},
        {"use_chrono", c.flags.use_chrono},
        {"use_relative", c.flags.use_relative}}},
      {"image_size", c.image_size},
      {"keypoint_count", c.keypoint_count},
      {"heatmap_sigma", c.heatmap_sigma},
      {"age_scale", c.age_scale},
  };
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  try {
    reject_unknown(j, {"backbone", "hidden", "flags", "image_size", "keypoint_count", "heatmap_sigma", "age_scale"},
                   "model");
    if (j.contains("backbone")) {
      const auto& b = j.at("backbone");
      reject_unknown(b, {"in_channels", "stage_channels", "kernel", "stride"}, "model.backbone");
      c.backbone.in_channels = b.value("in_channels", c.backbone.in_channels);
      c.backbone.stage_channels = b.value("stage_channels", c.backbone.stage_channels);
      c.backbone.kernel = b.value("kernel", c.backbone.kernel);
      c.backbone.stride = b.value("stride", c.backbone.stride);
    }
    if (j.contains("flags")) {
      const auto& f = j.at("flags");
      reject_unknown(f, {"use_gender", "use_chrono", "use_relative"}, "model.flags");
      c.flags.use_gender = f.value("use_gender", c.flags.use_gender);
      c.flags.use_chrono = f.value("use_chrono", c.flags.use_chrono);
      c.flags.use_relative = f.value("use_relative", c.flags.use_relative);
    }
    c.hidden = j.value("hidden", c.hidden);
    c.image_size = j.value("image_size", c.image_size);
    c.keypoint_count = j.value("keypoint_count", c.keypoint_count);
    c.heatmap_sigma = j.value("heatmap_sigma", c.heatmap_sigma);
    c.age_scale = j.value("age_scale", c.age_scale);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

std::vector<std::uint8_t> encode_checkpoint(const SimbaModel& model, const TrainMeta& meta) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kCheckpointVersion);

  const json header = {
      {"model", model_config_to_json(model.config())},
      {"train", {{"epoch", meta.epoch}, {"best_val_mad", meta.best_val_mad}, {"seed", meta.seed}}},
  };
  const std::string text = header.dump();
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());

  model.parameters().for_each(model.config().backbone.kernel, [&](const ParamInfo& info, const Matrix<float>& m) {
    put_u32(out, static_cast<std::uint32_t>(info.name.size()));
    out.insert(out.end(), info.name.begin(), info.name.end());
    put_u32(out, static_cast<std::uint32_t>(info.shape.size()));
    for (auto d : info.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) put_f32(out, m(r, c));
  });

  put_u32(out, crc32_of(out.data(), out.size()));
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    // A file that is too short to hold the trailer is reported as corrupt.
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) == 0)
      throw CorruptChecksum("checkpoint truncated");
    throw ParseError("not a checkpoint (bad magic)");
  }
  const std::size_t body = bytes.size() - 4;
  Reader trailer(bytes.data() + body, 4);
  if (trailer.u32() != crc32_of(bytes.data(), body)) throw CorruptChecksum("checkpoint CRC-32 mismatch");

  Reader in(bytes.data() + 4, body - 4);
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion)
    throw VersionMismatch("checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));

  json header;
  try {
    header = json::parse(in.bytes(in.u32()));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
  ModelConfig config;
  TrainMeta meta;
  try {
    config = model_config_from_json(header.at("model"));
    const auto& t = header.at("train");
    meta.epoch = t.at("epoch").get<int>();
    meta.best_val_mad = t.at("best_val_mad").get<double>();
    meta.seed = t.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }

  std::map<std::string, std::pair<std::vector<std::int64_t>, std::vector<float>>> tensors;
  while (in.remaining() > 0) {
    std::string name = in.bytes(in.u32());
    const std::uint32_t rank = in.u32();
    std::vector<std::int64_t> dims(rank);
    std::size_t count = 1;
    for (auto& d : dims) {
      d = in.u32();
      count *= static_cast<std::size_t>(d);
    }
    if (count * 4 > in.remaining()) throw ParseError("tensor '" + name + "' overruns the file");
    std::vector<float> values(count);
    for (auto& v : values) v = in.f32();
    tensors.emplace(std::move(name), std::make_pair(std::move(dims), std::move(values)));
  }

  // Shapes come from a freshly built model; values are overwritten below.
  SimbaModel model(config, 0);
  Parameters<float> params = model.parameters();
  params.for_each(config.backbone.kernel, [&](const ParamInfo& info, Matrix<float>& m) {
    auto it = tensors.find(info.name);
    if (it == tensors.end()) throw ParseError("checkpoint lacks tensor '" + info.name + "'");
    if (it->second.first != info.shape) throw DimensionMismatch("tensor '" + info.name + "' has the wrong shape");
    const auto& values = it->second.second;
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = values[k++];
    tensors.erase(it);
  });
  if (!tensors.empty()) throw ParseError("checkpoint has unexpected tensor '" + tensors.begin()->first + "'");
  return Checkpoint{SimbaModel(config, std::move(params)), meta};
}

void save_checkpoint(const SimbaModel& model, const TrainMeta& meta, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(model, meta);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace simba
