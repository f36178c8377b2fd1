#include "acbvae/io/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <boost/beast/core/detail/base64.hpp>
#include <boost/crc.hpp>

#include "acbvae/errors.hpp"

namespace acbvae {

using nlohmann::json;
namespace base64 = boost::beast::detail::base64;

namespace {

static_assert(sizeof(float) == 4);

void append_floats(std::string& out, std::span<const float> values) {
  const std::size_t start = out.size();
  out.resize(start + values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(values[i]);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    std::memcpy(out.data() + start + i * 4, &bits, 4);
  }
}

void read_floats(const std::string& in, std::size_t& offset, std::span<float> out) {
  if (offset + out.size() * 4 > in.size()) throw IntegrityError("checkpoint payload is truncated");
  for (float& v : out) {
    std::uint32_t bits;
    std::memcpy(&bits, in.data() + offset, 4);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    v = std::bit_cast<float>(bits);
    offset += 4;
  }
}

std::uint32_t crc32(const std::string& bytes) {
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  json manifest = json::array();
  std::string payload;
  for (const ParamSet<float>* set : checkpoint.model.param_sets()) {
    for (const std::string& key : set->keys()) {
      const Tensor<float>& p = set->parameter(key);
      const AdamMoments<float>& adam = set->adam.at(key);
      manifest.push_back({{"name", key}, {"shape", p.shape()}, {"adam_step", adam.step_count}});
      append_floats(payload, p.data());
      append_floats(payload, adam.m.data());
      append_floats(payload, adam.v.data());
    }
  }
  std::string encoded(base64::encoded_size(payload.size()), '\0');
  encoded.resize(base64::encode(encoded.data(), payload.data(), payload.size()));

  json doc;
  doc["format_version"] = kCheckpointFormatVersion;
  doc["config"] = run_config_to_json(checkpoint.config);
  doc["seed"] = checkpoint.seed;
  doc["step"] = checkpoint.step;
  doc["manifest"] = std::move(manifest);
  doc["payload_bytes"] = payload.size();
  doc["payload_crc32"] = crc32(payload);
  doc["payload"] = std::move(encoded);
  return doc.dump() + "\n";
}

Checkpoint deserialize_checkpoint(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw IntegrityError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("format_version") || !doc["format_version"].is_number_integer()) {
    throw IntegrityError("checkpoint header has no format_version");
  }
  const int version = doc["format_version"].get<int>();
  if (version != kCheckpointFormatVersion) throw UnsupportedVersionError(version, kCheckpointFormatVersion);

  Checkpoint ckpt;
  std::string payload;
  const json* manifest = nullptr;
  try {
    try {
      ckpt.config = run_config_from_json(doc.at("config"));
    } catch (const UsageError& e) {
      throw IntegrityError(std::string("checkpoint config echo is invalid: ") + e.what());
    }
    ckpt.seed = doc.at("seed").get<std::uint64_t>();
    ckpt.step = doc.at("step").get<std::int64_t>();
    manifest = &doc.at("manifest");
    const auto expected_bytes = doc.at("payload_bytes").get<std::size_t>();
    const auto expected_crc = doc.at("payload_crc32").get<std::uint32_t>();
    const auto& encoded = doc.at("payload").get_ref<const std::string&>();
    payload.resize(base64::decoded_size(encoded.size()));
    const auto [written, read] = base64::decode(payload.data(), encoded.data(), encoded.size());
    if (read != encoded.size()) throw IntegrityError("checkpoint payload is not valid base64");
    payload.resize(written);
    if (payload.size() != expected_bytes) throw IntegrityError("checkpoint payload is truncated");
    if (crc32(payload) != expected_crc) throw IntegrityError("checkpoint payload checksum mismatch");
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("checkpoint header is malformed: ") + e.what());
  }

  AgentModelF model = AgentModelF::create(ckpt.config.train.model, 0);
  std::size_t offset = 0;
  std::size_t entry = 0;
  try {
    for (ParamSet<float>* set : model.param_sets()) {
      for (const std::string& key : set->keys()) {
        if (entry >= manifest->size()) throw IntegrityError("checkpoint manifest is missing " + key);
        const json& item = (*manifest)[entry++];
        Tensor<float>& p = set->parameter(key);
        if (item.at("name").get<std::string>() != key || item.at("shape").get<Shape>() != p.shape()) {
          throw IntegrityError("checkpoint manifest entry " + std::to_string(entry - 1) + " does not match " + key +
                               " " + shape_string(p.shape()));
        }
        AdamMoments<float>& adam = set->adam.at(key);
        adam.step_count = item.at("adam_step").get<std::int64_t>();
        read_floats(payload, offset, p.storage());
        read_floats(payload, offset, adam.m.storage());
        read_floats(payload, offset, adam.v.storage());
      }
    }
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("checkpoint manifest is malformed: ") + e.what());
  }
  if (entry != manifest->size()) throw IntegrityError("checkpoint manifest has extra entries");
  if (offset != payload.size()) throw IntegrityError("checkpoint payload has trailing bytes");
  ckpt.model = std::move(model);
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const std::string text = serialize_checkpoint(checkpoint);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace acbvae
