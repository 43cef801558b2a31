#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "idiomark/corpus.hpp"
#include "idiomark/encoder.hpp"
#include "idiomark/errors.hpp"
#include "idiomark/tokenizer.hpp"

namespace idiomark {

/// Everything needed to resume or serve a model: config, float32 parameter
/// tensors, the training step counter, the trainer RNG state, and the
/// vocabulary the model was trained with.
struct Checkpoint {
  EncoderConfig config;
  ModelTensors<float> params;
  int64_t step = 0;
  std::array<uint64_t, 4> rng_state{};
  Vocab vocab;
};

namespace detail {

inline constexpr char kCkptMagic[4] = {'I', 'D', 'M', 'K'};
inline constexpr uint32_t kCkptVersion = 1;

inline nlohmann::ordered_json config_to_json(const EncoderConfig& c) {
  nlohmann::ordered_json j;
  j["vocab_size"] = c.vocab_size;
  j["dim"] = c.dim;
  j["layers"] = c.layers;
  j["heads"] = c.heads;
  j["ffn_dim"] = c.ffn_dim;
  j["dropout_rate"] = c.dropout_rate;
  j["max_position"] = c.max_position;
  j["pooling"] = to_string(c.pooling);
  j["num_classes"] = c.num_classes;
  return j;
}

inline EncoderConfig config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.dim = j.at("dim").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.ffn_dim = j.at("ffn_dim").get<int>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.max_position = j.at("max_position").get<int>();
  c.pooling = pooling_from_string(j.at("pooling").get<std::string>());
  c.num_classes = j.at("num_classes").get<int>();
  return c;
}

}  // namespace detail

/// Throws naming the first field that differs; used when warm-starting or
/// fusing models that must agree structurally.
inline void require_compatible_config(const EncoderConfig& expected,
                                      const EncoderConfig& actual) {
  auto fail = [](const char* field) {
    throw ValidationError(std::string("checkpoint config mismatch: ") + field);
  };
  if (expected.vocab_size != actual.vocab_size) fail("vocab_size");
  if (expected.dim != actual.dim) fail("dim");
  if (expected.layers != actual.layers) fail("layers");
  if (expected.heads != actual.heads) fail("heads");
  if (expected.ffn_dim != actual.ffn_dim) fail("ffn_dim");
  if (expected.max_position != actual.max_position) fail("max_position");
  if (expected.num_classes != actual.num_classes) fail("num_classes");
}

inline void save_checkpoint(const Checkpoint& cp,
                            const std::filesystem::path& path) {
  nlohmann::ordered_json header;
  header["config"] = detail::config_to_json(cp.config);
  header["step"] = cp.step;
  header["rng_state"] = cp.rng_state;
  header["vocab"] = cp.vocab.id_to_token;
  nlohmann::ordered_json dir = nlohmann::ordered_json::array();
  const auto refs = tensor_refs(cp.params);
  for (const auto& r : refs) {
    nlohmann::ordered_json t;
    t["name"] = r.name;
    t["rows"] = static_cast<int64_t>(r.rows);
    t["cols"] = static_cast<int64_t>(r.cols);
    dir.push_back(std::move(t));
  }
  header["tensors"] = std::move(dir);
  const std::string hs = header.dump();

  std::string blob;
  blob.reserve(16 + hs.size());
  blob.append(detail::kCkptMagic, 4);
  const uint32_t ver = detail::kCkptVersion;
  blob.append(reinterpret_cast<const char*>(&ver), 4);
  const uint64_t hlen = hs.size();
  blob.append(reinterpret_cast<const char*>(&hlen), 8);
  blob.append(hs);
  for (const auto& r : refs)
    blob.append(reinterpret_cast<const char*>(r.data),
                static_cast<size_t>(r.size()) * sizeof(float));
  detail::write_file_atomic(path, blob);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string blob = detail::read_file(path);
  if (blob.size() < 16 || std::memcmp(blob.data(), detail::kCkptMagic, 4) != 0)
    throw SchemaError("checkpoint: bad magic in " + path.string());
  uint32_t ver = 0;
  std::memcpy(&ver, blob.data() + 4, 4);
  if (ver != detail::kCkptVersion)
    throw SchemaError("checkpoint: unsupported version " +
                      std::to_string(ver));
  uint64_t hlen = 0;
  std::memcpy(&hlen, blob.data() + 8, 8);
  if (16 + hlen > blob.size())
    throw SchemaError("checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(16, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("checkpoint: bad header: ") + e.what());
  }

  Checkpoint cp;
  cp.config = detail::config_from_json(header.at("config"));
  cp.config.validate();
  cp.step = header.at("step").get<int64_t>();
  const auto rs = header.at("rng_state");
  if (!rs.is_array() || rs.size() != 4)
    throw SchemaError("checkpoint: rng_state must have 4 entries");
  for (size_t i = 0; i < 4; ++i) cp.rng_state[i] = rs[i].get<uint64_t>();

  const auto vt = header.at("vocab").get<std::vector<std::string>>();
  if (vt.size() < 4) throw SchemaError("checkpoint: vocab too small");
  for (int i = 0; i < 4; ++i)
    if (vt[i] != kSpecialForms[i])
      throw SchemaError("checkpoint: vocab special tokens corrupted");
  for (size_t i = 4; i < vt.size(); ++i) cp.vocab.add(vt[i]);
  if (cp.vocab.size() != cp.config.vocab_size)
    throw SchemaError("checkpoint config mismatch: vocab_size");

  cp.params = ModelTensors<float>(cp.config);
  auto refs = tensor_refs(cp.params);
  const auto& dir = header.at("tensors");
  if (!dir.is_array() || dir.size() != refs.size())
    throw SchemaError("checkpoint: tensor directory size mismatch");
  size_t off = 16 + static_cast<size_t>(hlen);
  for (size_t i = 0; i < refs.size(); ++i) {
    const auto& t = dir[i];
    if (t.at("name").get<std::string>() != refs[i].name)
      throw SchemaError("checkpoint: tensor order mismatch at " +
                        refs[i].name);
    if (t.at("rows").get<int64_t>() != refs[i].rows ||
        t.at("cols").get<int64_t>() != refs[i].cols)
      throw SchemaError("checkpoint: tensor shape mismatch at " +
                        refs[i].name);
    const size_t bytes = static_cast<size_t>(refs[i].size()) * sizeof(float);
    if (off + bytes > blob.size())
      throw SchemaError("checkpoint: truncated tensor data at " +
                        refs[i].name);
    std::memcpy(refs[i].data, blob.data() + off, bytes);
    off += bytes;
  }
  if (off != blob.size())
    throw SchemaError("checkpoint: trailing bytes after tensor data");
  return cp;
}

}  // namespace idiomark
