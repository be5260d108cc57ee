#pragma once

// Checkpoints: a JSON manifest naming every parameter array (shape, dtype,
// byte offset) next to one little-endian blob of float64 values.

#include <bit>
#include <cstring>
#include <filesystem>
#include <string>

#include "equisr/config.hpp"

namespace equisr {

inline constexpr const char* kCheckpointVersion = "equisr-ckpt-1";

struct Checkpoint {
  ModelConfig config;
  ParamSet<double> params;
};

namespace detail {

inline void put_f64(std::string& out, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((u >> (8 * b)) & 0xff));
}

inline double get_f64(const std::string& in, std::size_t at) {
  std::uint64_t u = 0;
  for (int b = 0; b < 8; ++b) u |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + b])) << (8 * b);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

}  // namespace detail

// Writes <manifest> and, beside it, <manifest stem>.bin.
inline void save_checkpoint(const std::filesystem::path& manifest, const Checkpoint& ck) {
  const std::string blob_name = manifest.stem().string() + ".bin";
  std::string blob;
  json params = json::array();
  for (const auto& [name, t] : ck.params) {
    params.push_back({{"name", name}, {"shape", t.shape}, {"dtype", "float64"}, {"offset", blob.size()}});
    for (double v : t.data) detail::put_f64(blob, v);
  }
  const json doc = {{"version", kCheckpointVersion},
                    {"config", model_to_json(ck.config)},
                    {"blob", blob_name},
                    {"blob_bytes", blob.size()},
                    {"params", params}};
  write_file_atomic(manifest.parent_path() / blob_name, blob);
  write_file_atomic(manifest, doc.dump(2) + "\n");
}

// Validates the manifest against the model its config describes; any
// inconsistency names the offending field.
inline Checkpoint load_checkpoint(const std::filesystem::path& manifest) {
  const std::string text = read_file(manifest);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error&) {
    throw CheckpointError("manifest is not valid JSON", manifest.string());
  }
  auto field = [&](const char* key) -> const json& {
    if (!doc.is_object() || !doc.contains(key)) throw CheckpointError("manifest lacks a required field", key);
    return doc[key];
  };
  if (!field("version").is_string() || field("version").get<std::string>() != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version", "version");
  Checkpoint ck;
  try {
    ck.config = model_from_json(field("config"));
  } catch (const ConfigError& e) {
    throw CheckpointError(e.what(), "config");
  }
  if (!field("blob").is_string()) throw CheckpointError("blob must be a file name", "blob");
  const std::string blob = read_file(manifest.parent_path() / field("blob").get<std::string>());
  if (doc.contains("blob_bytes") && doc["blob_bytes"] != blob.size())
    throw CheckpointError("blob size differs from the manifest", "blob_bytes");
  const auto expected = INRModel(ck.config).init(0);
  const json& params = field("params");
  if (!params.is_array()) throw CheckpointError("params must be an array", "params");
  for (std::size_t k = 0; k < params.size(); ++k) {
    const json& p = params[k];
    const std::string where = "params[" + std::to_string(k) + "]";
    if (!p.is_object() || !p.contains("name") || !p["name"].is_string()) throw CheckpointError("missing name", where + ".name");
    const std::string name = p["name"];
    if (!expected.contains(name)) throw CheckpointError("parameter not part of the model", where + ".name");
    if (!p.contains("dtype") || p["dtype"] != "float64") throw CheckpointError("dtype must be float64", where + ".dtype");
    Shape shape;
    try {
      shape = p.at("shape").get<Shape>();
    } catch (const json::exception&) {
      throw CheckpointError("invalid shape", where + ".shape");
    }
    if (shape != expected.at(name).shape) throw CheckpointError("shape differs from the model", where + ".shape");
    if (!p.contains("offset") || !p["offset"].is_number_unsigned()) throw CheckpointError("invalid offset", where + ".offset");
    const std::size_t offset = p["offset"];
    Tensor<double> t(shape);
    if (offset % 8 != 0 || offset > blob.size() || blob.size() - offset < 8 * t.size())
      throw CheckpointError("offset outside the blob", where + ".offset");
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = detail::get_f64(blob, offset + 8 * i);
    try {
      ck.params.add(name, std::move(t));
    } catch (const ConfigError&) {
      throw CheckpointError("duplicate parameter", where + ".name");
    }
  }
  for (const auto& [name, _] : expected)
    if (!ck.params.contains(name)) throw CheckpointError("parameter missing from checkpoint", "params." + name);
  return ck;
}

}  // namespace equisr
