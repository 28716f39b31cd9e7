#pragma once

// Parameter checkpoint container.
//
// Layout (all integers little-endian):
//   8 bytes   magic "SSCKPT01"
//   8 bytes   manifest length N (uint64)
//   N bytes   UTF-8 JSON manifest
//   rest      IEEE-754 binary64 values, little-endian, tensors back to back
//
// The manifest carries "tensors": [{"name", "shape": [r, c], "offset"}] with
// offsets counted in values from the start of the payload, plus "seed",
// "config_hash", "config", "kind" and free-form "metadata".

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "scenesketch/core/graph.hpp"

namespace scenesketch {

using Json = nlohmann::json;

inline constexpr char kCheckpointMagic[8] = {'S', 'S', 'C', 'K', 'P', 'T', '0', '1'};

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

/// Hash of parameter names, shapes and raw value bits.
inline std::string params_hash(const ParamStore& params) {
  std::string buf;
  for (const auto& p : params) {
    buf += p.name;
    buf += p.value.shape_string();
    const auto d = p.value.data();
    buf.append(reinterpret_cast<const char*>(d.data()), d.size() * sizeof(double));
  }
  return hex64(fnv1a64(buf));
}

/// Stable hash of a JSON configuration (object keys are serialized sorted).
inline std::string config_hash(const Json& config) { return hex64(fnv1a64(config.dump())); }

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  Json manifest;
  ParamStore params;

  const Json& config() const { return manifest.at("config"); }
  const Json& metadata() const { return manifest.at("metadata"); }
  std::string kind() const { return manifest.value("kind", ""); }
};

namespace detail {

inline void write_u64_le(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t read_u64_le(const unsigned char* b) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void write_f64_le(std::ostream& os, double d) {
  write_u64_le(os, std::bit_cast<std::uint64_t>(d));
}

}  // namespace detail

/// Serializes params with a manifest. `header` supplies kind/seed/config/metadata.
inline std::string encode_checkpoint(const ParamStore& params, const std::string& kind,
                                     std::uint64_t seed, const Json& config,
                                     const Json& metadata) {
  Json manifest;
  manifest["format"] = "scenesketch-checkpoint";
  manifest["version"] = 1;
  manifest["kind"] = kind;
  manifest["seed"] = seed;
  manifest["config"] = config;
  manifest["config_hash"] = config_hash(config);
  manifest["metadata"] = metadata;
  Json tensors = Json::array();
  std::uint64_t offset = 0;
  for (const auto& p : params) {
    tensors.push_back({{"name", p.name},
                       {"shape", {p.value.rows(), p.value.cols()}},
                       {"offset", offset}});
    offset += p.value.size();
  }
  manifest["tensors"] = tensors;
  const std::string text = manifest.dump();

  std::ostringstream os(std::ios::binary);
  os.write(kCheckpointMagic, 8);
  detail::write_u64_le(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : params)
    for (double v : p.value.storage()) detail::write_f64_le(os, v);
  return os.str();
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw CheckpointError("checkpoint: bad magic header");
  }
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t mlen = detail::read_u64_le(raw + 8);
  if (16 + mlen > bytes.size()) throw CheckpointError("checkpoint: truncated manifest");
  Checkpoint ck;
  try {
    ck.manifest = Json::parse(bytes.substr(16, mlen));
  } catch (const Json::exception& e) {
    throw CheckpointError(std::string("checkpoint: manifest is not valid JSON: ") + e.what());
  }
  const std::size_t payload = 16 + mlen;
  const std::size_t nvalues = (bytes.size() - payload) / 8;
  if ((bytes.size() - payload) % 8 != 0) throw CheckpointError("checkpoint: ragged payload");
  for (const auto& t : ck.manifest.at("tensors")) {
    const auto rows = t.at("shape").at(0).get<std::size_t>();
    const auto cols = t.at("shape").at(1).get<std::size_t>();
    const auto off = t.at("offset").get<std::size_t>();
    if (off + rows * cols > nvalues) {
      throw CheckpointError("checkpoint: tensor " + t.at("name").get<std::string>() +
                            " exceeds payload");
    }
    std::vector<double> data(rows * cols);
    for (std::size_t i = 0; i < data.size(); ++i)
      data[i] = std::bit_cast<double>(detail::read_u64_le(raw + payload + 8 * (off + i)));
    ck.params.add(t.at("name").get<std::string>(), Tensor(rows, cols, std::move(data)));
  }
  if (ck.manifest.value("config_hash", "") != config_hash(ck.manifest.at("config"))) {
    throw CheckpointError("checkpoint: config hash does not match embedded config");
  }
  return ck;
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

inline void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                            const std::string& kind, std::uint64_t seed, const Json& config,
                            const Json& metadata) {
  write_file(path, encode_checkpoint(params, kind, seed, config, metadata));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw CheckpointError("checkpoint not found: " + path.string());
  return decode_checkpoint(read_file(path));
}

}  // namespace scenesketch
