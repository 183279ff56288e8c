#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "astn/tensor.hpp"

// Parameter container: magic "ASTN1", then a little-endian u64 JSON header
// length, the header (tensor names, shapes, dtype, byte offsets, plus a free
// "extra" object), then the raw value buffers back to back.

namespace astn::ag {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

inline constexpr char kCheckpointMagic[5] = {'A', 'S', 'T', 'N', '1'};

template <typename T>
const char* dtype_name() {
  if constexpr (std::is_same_v<T, float>) return "f32";
  else return "f64";
}

template <typename T>
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor<T>>>& tensors,
                     const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json header;
  header["dtype"] = dtype_name<T>();
  header["extra"] = extra;
  nlohmann::json list = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    nlohmann::json e;
    e["name"] = name;
    e["shape"] = t.shape();
    e["offset"] = offset;
    e["bytes"] = static_cast<std::uint64_t>(t.numel() * sizeof(T));
    list.push_back(e);
    offset += t.numel() * sizeof(T);
  }
  header["tensors"] = list;
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
  out.write(kCheckpointMagic, 5);
  const std::uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, t] : tensors)
    out.write(reinterpret_cast<const char*>(t.value().data()),
              static_cast<std::streamsize>(t.numel() * sizeof(T)));
  if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

template <typename T>
struct LoadedCheckpoint {
  std::map<std::string, Tensor<T>> tensors;
  nlohmann::json extra;
};

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[5];
  if (!in.read(magic, 5) || std::memcmp(magic, kCheckpointMagic, 5) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  std::uint64_t hlen = 0;
  if (!in.read(reinterpret_cast<char*>(&hlen), 8))
    throw std::runtime_error("checkpoint: truncated header length in " + path);
  std::string hs(hlen, '\0');
  if (!in.read(hs.data(), static_cast<std::streamsize>(hlen)))
    throw std::runtime_error("checkpoint: truncated header in " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("checkpoint: unparseable header: ") + e.what());
  }
  if (header.value("dtype", "") != dtype_name<T>())
    throw std::runtime_error("checkpoint: dtype " + header.value("dtype", "?") +
                             " does not match requested " + dtype_name<T>());
  LoadedCheckpoint<T> result;
  result.extra = header.value("extra", nlohmann::json::object());
  const std::streampos payload_start = in.tellg();
  for (const auto& e : header.at("tensors")) {
    const std::string name = e.at("name").get<std::string>();
    Shape shape = e.at("shape").get<Shape>();
    const std::uint64_t offset = e.at("offset").get<std::uint64_t>();
    const std::uint64_t bytes = e.at("bytes").get<std::uint64_t>();
    if (bytes != shape_numel(shape) * sizeof(T))
      throw std::runtime_error("checkpoint: byte count disagrees with shape for " + name);
    std::vector<T> values(shape_numel(shape));
    in.seekg(payload_start + static_cast<std::streamoff>(offset));
    if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes)))
      throw std::runtime_error("checkpoint: truncated payload for tensor " + name);
    result.tensors.emplace(name, Tensor<T>::from(std::move(shape), std::move(values)));
  }
  return result;
}

}  // namespace astn::ag
