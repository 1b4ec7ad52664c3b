#pragma once

// Checkpoint container: "HSLB" magic, format version, architecture blob,
// named little-endian float32 arrays, trailing CRC32 over everything before it.

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hydroseg/common.hpp"
#include "hydroseg/model.hpp"

namespace hydroseg {

namespace ckpt {

inline constexpr char kMagic[4] = {'H', 'S', 'L', 'B'};
inline constexpr uint32_t kVersion = 1;

inline void put_u32le(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(uint8_t(v));
  out.push_back(uint8_t(v >> 8));
  out.push_back(uint8_t(v >> 16));
  out.push_back(uint8_t(v >> 24));
}

inline uint32_t get_u32le(const uint8_t* p) {
  return uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) | (uint32_t(p[3]) << 24);
}

inline void put_f32le(std::vector<uint8_t>& out, float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32le(out, bits);
}

inline float get_f32le(const uint8_t* p) {
  uint32_t bits = get_u32le(p);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace ckpt

inline std::vector<uint8_t> encode_checkpoint(const ModelParams<float>& params) {
  using namespace ckpt;
  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32le(out, kVersion);
  put_u32le(out, uint32_t(params.config_json.size()));
  out.insert(out.end(), params.config_json.begin(), params.config_json.end());
  put_u32le(out, uint32_t(params.named.size()));
  for (const auto& [name, tensor] : params.named) {
    put_u32le(out, uint32_t(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(0);  // dtype: f32
    out.push_back(uint8_t(tensor.rank()));
    for (int d : tensor.shape) put_u32le(out, uint32_t(d));
    for (float v : tensor.data) put_f32le(out, v);
  }
  uint32_t crc = uint32_t(::crc32(0L, out.data(), uInt(out.size())));
  put_u32le(out, crc);
  return out;
}

inline void save_checkpoint(const ModelParams<float>& params, const std::string& path) {
  auto bytes = encode_checkpoint(params);
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(path, std::ios::binary);
  require(bool(f), errkind::io, "cannot write checkpoint: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  require(bool(f), errkind::io, "checkpoint write failed: " + path);
}

inline ModelParams<float> load_checkpoint(const std::string& path) {
  using namespace ckpt;
  std::ifstream f(path, std::ios::binary);
  require(bool(f), errkind::io, "cannot open checkpoint: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());

  require(bytes.size() >= 16, errkind::checkpoint, path + ": truncated checkpoint");
  uint32_t stored_crc = get_u32le(&bytes[bytes.size() - 4]);
  uint32_t actual_crc = uint32_t(::crc32(0L, bytes.data(), uInt(bytes.size() - 4)));
  require(stored_crc == actual_crc, errkind::checkpoint, path + ": CRC mismatch");

  size_t pos = 0;
  auto need = [&](size_t n) {
    require(pos + n <= bytes.size() - 4, errkind::checkpoint, path + ": truncated checkpoint");
  };
  need(8);
  require(std::memcmp(bytes.data(), kMagic, 4) == 0, errkind::checkpoint, path + ": bad magic");
  pos = 4;
  uint32_t version = get_u32le(&bytes[pos]);
  pos += 4;
  require(version == kVersion, errkind::checkpoint,
          path + ": unsupported version " + std::to_string(version));

  ModelParams<float> params;
  need(4);
  uint32_t cfg_len = get_u32le(&bytes[pos]);
  pos += 4;
  need(cfg_len);
  params.config_json.assign(bytes.begin() + long(pos), bytes.begin() + long(pos + cfg_len));
  pos += cfg_len;
  params.fingerprint = fingerprint_of(params.config_json);

  need(4);
  uint32_t n_arrays = get_u32le(&bytes[pos]);
  pos += 4;
  for (uint32_t a = 0; a < n_arrays; ++a) {
    need(4);
    uint32_t name_len = get_u32le(&bytes[pos]);
    pos += 4;
    need(name_len + 2);
    std::string name(bytes.begin() + long(pos), bytes.begin() + long(pos + name_len));
    pos += name_len;
    uint8_t dtype = bytes[pos++];
    require(dtype == 0, errkind::checkpoint, path + ": unsupported dtype");
    uint8_t ndim = bytes[pos++];
    std::vector<int> shape(ndim);
    need(size_t(ndim) * 4);
    for (int i = 0; i < ndim; ++i) {
      shape[size_t(i)] = int(get_u32le(&bytes[pos]));
      pos += 4;
    }
    size_t count = numel_of(shape);
    need(count * 4);
    Tensor<float> t(shape);
    for (size_t i = 0; i < count; ++i) {
      t.data[i] = get_f32le(&bytes[pos]);
      pos += 4;
    }
    params.named.emplace(std::move(name), std::move(t));
  }
  require(pos == bytes.size() - 4, errkind::checkpoint, path + ": trailing bytes");
  return params;
}

/// Loading into the wrong architecture is an error, detected via fingerprint.
inline void require_architecture(const ModelParams<float>& params,
                                 const std::string& expected_config_json) {
  require(params.fingerprint == fingerprint_of(expected_config_json) &&
              params.config_json == expected_config_json,
          errkind::checkpoint, "checkpoint fingerprint does not match requested architecture");
}

}  // namespace hydroseg
