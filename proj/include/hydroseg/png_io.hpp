#pragma once

// Minimal PNG reader/writer for the two raster types used here. Only what the
// pipeline needs: 8-bit RGB / grayscale, non-interlaced, zlib-compressed IDAT.
// Compression settings are fixed so a given raster always encodes to the same
// bytes.

#include <zlib.h>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hydroseg/common.hpp"
#include "hydroseg/raster.hpp"

namespace hydroseg {
namespace pngio {

inline void put_u32be(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(uint8_t(v >> 24));
  out.push_back(uint8_t(v >> 16));
  out.push_back(uint8_t(v >> 8));
  out.push_back(uint8_t(v));
}

inline uint32_t get_u32be(const uint8_t* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

inline void append_chunk(std::vector<uint8_t>& out, const char type[4],
                         const std::vector<uint8_t>& payload) {
  put_u32be(out, uint32_t(payload.size()));
  size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  uint32_t crc = uint32_t(::crc32(0L, out.data() + crc_start, uInt(out.size() - crc_start)));
  put_u32be(out, crc);
}

inline std::vector<uint8_t> zlib_deflate(const std::vector<uint8_t>& raw) {
  uLongf bound = compressBound(uLong(raw.size()));
  std::vector<uint8_t> out(bound);
  // level pinned: identical input -> identical bytes
  int rc = compress2(out.data(), &bound, raw.data(), uLong(raw.size()), 6);
  require(rc == Z_OK, errkind::io, "deflate failed");
  out.resize(bound);
  return out;
}

inline std::vector<uint8_t> zlib_inflate(const std::vector<uint8_t>& comp, size_t raw_size) {
  std::vector<uint8_t> out(raw_size);
  uLongf dst = uLongf(raw_size);
  int rc = uncompress(out.data(), &dst, comp.data(), uLong(comp.size()));
  require(rc == Z_OK && dst == raw_size, errkind::corrupt_stream, "png inflate failed");
  return out;
}

struct Decoded {
  int width = 0;
  int height = 0;
  int channels = 0;               // 1 (gray) or 3 (rgb)
  std::vector<uint8_t> samples;   // row-major, interleaved
  int color_type = 0;
};

inline int paeth(int a, int b, int c) {
  int p = a + b - c;
  int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

inline Decoded decode(const std::vector<uint8_t>& bytes, const std::string& origin) {
  static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  require(bytes.size() >= 8 && std::memcmp(bytes.data(), sig, 8) == 0, errkind::png_format,
          origin + ": not a PNG file");

  size_t pos = 8;
  Decoded d;
  int bit_depth = 0, interlace = -1;
  bool seen_ihdr = false, seen_iend = false;
  std::vector<uint8_t> idat;

  while (pos + 12 <= bytes.size()) {
    uint32_t len = get_u32be(&bytes[pos]);
    require(pos + 12 + len <= bytes.size(), errkind::corrupt_stream, origin + ": truncated chunk");
    const uint8_t* typep = &bytes[pos + 4];
    std::string type(reinterpret_cast<const char*>(typep), 4);
    const uint8_t* payload = &bytes[pos + 8];
    uint32_t stored_crc = get_u32be(&bytes[pos + 8 + len]);
    uint32_t actual_crc = uint32_t(::crc32(0L, typep, uInt(4 + len)));
    require(stored_crc == actual_crc, errkind::corrupt_stream, origin + ": chunk CRC mismatch");

    if (type == "IHDR") {
      require(len == 13, errkind::corrupt_stream, origin + ": bad IHDR");
      d.width = int(get_u32be(payload));
      d.height = int(get_u32be(payload + 4));
      bit_depth = payload[8];
      d.color_type = payload[9];
      interlace = payload[12];
      require(d.width >= 1 && d.height >= 1, errkind::png_format, origin + ": bad dimensions");
      require(bit_depth == 8, errkind::unsupported_bit_depth,
              origin + ": unsupported bit depth " + std::to_string(bit_depth));
      require(d.color_type == 0 || d.color_type == 2, errkind::unsupported_color_type,
              origin + ": unsupported color type " + std::to_string(d.color_type));
      require(interlace == 0, errkind::png_format, origin + ": interlaced PNG not supported");
      seen_ihdr = true;
    } else if (type == "IDAT") {
      idat.insert(idat.end(), payload, payload + len);
    } else if (type == "IEND") {
      seen_iend = true;
      break;
    }
    // ancillary chunks ignored
    pos += 12 + len;
  }
  require(seen_ihdr && seen_iend && !idat.empty(), errkind::corrupt_stream,
          origin + ": incomplete PNG stream");

  d.channels = d.color_type == 2 ? 3 : 1;
  const size_t stride = size_t(d.width) * d.channels;
  std::vector<uint8_t> raw = zlib_inflate(idat, size_t(d.height) * (stride + 1));

  // undo per-row filters
  d.samples.assign(size_t(d.height) * stride, 0);
  const int bpp = d.channels;
  for (int y = 0; y < d.height; ++y) {
    const uint8_t* src = &raw[size_t(y) * (stride + 1)];
    uint8_t filter = src[0];
    const uint8_t* cur = src + 1;
    uint8_t* dst = &d.samples[size_t(y) * stride];
    const uint8_t* up = y > 0 ? &d.samples[size_t(y - 1) * stride] : nullptr;
    for (size_t i = 0; i < stride; ++i) {
      int a = i >= size_t(bpp) ? dst[i - bpp] : 0;
      int b = up ? up[i] : 0;
      int c = (up && i >= size_t(bpp)) ? up[i - bpp] : 0;
      int x = cur[i];
      switch (filter) {
        case 0: dst[i] = uint8_t(x); break;
        case 1: dst[i] = uint8_t(x + a); break;
        case 2: dst[i] = uint8_t(x + b); break;
        case 3: dst[i] = uint8_t(x + (a + b) / 2); break;
        case 4: dst[i] = uint8_t(x + paeth(a, b, c)); break;
        default: fail(errkind::corrupt_stream, origin + ": unknown filter type");
      }
    }
  }
  return d;
}

inline std::vector<uint8_t> encode(int width, int height, int channels,
                                   const std::vector<uint8_t>& samples) {
  const size_t stride = size_t(width) * channels;
  std::vector<uint8_t> raw;
  raw.reserve(size_t(height) * (stride + 1));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), samples.begin() + size_t(y) * stride,
               samples.begin() + size_t(y + 1) * stride);
  }
  std::vector<uint8_t> idat = zlib_deflate(raw);

  std::vector<uint8_t> out;
  static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  out.insert(out.end(), sig, sig + 8);
  std::vector<uint8_t> ihdr;
  put_u32be(ihdr, uint32_t(width));
  put_u32be(ihdr, uint32_t(height));
  ihdr.push_back(8);                              // bit depth
  ihdr.push_back(channels == 3 ? 2 : 0);          // color type
  ihdr.push_back(0);                              // compression
  ihdr.push_back(0);                              // filter method
  ihdr.push_back(0);                              // no interlace
  append_chunk(out, "IHDR", ihdr);
  append_chunk(out, "IDAT", idat);
  append_chunk(out, "IEND", {});
  return out;
}

inline std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(bool(f), errkind::io, "cannot open file: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  require(!f.bad(), errkind::io, "read failed: " + path);
  return bytes;
}

inline void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(path, std::ios::binary);
  require(bool(f), errkind::io, "cannot write file: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  require(bool(f), errkind::io, "write failed: " + path);
}

}  // namespace pngio

/// Load an 8-bit RGB (or grayscale, expanded to RGB) PNG.
inline RasterImage load_image(const std::string& path) {
  pngio::Decoded d = pngio::decode(pngio::read_file(path), path);
  RasterImage img(d.width, d.height);
  if (d.channels == 3) {
    img.data = std::move(d.samples);
  } else {
    for (size_t i = 0; i < d.samples.size(); ++i) {
      img.data[i * 3 + 0] = d.samples[i];
      img.data[i * 3 + 1] = d.samples[i];
      img.data[i * 3 + 2] = d.samples[i];
    }
  }
  return img;
}

inline void save_image(const RasterImage& img, const std::string& path) {
  pngio::write_file(path, pngio::encode(img.width, img.height, 3, img.data));
}

/// Load a strictly binary grayscale PNG ({0,255} on disk -> {0,1} in memory).
inline LabelMask load_mask(const std::string& path) {
  pngio::Decoded d = pngio::decode(pngio::read_file(path), path);
  require(d.channels == 1, errkind::unsupported_color_type,
          path + ": mask must be single-channel grayscale");
  std::vector<uint8_t> vals(d.samples.size());
  for (size_t i = 0; i < d.samples.size(); ++i) {
    uint8_t v = d.samples[i];
    require(v == 0 || v == 255, errkind::non_binary_mask,
            path + ": non-binary mask value " + std::to_string(int(v)));
    vals[i] = v == 255 ? 1 : 0;
  }
  return LabelMask(d.width, d.height, std::move(vals));
}

inline void save_mask(const LabelMask& mask, const std::string& path) {
  std::vector<uint8_t> vals(mask.data.size());
  for (size_t i = 0; i < mask.data.size(); ++i) vals[i] = mask.data[i] ? 255 : 0;
  pngio::write_file(path, pngio::encode(mask.width, mask.height, 1, vals));
}

/// In-memory encodings, used by round-trip tests and the deterministic-output checks.
inline std::vector<uint8_t> encode_mask(const LabelMask& mask) {
  std::vector<uint8_t> vals(mask.data.size());
  for (size_t i = 0; i < mask.data.size(); ++i) vals[i] = mask.data[i] ? 255 : 0;
  return pngio::encode(mask.width, mask.height, 1, vals);
}

inline std::vector<uint8_t> encode_image(const RasterImage& img) {
  return pngio::encode(img.width, img.height, 3, img.data);
}

}  // namespace hydroseg
