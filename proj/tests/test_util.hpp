#pragma once

#include "causalchips/core/error.hpp"
#include "causalchips/core/tensor.hpp"

#include <Eigen/Core>
#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

namespace testutil {

/// Scratch directory under the system temp root, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    base_ = std::filesystem::temp_directory_path() / ("causalchips_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(base_);
    std::filesystem::create_directories(base_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(base_, ec);
  }
  std::string path(const std::string& name) const { return (base_ / name).string(); }
  std::string dir() const { return base_.string(); }

private:
  std::filesystem::path base_;
};

template <typename A, typename B>
bool bit_equal(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

template <typename Fn>
causalchips::Errc error_code_of(Fn&& fn) {
  try {
    fn();
  } catch (const causalchips::Error& e) {
    return e.code();
  }
  throw std::runtime_error("expected a causalchips::Error");
}

// ---------------------------------------------------------------------------
// Minimal little-endian TIFF writer for fixtures. Supports uint8/uint16/
// float32 samples, strip or tile layout, optional DEFLATE, and the two geo
// tags the reader needs. Deliberately independent of the production reader.
// ---------------------------------------------------------------------------

struct TiffSpec {
  int width = 0;
  int height = 0;
  int samples_per_pixel = 1;
  int bits = 32;          // 8, 16, 32
  int sample_format = 3;  // 1 uint, 3 float
  int rows_per_strip = 0; // 0 = single strip
  bool tiled = false;
  int tile_w = 16, tile_h = 16;
  bool deflate = false;
  bool write_pixel_scale = true;
  bool write_tiepoint = true;
  uint16_t compression_override = 0; // nonzero wins over deflate flag
  double origin_x = 0.0, origin_y = 0.0, px = 1.0, py = 1.0;
};

namespace tiffdetail {

inline void put16(std::string& b, uint16_t v) {
  b.push_back(static_cast<char>(v & 0xFF));
  b.push_back(static_cast<char>(v >> 8));
}
inline void put32(std::string& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

struct Entry {
  uint16_t tag, type;
  uint32_t count, value;
};

inline std::string zlib_compress(const std::string& raw) {
  uLongf cap = compressBound(static_cast<uLong>(raw.size()));
  std::string out(cap, '\0');
  compress(reinterpret_cast<Bytef*>(out.data()), &cap,
           reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()));
  out.resize(cap);
  return out;
}

} // namespace tiffdetail

/// pixels: row-major, chunky (sample index = (r*W+c)*spp + s), already in the
/// declared sample type's value range; written per `spec.bits`.
inline void write_tiff(const std::string& path, const TiffSpec& spec, const std::vector<float>& pixels) {
  using namespace tiffdetail;
  const int W = spec.width, H = spec.height, S = spec.samples_per_pixel;
  const int bytes_per_sample = spec.bits / 8;

  auto encode_region = [&](int r0, int rows, int c0, int cols) {
    std::string raw;
    raw.reserve(static_cast<size_t>(rows) * cols * S * bytes_per_sample);
    for (int r = r0; r < r0 + rows; ++r) {
      for (int c = c0; c < c0 + cols; ++c) {
        for (int s = 0; s < S; ++s) {
          float v = 0.0f;
          if (r < H && c < W) v = pixels[(static_cast<size_t>(r) * W + c) * S + s];
          if (spec.bits == 8) {
            raw.push_back(static_cast<char>(static_cast<uint8_t>(v)));
          } else if (spec.bits == 16) {
            const auto u = static_cast<uint16_t>(v);
            put16(raw, u);
          } else {
            uint32_t u;
            std::memcpy(&u, &v, 4);
            put32(raw, u);
          }
        }
      }
    }
    return raw;
  };

  std::vector<std::string> chunks;
  if (!spec.tiled) {
    const int rps = spec.rows_per_strip > 0 ? spec.rows_per_strip : H;
    for (int r0 = 0; r0 < H; r0 += rps) chunks.push_back(encode_region(r0, std::min(rps, H - r0), 0, W));
  } else {
    for (int r0 = 0; r0 < H; r0 += spec.tile_h)
      for (int c0 = 0; c0 < W; c0 += spec.tile_w)
        chunks.push_back(encode_region(r0, spec.tile_h, c0, spec.tile_w)); // tiles pad past edges
  }
  if (spec.deflate)
    for (auto& c : chunks) c = zlib_compress(c);

  // layout: header | pixel chunks | out-of-line arrays | IFD
  std::string body;
  std::vector<uint32_t> chunk_offsets, chunk_counts;
  const uint32_t data_base = 8;
  for (const auto& c : chunks) {
    chunk_offsets.push_back(data_base + static_cast<uint32_t>(body.size()));
    chunk_counts.push_back(static_cast<uint32_t>(c.size()));
    body += c;
    if (body.size() % 2) body.push_back('\0'); // word alignment
  }

  std::vector<Entry> entries;
  std::string arrays; // out-of-line payloads appended after chunks
  const auto arr_offset = [&]() { return data_base + static_cast<uint32_t>(body.size() + arrays.size()); };

  auto add_longs = [&](uint16_t tag, const std::vector<uint32_t>& vals) {
    if (vals.size() == 1) {
      entries.push_back({tag, 4, 1, vals[0]});
    } else {
      entries.push_back({tag, 4, static_cast<uint32_t>(vals.size()), arr_offset()});
      for (uint32_t v : vals) put32(arrays, v);
    }
  };
  auto add_short = [&](uint16_t tag, uint16_t v) { entries.push_back({tag, 3, 1, v}); };
  auto add_shorts = [&](uint16_t tag, const std::vector<uint16_t>& vals) {
    if (vals.size() == 1) {
      entries.push_back({tag, 3, 1, vals[0]});
    } else if (vals.size() == 2) {
      entries.push_back({tag, 3, 2, static_cast<uint32_t>(vals[0]) | (static_cast<uint32_t>(vals[1]) << 16)});
    } else {
      entries.push_back({tag, 3, static_cast<uint32_t>(vals.size()), arr_offset()});
      for (uint16_t v : vals) put16(arrays, v);
    }
  };
  auto add_doubles = [&](uint16_t tag, const std::vector<double>& vals) {
    entries.push_back({tag, 12, static_cast<uint32_t>(vals.size()), arr_offset()});
    for (double v : vals) {
      uint64_t u;
      std::memcpy(&u, &v, 8);
      for (int i = 0; i < 8; ++i) arrays.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
    }
  };

  add_longs(256, {static_cast<uint32_t>(W)});
  add_longs(257, {static_cast<uint32_t>(H)});
  add_shorts(258, std::vector<uint16_t>(S, static_cast<uint16_t>(spec.bits)));
  const uint16_t compression =
      spec.compression_override ? spec.compression_override : (spec.deflate ? 8 : 1);
  add_short(259, compression);
  add_short(262, 1); // photometric, black-is-zero
  if (!spec.tiled) {
    add_longs(273, chunk_offsets);
    add_short(277, static_cast<uint16_t>(S));
    add_longs(278, {static_cast<uint32_t>(spec.rows_per_strip > 0 ? spec.rows_per_strip : H)});
    add_longs(279, chunk_counts);
  } else {
    add_short(277, static_cast<uint16_t>(S));
    add_longs(322, {static_cast<uint32_t>(spec.tile_w)});
    add_longs(323, {static_cast<uint32_t>(spec.tile_h)});
    add_longs(324, chunk_offsets);
    add_longs(325, chunk_counts);
  }
  add_short(284, 1); // chunky
  add_shorts(339, std::vector<uint16_t>(S, static_cast<uint16_t>(spec.sample_format)));
  if (spec.write_pixel_scale) add_doubles(33550, {spec.px, spec.py, 0.0});
  if (spec.write_tiepoint) add_doubles(33922, {0.0, 0.0, 0.0, spec.origin_x, spec.origin_y, 0.0});

  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.tag < b.tag; });

  const uint32_t ifd_offset = data_base + static_cast<uint32_t>(body.size() + arrays.size());
  std::string out;
  out += "II";
  put16(out, 42);
  put32(out, ifd_offset);
  out += body;
  out += arrays;
  put16(out, static_cast<uint16_t>(entries.size()));
  for (const auto& e : entries) {
    put16(out, e.tag);
    put16(out, e.type);
    put32(out, e.count);
    if (e.type == 3 && e.count == 1) {
      put16(out, static_cast<uint16_t>(e.value));
      put16(out, 0);
    } else {
      put32(out, e.value);
    }
  }
  put32(out, 0); // no next IFD

  std::ofstream f(path, std::ios::binary);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

} // namespace testutil
