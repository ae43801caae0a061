#include "causalchips/geo/raster.hpp"

#include "causalchips/core/csv.hpp"
#include "causalchips/core/error.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little, "little-endian host assumed");

namespace causalchips::geo {

struct RasterBackend {
  virtual ~RasterBackend() = default;
  // fills out as h x w x |bands| row-major; window already bounds-checked
  virtual void read_window(int64_t row0, int64_t col0, int64_t h, int64_t w,
                           const std::vector<int>& bands, float* out) const = 0;
};

namespace {

// ---------------------------------------------------------------- FlatRaster

struct FlatBackend : RasterBackend {
  int64_t width = 0, height = 0;
  int bands = 0;
  std::vector<float> data; // band-major: band * H * W + row * W + col

  void read_window(int64_t row0, int64_t col0, int64_t h, int64_t w,
                   const std::vector<int>& sel, float* out) const override {
    const size_t nb = sel.size();
    for (int64_t r = 0; r < h; ++r)
      for (int64_t c = 0; c < w; ++c)
        for (size_t b = 0; b < nb; ++b)
          out[(r * w + c) * nb + b] =
              data[static_cast<size_t>(sel[b]) * height * width + (row0 + r) * width + (col0 + c)];
  }
};

bool parse_flat_raster(const std::string& path, Raster& raster, std::shared_ptr<const RasterBackend>& backend,
                       GeoTransform& geo, int64_t& width, int64_t& height, int& band_count);

// ---------------------------------------------------------------- TIFF subset

constexpr uint16_t kTagImageWidth = 256;
constexpr uint16_t kTagImageLength = 257;
constexpr uint16_t kTagBitsPerSample = 258;
constexpr uint16_t kTagCompression = 259;
constexpr uint16_t kTagStripOffsets = 273;
constexpr uint16_t kTagSamplesPerPixel = 277;
constexpr uint16_t kTagRowsPerStrip = 278;
constexpr uint16_t kTagStripByteCounts = 279;
constexpr uint16_t kTagPlanarConfig = 284;
constexpr uint16_t kTagPredictor = 317;
constexpr uint16_t kTagTileWidth = 322;
constexpr uint16_t kTagTileLength = 323;
constexpr uint16_t kTagTileOffsets = 324;
constexpr uint16_t kTagTileByteCounts = 325;
constexpr uint16_t kTagSampleFormat = 339;
constexpr uint16_t kTagModelPixelScale = 33550;
constexpr uint16_t kTagModelTiepoint = 33922;

struct IfdEntry {
  uint16_t tag = 0;
  uint16_t type = 0;
  uint32_t count = 0;
  uint8_t raw[4] = {0, 0, 0, 0};
};

size_t type_size(uint16_t type) {
  switch (type) {
    case 1: return 1;  // BYTE
    case 2: return 1;  // ASCII
    case 3: return 2;  // SHORT
    case 4: return 4;  // LONG
    case 5: return 8;  // RATIONAL
    case 11: return 4; // FLOAT
    case 12: return 8; // DOUBLE
    default: return 0;
  }
}

class FileReader {
public:
  explicit FileReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) fail(Errc::io_error, "cannot open " + path);
  }
  void read_at(uint64_t offset, void* dst, size_t len) {
    in_.seekg(static_cast<std::streamoff>(offset));
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(len));
    if (!in_) fail(Errc::corrupt_file, path_ + ": short read at offset " + std::to_string(offset));
  }
  template <typename T>
  T read_scalar(uint64_t offset) {
    T v;
    read_at(offset, &v, sizeof(T));
    return v;
  }

private:
  std::string path_;
  std::ifstream in_;
};

struct TiffLayout {
  int64_t width = 0, height = 0;
  int spp = 1;
  uint16_t bits = 8;
  uint16_t sample_format = 1; // 1 uint, 3 float
  uint16_t compression = 1;
  bool tiled = false;
  int64_t rows_per_strip = 0;
  int64_t tile_w = 0, tile_h = 0;
  std::vector<uint64_t> chunk_offsets;
  std::vector<uint64_t> chunk_counts;
  SampleType sample_type = SampleType::u8;
  size_t bytes_per_sample = 1;
};

struct TiffBackend : RasterBackend {
  std::string path;
  TiffLayout lay;

  // decoded size in bytes of chunk (strip or tile) `idx`
  size_t decoded_size(size_t idx) const {
    if (lay.tiled)
      return static_cast<size_t>(lay.tile_w) * lay.tile_h * lay.spp * lay.bytes_per_sample;
    const int64_t row0 = static_cast<int64_t>(idx) * lay.rows_per_strip;
    const int64_t rows = std::min(lay.rows_per_strip, lay.height - row0);
    return static_cast<size_t>(rows) * lay.width * lay.spp * lay.bytes_per_sample;
  }

  std::vector<uint8_t> load_chunk(FileReader& file, size_t idx) const {
    const size_t want = decoded_size(idx);
    std::vector<uint8_t> raw(lay.chunk_counts[idx]);
    file.read_at(lay.chunk_offsets[idx], raw.data(), raw.size());
    if (lay.compression == 1) {
      if (raw.size() < want) fail(Errc::corrupt_file, path + ": chunk shorter than expected");
      raw.resize(want);
      return raw;
    }
    // DEFLATE (zlib-wrapped)
    std::vector<uint8_t> out(want);
    uLongf dest_len = static_cast<uLongf>(want);
    const int rc = uncompress(out.data(), &dest_len, raw.data(), static_cast<uLong>(raw.size()));
    if (rc != Z_OK || dest_len != want)
      fail(Errc::corrupt_file, path + ": deflate chunk failed (zlib rc " + std::to_string(rc) + ")");
    return out;
  }

  float sample_to_float(const uint8_t* p) const {
    switch (lay.sample_type) {
      case SampleType::u8: return static_cast<float>(*p);
      case SampleType::u16: {
        uint16_t v;
        std::memcpy(&v, p, 2);
        return static_cast<float>(v);
      }
      case SampleType::f32: {
        float v;
        std::memcpy(&v, p, 4);
        return v;
      }
    }
    return 0.0f;
  }

  void read_window(int64_t row0, int64_t col0, int64_t h, int64_t w,
                   const std::vector<int>& sel, float* out) const override {
    FileReader file(path);
    const size_t nb = sel.size();
    const size_t bps = lay.bytes_per_sample;
    if (!lay.tiled) {
      const size_t strip_lo = static_cast<size_t>(row0 / lay.rows_per_strip);
      const size_t strip_hi = static_cast<size_t>((row0 + h - 1) / lay.rows_per_strip);
      for (size_t s = strip_lo; s <= strip_hi; ++s) {
        const auto chunk = load_chunk(file, s);
        const int64_t srow0 = static_cast<int64_t>(s) * lay.rows_per_strip;
        const int64_t r_lo = std::max(row0, srow0);
        const int64_t r_hi = std::min(row0 + h, srow0 + lay.rows_per_strip);
        for (int64_t r = r_lo; r < r_hi; ++r) {
          const uint8_t* rowp = chunk.data() + static_cast<size_t>(r - srow0) * lay.width * lay.spp * bps;
          for (int64_t c = 0; c < w; ++c) {
            const uint8_t* px = rowp + static_cast<size_t>(col0 + c) * lay.spp * bps;
            for (size_t b = 0; b < nb; ++b)
              out[((r - row0) * w + c) * nb + b] = sample_to_float(px + sel[b] * bps);
          }
        }
      }
    } else {
      const int64_t tiles_across = (lay.width + lay.tile_w - 1) / lay.tile_w;
      const int64_t t_r0 = row0 / lay.tile_h, t_r1 = (row0 + h - 1) / lay.tile_h;
      const int64_t t_c0 = col0 / lay.tile_w, t_c1 = (col0 + w - 1) / lay.tile_w;
      for (int64_t tr = t_r0; tr <= t_r1; ++tr) {
        for (int64_t tc = t_c0; tc <= t_c1; ++tc) {
          const auto chunk = load_chunk(file, static_cast<size_t>(tr * tiles_across + tc));
          const int64_t base_r = tr * lay.tile_h, base_c = tc * lay.tile_w;
          const int64_t r_lo = std::max(row0, base_r);
          const int64_t r_hi = std::min(row0 + h, base_r + lay.tile_h);
          const int64_t c_lo = std::max(col0, base_c);
          const int64_t c_hi = std::min(col0 + w, base_c + lay.tile_w);
          for (int64_t r = r_lo; r < r_hi; ++r) {
            const uint8_t* rowp =
                chunk.data() + static_cast<size_t>(r - base_r) * lay.tile_w * lay.spp * bps;
            for (int64_t c = c_lo; c < c_hi; ++c) {
              const uint8_t* px = rowp + static_cast<size_t>(c - base_c) * lay.spp * bps;
              for (size_t b = 0; b < nb; ++b)
                out[((r - row0) * w + (c - col0)) * nb + b] = sample_to_float(px + sel[b] * bps);
            }
          }
        }
      }
    }
  }
};

class TiffParser {
public:
  TiffParser(const std::string& path) : path_(path), file_(path) {}

  void parse(TiffLayout& lay, GeoTransform& geo) {
    uint8_t head[8];
    file_.read_at(0, head, 8);
    if (head[0] == 'M' && head[1] == 'M')
      fail(Errc::unsupported_format, path_ + ": big-endian TIFF not in supported subset");
    if (head[0] != 'I' || head[1] != 'I') fail(Errc::corrupt_file, path_ + ": not a TIFF");
    uint16_t version;
    std::memcpy(&version, head + 2, 2);
    if (version == 43) fail(Errc::unsupported_format, path_ + ": BigTIFF not in supported subset");
    if (version != 42) fail(Errc::corrupt_file, path_ + ": bad TIFF version " + std::to_string(version));
    uint32_t ifd_offset;
    std::memcpy(&ifd_offset, head + 4, 4);
    read_ifd(ifd_offset);

    lay.width = static_cast<int64_t>(uint_value(kTagImageWidth));
    lay.height = static_cast<int64_t>(uint_value(kTagImageLength));
    if (lay.width < 1 || lay.height < 1) fail(Errc::corrupt_file, path_ + ": bad dimensions");
    lay.spp = static_cast<int>(uint_value_or(kTagSamplesPerPixel, 1));

    const auto bits = uint_values_or(kTagBitsPerSample, {8});
    for (auto b : bits)
      if (b != bits[0])
        fail(Errc::unsupported_format, path_ + ": bands with mixed bit depths");
    lay.bits = static_cast<uint16_t>(bits[0]);

    const auto fmts = uint_values_or(kTagSampleFormat, {1});
    for (auto f : fmts)
      if (f != fmts[0]) fail(Errc::unsupported_format, path_ + ": bands with mixed sample formats");
    lay.sample_format = static_cast<uint16_t>(fmts[0]);

    if (lay.bits == 8 && lay.sample_format == 1) {
      lay.sample_type = SampleType::u8;
      lay.bytes_per_sample = 1;
    } else if (lay.bits == 16 && lay.sample_format == 1) {
      lay.sample_type = SampleType::u16;
      lay.bytes_per_sample = 2;
    } else if (lay.bits == 32 && lay.sample_format == 3) {
      lay.sample_type = SampleType::f32;
      lay.bytes_per_sample = 4;
    } else {
      fail(Errc::unsupported_format, path_ + ": sample type bits=" + std::to_string(lay.bits) +
                                         " format=" + std::to_string(lay.sample_format) +
                                         " outside uint8/uint16/float32 subset");
    }

    lay.compression = static_cast<uint16_t>(uint_value_or(kTagCompression, 1));
    if (lay.compression != 1 && lay.compression != 8 && lay.compression != 32946)
      fail(Errc::unsupported_format,
           path_ + ": compression " + std::to_string(lay.compression) + " (only none/DEFLATE)");

    if (uint_value_or(kTagPlanarConfig, 1) != 1 && lay.spp > 1)
      fail(Errc::unsupported_format, path_ + ": planar configuration 2 not supported");
    if (uint_value_or(kTagPredictor, 1) != 1)
      fail(Errc::unsupported_format, path_ + ": predictor not supported");

    const bool has_tiles = has(kTagTileOffsets);
    const bool has_strips = has(kTagStripOffsets);
    if (has_tiles) {
      lay.tiled = true;
      lay.tile_w = static_cast<int64_t>(uint_value(kTagTileWidth));
      lay.tile_h = static_cast<int64_t>(uint_value(kTagTileLength));
      if (lay.tile_w < 1 || lay.tile_h < 1) fail(Errc::corrupt_file, path_ + ": bad tile size");
      lay.chunk_offsets = uint_values(kTagTileOffsets);
      lay.chunk_counts = uint_values(kTagTileByteCounts);
      const int64_t across = (lay.width + lay.tile_w - 1) / lay.tile_w;
      const int64_t down = (lay.height + lay.tile_h - 1) / lay.tile_h;
      if (static_cast<int64_t>(lay.chunk_offsets.size()) != across * down)
        fail(Errc::corrupt_file, path_ + ": tile count mismatch");
    } else if (has_strips) {
      lay.tiled = false;
      lay.rows_per_strip = static_cast<int64_t>(
          std::min<uint64_t>(uint_value_or(kTagRowsPerStrip, static_cast<uint64_t>(lay.height)),
                             static_cast<uint64_t>(lay.height)));
      if (lay.rows_per_strip < 1) fail(Errc::corrupt_file, path_ + ": bad rows per strip");
      lay.chunk_offsets = uint_values(kTagStripOffsets);
      if (!has(kTagStripByteCounts)) fail(Errc::corrupt_file, path_ + ": missing strip byte counts");
      lay.chunk_counts = uint_values(kTagStripByteCounts);
      const int64_t strips = (lay.height + lay.rows_per_strip - 1) / lay.rows_per_strip;
      if (static_cast<int64_t>(lay.chunk_offsets.size()) != strips)
        fail(Errc::corrupt_file, path_ + ": strip count mismatch");
    } else {
      fail(Errc::corrupt_file, path_ + ": neither strips nor tiles present");
    }
    if (lay.chunk_counts.size() != lay.chunk_offsets.size())
      fail(Errc::corrupt_file, path_ + ": chunk offset/count arrays disagree");

    if (!has(kTagModelPixelScale) || !has(kTagModelTiepoint))
      fail(Errc::missing_geo_tags, path_ + ": needs ModelPixelScale (33550) and ModelTiepoint (33922)");
    const auto scale = double_values(kTagModelPixelScale);
    const auto tie = double_values(kTagModelTiepoint);
    if (scale.size() < 2 || tie.size() < 6) fail(Errc::corrupt_file, path_ + ": malformed geo tags");
    if (scale[0] <= 0 || scale[1] <= 0)
      fail(Errc::corrupt_file, path_ + ": non-positive pixel scale");
    // tiepoint maps pixel (tie[0], tie[1]) to world (tie[3], tie[4])
    geo.pixel_size_x = scale[0];
    geo.pixel_size_y = scale[1];
    geo.origin_x = tie[3] - tie[0] * scale[0];
    geo.origin_y = tie[4] + tie[1] * scale[1];
  }

private:
  void read_ifd(uint32_t offset) {
    const uint16_t n = file_.read_scalar<uint16_t>(offset);
    entries_.resize(n);
    std::vector<uint8_t> raw(12ull * n);
    file_.read_at(offset + 2, raw.data(), raw.size());
    for (uint16_t i = 0; i < n; ++i) {
      const uint8_t* p = raw.data() + 12ull * i;
      IfdEntry& e = entries_[i];
      std::memcpy(&e.tag, p, 2);
      std::memcpy(&e.type, p + 2, 2);
      std::memcpy(&e.count, p + 4, 4);
      std::memcpy(e.raw, p + 8, 4);
    }
  }

  const IfdEntry* find(uint16_t tag) const {
    for (const auto& e : entries_)
      if (e.tag == tag) return &e;
    return nullptr;
  }
  bool has(uint16_t tag) const { return find(tag) != nullptr; }

  std::vector<uint8_t> entry_bytes(const IfdEntry& e) {
    const size_t ts = type_size(e.type);
    if (ts == 0) fail(Errc::corrupt_file, path_ + ": unknown IFD type " + std::to_string(e.type));
    const size_t total = ts * e.count;
    std::vector<uint8_t> out(total);
    if (total <= 4) {
      std::memcpy(out.data(), e.raw, total);
    } else {
      uint32_t off;
      std::memcpy(&off, e.raw, 4);
      file_.read_at(off, out.data(), total);
    }
    return out;
  }

  std::vector<uint64_t> uint_values(uint16_t tag) {
    const IfdEntry* e = find(tag);
    if (!e) fail(Errc::corrupt_file, path_ + ": missing required tag " + std::to_string(tag));
    const auto bytes = entry_bytes(*e);
    std::vector<uint64_t> out(e->count);
    for (uint32_t i = 0; i < e->count; ++i) {
      switch (e->type) {
        case 1: out[i] = bytes[i]; break;
        case 3: {
          uint16_t v;
          std::memcpy(&v, bytes.data() + 2ull * i, 2);
          out[i] = v;
          break;
        }
        case 4: {
          uint32_t v;
          std::memcpy(&v, bytes.data() + 4ull * i, 4);
          out[i] = v;
          break;
        }
        default:
          fail(Errc::corrupt_file, path_ + ": tag " + std::to_string(tag) + " has non-integer type");
      }
    }
    return out;
  }

  uint64_t uint_value(uint16_t tag) {
    const auto v = uint_values(tag);
    if (v.empty()) fail(Errc::corrupt_file, path_ + ": empty tag " + std::to_string(tag));
    return v[0];
  }

  uint64_t uint_value_or(uint16_t tag, uint64_t dflt) { return has(tag) ? uint_value(tag) : dflt; }

  std::vector<uint64_t> uint_values_or(uint16_t tag, std::vector<uint64_t> dflt) {
    return has(tag) ? uint_values(tag) : dflt;
  }

  std::vector<double> double_values(uint16_t tag) {
    const IfdEntry* e = find(tag);
    if (!e) fail(Errc::corrupt_file, path_ + ": missing tag " + std::to_string(tag));
    if (e->type != 12) fail(Errc::corrupt_file, path_ + ": tag " + std::to_string(tag) + " not DOUBLE");
    const auto bytes = entry_bytes(*e);
    std::vector<double> out(e->count);
    std::memcpy(out.data(), bytes.data(), 8ull * e->count);
    return out;
  }

  std::string path_;
  FileReader file_;
  std::vector<IfdEntry> entries_;
};

bool parse_flat_raster(const std::string& path, Raster&, std::shared_ptr<const RasterBackend>& backend,
                       GeoTransform& geo, int64_t& width, int64_t& height, int& band_count) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) fail(Errc::corrupt_file, path + ": empty file");
  std::istringstream hdr(line);
  std::string magic, version;
  hdr >> magic >> version;
  if (magic != "FLATRASTER") return false;
  if (version != "v1") fail(Errc::unsupported_format, path + ": FlatRaster version " + version);
  int64_t w = 0, h = 0;
  int bands = 0;
  GeoTransform g;
  hdr >> w >> h >> bands >> g.origin_x >> g.origin_y >> g.pixel_size_x >> g.pixel_size_y;
  if (!hdr || w < 1 || h < 1 || bands < 1 || g.pixel_size_x <= 0 || g.pixel_size_y <= 0)
    fail(Errc::corrupt_file, path + ": malformed FlatRaster header");
  auto flat = std::make_shared<FlatBackend>();
  flat->width = w;
  flat->height = h;
  flat->bands = bands;
  flat->data.reserve(static_cast<size_t>(w) * h * bands);
  for (int64_t row = 0; row < static_cast<int64_t>(h) * bands; ++row) {
    if (!std::getline(in, line)) fail(Errc::corrupt_file, path + ": truncated pixel data");
    const auto cells = csv::split_line(line);
    if (static_cast<int64_t>(cells.size()) != w)
      fail(Errc::corrupt_file, path + ": row with " + std::to_string(cells.size()) + " values, want " +
                                   std::to_string(w));
    for (const auto& cell : cells) flat->data.push_back(static_cast<float>(csv::parse_value(cell)));
  }
  width = w;
  height = h;
  band_count = bands;
  geo = g;
  backend = std::move(flat);
  return true;
}

} // namespace

Raster Raster::open(const std::string& path) {
  Raster r;
  r.path_ = path;
  {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) fail(Errc::io_error, "cannot open " + path);
    char head[10] = {};
    probe.read(head, sizeof(head));
    if (std::memcmp(head, "FLATRASTER", 10) == 0) {
      if (!parse_flat_raster(path, r, r.backend_, r.geo_, r.width_, r.height_, r.band_count_))
        fail(Errc::corrupt_file, path + ": FlatRaster parse failed");
      r.sample_type_ = SampleType::f32;
      return r;
    }
  }
  auto tiff = std::make_shared<TiffBackend>();
  tiff->path = path;
  TiffParser parser(path);
  parser.parse(tiff->lay, r.geo_);
  r.width_ = tiff->lay.width;
  r.height_ = tiff->lay.height;
  r.band_count_ = tiff->lay.spp;
  r.sample_type_ = tiff->lay.sample_type;
  r.backend_ = std::move(tiff);
  return r;
}

ImageTensor Raster::read_window(int64_t row0, int64_t col0, int64_t h, int64_t w,
                                const std::vector<int>& bands) const {
  if (h < 1 || w < 1) fail(Errc::invalid_argument, "window must be at least 1x1");
  if (row0 < 0 || col0 < 0 || row0 + h > height_ || col0 + w > width_)
    fail(Errc::window_clipped, "window [" + std::to_string(row0) + "," + std::to_string(col0) +
                                   "]+" + std::to_string(h) + "x" + std::to_string(w) +
                                   " outside raster " + std::to_string(height_) + "x" +
                                   std::to_string(width_));
  std::vector<int> sel = bands;
  if (sel.empty())
    for (int b = 0; b < band_count_; ++b) sel.push_back(b);
  for (int b : sel)
    if (b < 0 || b >= band_count_)
      fail(Errc::invalid_argument, "band " + std::to_string(b + 1) + " out of range (raster has " +
                                       std::to_string(band_count_) + ")");
  ImageTensor out({static_cast<uint32_t>(h), static_cast<uint32_t>(w), static_cast<uint32_t>(sel.size())});
  backend_->read_window(row0, col0, h, w, sel, out.data.data());
  return out;
}

void write_flat_raster(const std::string& path, const ImageTensor& tensor, const GeoTransform& geo) {
  check_tensor(tensor);
  if (tensor.rank() != 3) fail(Errc::invalid_argument, "FlatRaster wants an H x W x C tensor");
  std::ofstream out(path);
  if (!out) fail(Errc::io_error, "cannot write " + path);
  const uint32_t h = tensor.dims[0], w = tensor.dims[1], c = tensor.dims[2];
  out << "FLATRASTER v1 " << w << " " << h << " " << c << " " << csv::format_double(geo.origin_x)
      << " " << csv::format_double(geo.origin_y) << " " << csv::format_double(geo.pixel_size_x)
      << " " << csv::format_double(geo.pixel_size_y) << "\n";
  for (uint32_t band = 0; band < c; ++band) {
    for (uint32_t r = 0; r < h; ++r) {
      for (uint32_t col = 0; col < w; ++col)
        out << csv::format_float(tensor.at(r, col, band)) << (col + 1 == w ? "" : ",");
      out << "\n";
    }
  }
  if (!out) fail(Errc::io_error, "short write: " + path);
}

} // namespace causalchips::geo
