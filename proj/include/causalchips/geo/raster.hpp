#pragma once

#include "causalchips/core/tensor.hpp"
#include "causalchips/geo/geotransform.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace causalchips::geo {

enum class SampleType { u8, u16, f32 };

/// Open raster with lazily readable pixel windows. Backends: a classic
/// little-endian GeoTIFF subset (strips or tiles, compression none or
/// DEFLATE, uint8/uint16/float32, chunky planar layout) and the FlatRaster
/// text format used as a test fixture.
class Raster {
public:
  /// Errors: UnsupportedFormat, MissingGeoTags, CorruptFile, IoError.
  static Raster open(const std::string& path);

  const std::string& path() const { return path_; }
  int64_t width() const { return width_; }
  int64_t height() const { return height_; }
  int band_count() const { return band_count_; }
  SampleType sample_type() const { return sample_type_; }
  const GeoTransform& geo() const { return geo_; }

  /// Reads rows [row0, row0+h) x cols [col0, col0+w) of the given 0-based
  /// bands (empty = all) as an h x w x nbands float tensor. The window must
  /// lie fully inside the raster. Thread-safe for concurrent calls.
  ImageTensor read_window(int64_t row0, int64_t col0, int64_t h, int64_t w,
                          const std::vector<int>& bands = {}) const;

private:
  friend struct RasterImpl;
  std::string path_;
  int64_t width_ = 0;
  int64_t height_ = 0;
  int band_count_ = 0;
  SampleType sample_type_ = SampleType::f32;
  GeoTransform geo_;
  std::shared_ptr<const struct RasterBackend> backend_;
};

/// FlatRaster fixture writer. tensor is H x W x C; values are written as
/// float32 text.
void write_flat_raster(const std::string& path, const ImageTensor& tensor, const GeoTransform& geo);

} // namespace causalchips::geo
