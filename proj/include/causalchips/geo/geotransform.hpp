#pragma once

#include <cmath>
#include <cstdint>
#include <utility>

namespace causalchips::geo {

/// Affine map between world coordinates and pixel indices. origin is the
/// outer corner of pixel (0,0); pixel_size_y is positive and applied
/// downward (latitude decreases as row increases).
struct GeoTransform {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double pixel_size_x = 1.0;
  double pixel_size_y = 1.0;
};

struct PixelRC {
  int64_t row = 0;
  int64_t col = 0;
  bool operator==(const PixelRC&) const = default;
};

/// Floor mapping; results may be negative or past the raster edge.
inline PixelRC world_to_pixel(const GeoTransform& g, double lon, double lat) {
  return {static_cast<int64_t>(std::floor((g.origin_y - lat) / g.pixel_size_y)),
          static_cast<int64_t>(std::floor((lon - g.origin_x) / g.pixel_size_x))};
}

/// Pixel-center world coordinates, (lon, lat).
inline std::pair<double, double> pixel_to_world(const GeoTransform& g, int64_t row, int64_t col) {
  return {g.origin_x + (static_cast<double>(col) + 0.5) * g.pixel_size_x,
          g.origin_y - (static_cast<double>(row) + 0.5) * g.pixel_size_y};
}

} // namespace causalchips::geo
