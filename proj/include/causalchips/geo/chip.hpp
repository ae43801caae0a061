#pragma once

#include "causalchips/core/tensor.hpp"
#include "causalchips/geo/raster.hpp"

#include <optional>
#include <string>
#include <vector>

namespace causalchips::geo {

/// One geolocated chip to extract. bands holds 0-based indices; empty means
/// all bands.
struct ChipRequest {
  std::string key;
  double lon = 0.0;
  double lat = 0.0;
  int width_px = 1;
  std::vector<int> bands;
};

struct ChipOptions {
  /// When set, windows running past a raster edge are filled with this value
  /// instead of raising WindowClipped.
  std::optional<float> pad;
};

/// Extracts a width_px x width_px x |bands| window whose top-left corner is
/// (center_row - width_px/2, center_col - width_px/2).
/// Errors: PointOutsideRaster (center pixel out of bounds), WindowClipped.
ImageTensor extract_chip(const Raster& raster, const ChipRequest& req, const ChipOptions& opts = {});

enum class ChipFormat { csv, record };

struct ExtractReport {
  struct Entry {
    std::string key;
    int raster_index = -1; // -1 = unmatched
    std::string error;     // per-key failure (io), empty otherwise
  };
  std::vector<Entry> entries;
  size_t matched() const;
};

/// Tries rasters in pool order per request; the first raster containing the
/// point (and, without padding, the full window) wins. Writes per-band
/// Key{key}_BAND{band}.csv files or a single chips.circ record file in
/// out_dir. Unmatched keys are reported, not fatal.
ExtractReport extract_from_pool(const std::vector<ChipRequest>& requests,
                                const std::vector<std::string>& pool, const std::string& out_dir,
                                ChipFormat format, const ChipOptions& opts = {}, int threads = 1);

/// Chip CSV: header c1..cW, then W rows of comma-separated float32 values.
std::string chip_csv_name(const std::string& key, int band_one_based);
void write_chip_csv(const std::string& path, const float* values, int width);
std::vector<float> read_chip_csv(const std::string& path, int& width);

constexpr const char* kRecordFileName = "chips.circ";

} // namespace causalchips::geo
