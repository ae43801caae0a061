#include "causalchips/geo/chip.hpp"

#include "causalchips/core/csv.hpp"
#include "causalchips/core/error.hpp"
#include "causalchips/core/parallel.hpp"
#include "causalchips/record/record_file.hpp"

#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>

namespace fs = std::filesystem;

namespace causalchips::geo {

ImageTensor extract_chip(const Raster& raster, const ChipRequest& req, const ChipOptions& opts) {
  if (req.width_px < 1) fail(Errc::invalid_argument, "width_px must be >= 1");
  if (req.key.empty()) fail(Errc::invalid_argument, "chip request without key");
  const PixelRC center = world_to_pixel(raster.geo(), req.lon, req.lat);
  if (center.row < 0 || center.col < 0 || center.row >= raster.height() ||
      center.col >= raster.width())
    fail(Errc::point_outside_raster, "key '" + req.key + "': center pixel (" +
                                         std::to_string(center.row) + "," +
                                         std::to_string(center.col) + ") outside " +
                                         raster.path());
  const int64_t half = req.width_px / 2;
  const int64_t row0 = center.row - half;
  const int64_t col0 = center.col - half;
  const int64_t wpx = req.width_px;

  std::vector<int> sel = req.bands;
  if (sel.empty())
    for (int b = 0; b < raster.band_count(); ++b) sel.push_back(b);

  const bool clipped = row0 < 0 || col0 < 0 || row0 + wpx > raster.height() ||
                       col0 + wpx > raster.width();
  if (!clipped) return raster.read_window(row0, col0, wpx, wpx, sel);
  if (!opts.pad)
    fail(Errc::window_clipped, "key '" + req.key + "': window extends past raster edge (use --pad)");

  ImageTensor out({static_cast<uint32_t>(wpx), static_cast<uint32_t>(wpx),
                   static_cast<uint32_t>(sel.size())});
  std::fill(out.data.begin(), out.data.end(), *opts.pad);
  const int64_t r_lo = std::max<int64_t>(row0, 0);
  const int64_t r_hi = std::min<int64_t>(row0 + wpx, raster.height());
  const int64_t c_lo = std::max<int64_t>(col0, 0);
  const int64_t c_hi = std::min<int64_t>(col0 + wpx, raster.width());
  const ImageTensor inner = raster.read_window(r_lo, c_lo, r_hi - r_lo, c_hi - c_lo, sel);
  for (int64_t r = r_lo; r < r_hi; ++r)
    for (int64_t c = c_lo; c < c_hi; ++c)
      for (size_t b = 0; b < sel.size(); ++b)
        out.at(static_cast<size_t>(r - row0), static_cast<size_t>(c - col0), b) =
            inner.at(static_cast<size_t>(r - r_lo), static_cast<size_t>(c - c_lo), b);
  return out;
}

size_t ExtractReport::matched() const {
  size_t n = 0;
  for (const auto& e : entries)
    if (e.raster_index >= 0) ++n;
  return n;
}

std::string chip_csv_name(const std::string& key, int band_one_based) {
  return "Key" + key + "_BAND" + std::to_string(band_one_based) + ".csv";
}

void write_chip_csv(const std::string& path, const float* values, int width) {
  std::ofstream out(path);
  if (!out) fail(Errc::io_error, "cannot write " + path);
  for (int c = 0; c < width; ++c) out << "c" << (c + 1) << (c + 1 == width ? "" : ",");
  out << "\n";
  for (int r = 0; r < width; ++r) {
    for (int c = 0; c < width; ++c)
      out << csv::format_float(values[r * width + c]) << (c + 1 == width ? "" : ",");
    out << "\n";
  }
  if (!out) fail(Errc::io_error, "short write: " + path);
}

std::vector<float> read_chip_csv(const std::string& path, int& width) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) fail(Errc::corrupt_file, path + ": empty chip csv");
  width = static_cast<int>(csv::split_line(line).size());
  std::vector<float> out;
  out.reserve(static_cast<size_t>(width) * width);
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = csv::split_line(line);
    if (static_cast<int>(cells.size()) != width)
      fail(Errc::corrupt_file, path + ": ragged row " + std::to_string(rows + 2));
    for (const auto& cell : cells) out.push_back(static_cast<float>(csv::parse_value(cell)));
    ++rows;
  }
  if (rows != width) fail(Errc::corrupt_file, path + ": " + std::to_string(rows) +
                                                  " data rows for width " + std::to_string(width));
  return out;
}

ExtractReport extract_from_pool(const std::vector<ChipRequest>& requests,
                                const std::vector<std::string>& pool, const std::string& out_dir,
                                ChipFormat format, const ChipOptions& opts, int threads) {
  if (pool.empty()) fail(Errc::invalid_argument, "raster pool is empty");
  {
    std::set<std::string> keys;
    for (const auto& r : requests)
      if (!keys.insert(r.key).second) fail(Errc::duplicate_key, "request key '" + r.key + "'");
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) fail(Errc::io_error, "cannot create output dir " + out_dir);

  std::vector<Raster> rasters;
  rasters.reserve(pool.size());
  for (const auto& p : pool) rasters.push_back(Raster::open(p));

  ExtractReport report;
  report.entries.resize(requests.size());
  std::vector<ImageTensor> chips(requests.size());

  parallel_for(requests.size(), threads, [&](size_t i) {
    const ChipRequest& req = requests[i];
    ExtractReport::Entry& entry = report.entries[i];
    entry.key = req.key;
    for (size_t ri = 0; ri < rasters.size(); ++ri) {
      try {
        chips[i] = extract_chip(rasters[ri], req, opts);
        entry.raster_index = static_cast<int>(ri);
        break;
      } catch (const Error& e) {
        if (e.code() == Errc::point_outside_raster || e.code() == Errc::window_clipped)
          continue; // not covered here; try the next raster
        entry.error = e.what();
        break;
      }
    }
  });

  if (format == ChipFormat::csv) {
    parallel_for(requests.size(), threads, [&](size_t i) {
      if (report.entries[i].raster_index < 0) return;
      const ImageTensor& chip = chips[i];
      const int wpx = static_cast<int>(chip.dims[0]);
      const int nb = static_cast<int>(chip.dims[2]);
      std::vector<float> plane(static_cast<size_t>(wpx) * wpx);
      for (int b = 0; b < nb; ++b) {
        for (int r = 0; r < wpx; ++r)
          for (int c = 0; c < wpx; ++c) plane[static_cast<size_t>(r) * wpx + c] = chip.at(r, c, b);
        const int band_no =
            requests[i].bands.empty() ? b + 1 : requests[i].bands[static_cast<size_t>(b)] + 1;
        write_chip_csv((fs::path(out_dir) / chip_csv_name(requests[i].key, band_no)).string(),
                       plane.data(), wpx);
      }
    });
  } else {
    // single writer; records appended in request order
    bool any = false;
    for (const auto& e : report.entries)
      if (e.raster_index >= 0) any = true;
    if (any) {
      record::RecordWriter writer((fs::path(out_dir) / kRecordFileName).string());
      for (size_t i = 0; i < requests.size(); ++i)
        if (report.entries[i].raster_index >= 0) writer.add(requests[i].key, chips[i]);
      writer.close();
    }
  }
  return report;
}

} // namespace causalchips::geo
