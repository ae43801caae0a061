#pragma once

#include <stdexcept>
#include <string>

namespace causalchips {

enum class Errc {
  // io / format
  io_error,
  unsupported_format,
  missing_geo_tags,
  corrupt_file,
  // geochip
  point_outside_raster,
  window_clipped,
  // recordstore
  duplicate_key,
  empty_input,
  crc_mismatch,
  truncated_file,
  key_not_found,
  index_missing,
  // embed
  image_too_small,
  channel_mismatch,
  sequence_too_short,
  heterogeneous_dims,
  unsupported_rank,
  // confound / hetero
  separation,
  degenerate_features,
  too_few_units,
  no_treated,
  no_control,
  degenerate_resample,
  empty_cluster,
  non_convergence,
  dim_mismatch,
  all_dropped,
  invalid_argument,
};

const char* errc_name(Errc c);

/// Single exception type carrying a machine-readable code plus a message.
class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
  Errc code() const { return code_; }

private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

} // namespace causalchips
