#include "causalchips/core/tensor.hpp"

#include "causalchips/core/error.hpp"

#include <sstream>

namespace causalchips {

ImageTensor::ImageTensor(std::vector<uint32_t> d) : dims(std::move(d)) {
  data.assign(dims_product(dims), 0.0f);
}

std::string ImageTensor::dims_str() const {
  std::ostringstream oss;
  for (size_t i = 0; i < dims.size(); ++i) {
    if (i) oss << "x";
    oss << dims[i];
  }
  return oss.str();
}

size_t dims_product(const std::vector<uint32_t>& dims) {
  size_t p = 1;
  for (uint32_t d : dims) p *= d;
  return p;
}

void check_tensor(const ImageTensor& t) {
  if (t.dims.empty() || t.dims.size() > 5)
    fail(Errc::invalid_argument, "tensor must have 1..5 axes, got " + std::to_string(t.dims.size()));
  for (uint32_t d : t.dims)
    if (d == 0) fail(Errc::invalid_argument, "tensor axis of size 0");
  if (t.data.size() != dims_product(t.dims))
    fail(Errc::invalid_argument, "tensor data length " + std::to_string(t.data.size()) +
                                     " does not match dims " + t.dims_str());
}

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::io_error: return "IoError";
    case Errc::unsupported_format: return "UnsupportedFormat";
    case Errc::missing_geo_tags: return "MissingGeoTags";
    case Errc::corrupt_file: return "CorruptFile";
    case Errc::point_outside_raster: return "PointOutsideRaster";
    case Errc::window_clipped: return "WindowClipped";
    case Errc::duplicate_key: return "DuplicateKey";
    case Errc::empty_input: return "EmptyInput";
    case Errc::crc_mismatch: return "CrcMismatch";
    case Errc::truncated_file: return "TruncatedFile";
    case Errc::key_not_found: return "KeyNotFound";
    case Errc::index_missing: return "IndexMissing";
    case Errc::image_too_small: return "ImageTooSmall";
    case Errc::channel_mismatch: return "ChannelMismatch";
    case Errc::sequence_too_short: return "SequenceTooShort";
    case Errc::heterogeneous_dims: return "HeterogeneousDims";
    case Errc::unsupported_rank: return "UnsupportedRank";
    case Errc::separation: return "Separation";
    case Errc::degenerate_features: return "DegenerateFeatures";
    case Errc::too_few_units: return "TooFewUnits";
    case Errc::no_treated: return "NoTreated";
    case Errc::no_control: return "NoControl";
    case Errc::degenerate_resample: return "DegenerateResample";
    case Errc::empty_cluster: return "EmptyCluster";
    case Errc::non_convergence: return "NonConvergence";
    case Errc::dim_mismatch: return "DimMismatch";
    case Errc::all_dropped: return "AllDropped";
    case Errc::invalid_argument: return "InvalidArgument";
  }
  return "UnknownError";
}

} // namespace causalchips
