#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace causalchips {

/// Dense row-major tensor of 32-bit reals, 1 to 5 axes.
/// Images are (H, W, C); image sequences are (T, H, W, C).
struct ImageTensor {
  std::vector<uint32_t> dims;
  std::vector<float> data;

  ImageTensor() = default;
  explicit ImageTensor(std::vector<uint32_t> d);

  size_t rank() const { return dims.size(); }
  size_t size() const { return data.size(); }

  // 3-axis access (H, W, C)
  float& at(size_t r, size_t c, size_t ch) {
    return data[(r * dims[1] + c) * dims[2] + ch];
  }
  float at(size_t r, size_t c, size_t ch) const {
    return data[(r * dims[1] + c) * dims[2] + ch];
  }
  // 4-axis access (T, H, W, C)
  float& at4(size_t t, size_t r, size_t c, size_t ch) {
    return data[((t * dims[1] + r) * dims[2] + c) * dims[3] + ch];
  }
  float at4(size_t t, size_t r, size_t c, size_t ch) const {
    return data[((t * dims[1] + r) * dims[2] + c) * dims[3] + ch];
  }

  bool same_dims(const ImageTensor& other) const { return dims == other.dims; }
  std::string dims_str() const;
};

size_t dims_product(const std::vector<uint32_t>& dims);

/// Throws invalid_argument unless 1..5 positive dims and data length matches.
void check_tensor(const ImageTensor& t);

} // namespace causalchips
