#pragma once

#include <cstddef>
#include <cstdint>

namespace causalchips {

/// CRC-32C (Castagnoli polynomial, reflected). Table-driven.
uint32_t crc32c(const void* data, size_t len, uint32_t seed = 0);

} // namespace causalchips
