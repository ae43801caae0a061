#pragma once

#include <string>

#include <Eigen/Core>

namespace causalchips {

/// Plain-text PGM (P2), 8-bit, values scaled by 255/max. All-zero input
/// writes an all-zero image.
void write_pgm(const std::string& path, const Eigen::MatrixXd& values);

} // namespace causalchips
