#include "causalchips/core/pgm.hpp"

#include "causalchips/core/error.hpp"

#include <cmath>
#include <fstream>

namespace causalchips {

void write_pgm(const std::string& path, const Eigen::MatrixXd& values) {
  std::ofstream out(path);
  if (!out) fail(Errc::io_error, "cannot write " + path);
  const double maxv = values.size() ? values.maxCoeff() : 0.0;
  out << "P2\n" << values.cols() << " " << values.rows() << "\n255\n";
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      int v = 0;
      if (maxv > 0.0) v = static_cast<int>(std::lround(255.0 * values(r, c) / maxv));
      if (v < 0) v = 0;
      if (v > 255) v = 255;
      out << v << (c + 1 == values.cols() ? "" : " ");
    }
    out << "\n";
  }
  if (!out) fail(Errc::io_error, "short write: " + path);
}

} // namespace causalchips
