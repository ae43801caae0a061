#include "causalchips/causal/frame.hpp"

#include "causalchips/core/csv.hpp"
#include "causalchips/core/error.hpp"

#include <cmath>
#include <fstream>

namespace causalchips::causal {

CausalFrame read_frame_csv(const std::string& path) {
  const auto table = csv::read_table(path);
  const auto key_col = table.column("key");
  const auto w_col = table.column("w");
  const auto y_col = table.column("y");
  if (!key_col || !w_col || !y_col)
    fail(Errc::corrupt_file, path + ": needs key,w,y columns");
  const auto lon_col = table.column("lon");
  const auto lat_col = table.column("lat");

  std::vector<size_t> x_cols;
  for (size_t i = 0; i < table.header.size(); ++i) {
    const auto& name = table.header[i];
    if (name == "key" || name == "w" || name == "y" || name == "lon" || name == "lat") continue;
    x_cols.push_back(i);
  }

  const size_t n = table.rows.size();
  CausalFrame f;
  f.keys.reserve(n);
  f.w.resize(static_cast<Eigen::Index>(n));
  f.y.resize(static_cast<Eigen::Index>(n));
  f.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(x_cols.size()));
  if (lon_col && lat_col) {
    f.lon.resize(n);
    f.lat.resize(n);
  }
  for (size_t i = 0; i < n; ++i) {
    const auto& row = table.rows[i];
    f.keys.push_back(row[*key_col]);
    f.w[static_cast<Eigen::Index>(i)] = csv::parse_value(row[*w_col]);
    f.y[static_cast<Eigen::Index>(i)] = csv::parse_value(row[*y_col]);
    if (lon_col && lat_col) {
      f.lon[i] = csv::parse_value(row[*lon_col]);
      f.lat[i] = csv::parse_value(row[*lat_col]);
    }
    for (size_t j = 0; j < x_cols.size(); ++j)
      f.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          csv::parse_value(row[x_cols[j]]);
  }
  return f;
}

void write_frame_csv(const std::string& path, const CausalFrame& frame) {
  std::ofstream out(path);
  if (!out) fail(Errc::io_error, "cannot write " + path);
  out << "key,w,y";
  if (frame.has_coords()) out << ",lon,lat";
  for (int j = 0; j < frame.x.cols(); ++j) out << ",x" << (j + 1);
  out << "\n";
  for (size_t i = 0; i < frame.n(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    out << frame.keys[i] << "," << csv::format_double(frame.w[idx]) << ","
        << csv::format_double(frame.y[idx]);
    if (frame.has_coords())
      out << "," << csv::format_double(frame.lon[i]) << "," << csv::format_double(frame.lat[i]);
    for (int j = 0; j < frame.x.cols(); ++j) out << "," << csv::format_double(frame.x(idx, j));
    out << "\n";
  }
  if (!out) fail(Errc::io_error, "short write: " + path);
}

DropResult drop_na(const CausalFrame& frame, const std::set<std::string>* available_keys) {
  const size_t n = frame.n();
  std::vector<size_t> keep;
  DropResult res;
  for (size_t i = 0; i < n; ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    bool ok = std::isfinite(frame.w[idx]) && std::isfinite(frame.y[idx]) && !frame.keys[i].empty();
    for (int j = 0; ok && j < frame.x.cols(); ++j) ok = std::isfinite(frame.x(idx, j));
    if (ok && available_keys) ok = available_keys->count(frame.keys[i]) > 0;
    if (ok)
      keep.push_back(i);
    else
      res.dropped.push_back(i);
  }
  if (keep.empty()) fail(Errc::all_dropped, "every unit had missing values");

  CausalFrame& c = res.clean;
  c.w.resize(static_cast<Eigen::Index>(keep.size()));
  c.y.resize(static_cast<Eigen::Index>(keep.size()));
  c.x.resize(static_cast<Eigen::Index>(keep.size()), frame.x.cols());
  if (frame.has_coords()) {
    c.lon.resize(keep.size());
    c.lat.resize(keep.size());
  }
  for (size_t k = 0; k < keep.size(); ++k) {
    const size_t i = keep[k];
    const auto src = static_cast<Eigen::Index>(i);
    const auto dst = static_cast<Eigen::Index>(k);
    c.keys.push_back(frame.keys[i]);
    c.w[dst] = frame.w[src];
    c.y[dst] = frame.y[src];
    c.x.row(dst) = frame.x.row(src);
    if (frame.has_coords()) {
      c.lon[k] = frame.lon[i];
      c.lat[k] = frame.lat[i];
    }
  }
  return res;
}

std::vector<size_t> drop_constant_x_columns(CausalFrame& frame) {
  std::vector<size_t> kept;
  for (int j = 0; j < frame.x.cols(); ++j) {
    const double mean = frame.x.col(j).mean();
    const double var = (frame.x.col(j).array() - mean).square().sum();
    if (var > 0.0) kept.push_back(static_cast<size_t>(j));
  }
  if (static_cast<Eigen::Index>(kept.size()) == frame.x.cols()) return kept;
  Eigen::MatrixXd x(frame.x.rows(), static_cast<Eigen::Index>(kept.size()));
  for (size_t j = 0; j < kept.size(); ++j)
    x.col(static_cast<Eigen::Index>(j)) = frame.x.col(static_cast<Eigen::Index>(kept[j]));
  frame.x = std::move(x);
  return kept;
}

void check_frame(const CausalFrame& frame) {
  const auto n = static_cast<Eigen::Index>(frame.n());
  if (n == 0) fail(Errc::empty_input, "frame has no units");
  if (frame.w.size() != n || frame.y.size() != n || frame.x.rows() != n)
    fail(Errc::invalid_argument, "frame vectors disagree on N");
  int treated = 0, control = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (frame.w[i] == 1.0)
      ++treated;
    else if (frame.w[i] == 0.0)
      ++control;
    else
      fail(Errc::invalid_argument, "w must be 0/1 after drop_na, found " + std::to_string(frame.w[i]));
    if (!std::isfinite(frame.y[i])) fail(Errc::invalid_argument, "non-finite outcome");
  }
  if (!frame.x.allFinite()) fail(Errc::invalid_argument, "non-finite covariate");
  if (treated == 0) fail(Errc::no_treated, "no treated units");
  if (control == 0) fail(Errc::no_control, "no control units");
}

std::vector<int> w_as_int(const CausalFrame& frame) {
  std::vector<int> w(frame.n());
  for (size_t i = 0; i < frame.n(); ++i) w[i] = frame.w[static_cast<Eigen::Index>(i)] == 1.0 ? 1 : 0;
  return w;
}

} // namespace causalchips::causal
