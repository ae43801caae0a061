#pragma once

#include <Eigen/Core>

#include <set>
#include <string>
#include <vector>

namespace causalchips::causal {

/// Unit-level analysis data. w and y may hold NaN until drop_na has run;
/// estimators require a clean frame (w strictly 0/1, no NaN anywhere).
struct CausalFrame {
  std::vector<std::string> keys; // image key per unit; repeats allowed
  Eigen::VectorXd w;             // treatment, 0/1
  Eigen::VectorXd y;             // outcome
  Eigen::MatrixXd x;             // N x P tabular covariates, P may be 0
  std::vector<double> lon, lat;  // optional, empty when absent

  size_t n() const { return keys.size(); }
  bool has_coords() const { return !lon.empty(); }
};

/// Columns key,w,y then optional lon,lat, then any x columns (any names).
CausalFrame read_frame_csv(const std::string& path);
void write_frame_csv(const std::string& path, const CausalFrame& frame);

struct DropResult {
  CausalFrame clean;
  std::vector<size_t> dropped; // original row indices
};

/// Removes units with missing w, y, any x value, or (when a key set is
/// given) a key that cannot be resolved. Order preserved. Error: AllDropped.
DropResult drop_na(const CausalFrame& frame, const std::set<std::string>* available_keys = nullptr);

/// Drops x columns with zero variance; returns kept column indices.
std::vector<size_t> drop_constant_x_columns(CausalFrame& frame);

/// Clean-frame invariants: no NaN, w in {0,1}, both arms non-empty.
void check_frame(const CausalFrame& frame);

std::vector<int> w_as_int(const CausalFrame& frame);

} // namespace causalchips::causal
