#pragma once

#include "causalchips/causal/frame.hpp"
#include "causalchips/causal/logistic.hpp"
#include "causalchips/core/tensor.hpp"
#include "causalchips/embed/embedding.hpp"

#include <Eigen/Core>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace causalchips::causal {

/// Self-normalized inverse-propensity-weighted contrast.
/// Errors: NoTreated, NoControl; requires ehat strictly inside (0,1).
double hajek_ate(const std::vector<int>& w, const Eigen::VectorXd& y, const Eigen::VectorXd& ehat);

struct ConfoundConfig {
  double l2_lambda = 1.0;
  double clip_eps = 0.01;
  int n_boot = 200;
  int folds = 5;
  uint64_t seed = 0;
  bool cluster_bootstrap = true; // false = plain unit bootstrap
  int threads = 1;
};

struct BootstrapResult {
  double tau = 0.0;
  double se = 0.0;
  Eigen::VectorXd replicate_taus;
};

/// Cluster bootstrap over unique image keys (units sharing an image move
/// together); each replicate refits the propensity model and recomputes the
/// Hajek contrast. Replicate r uses its own generator seeded seed + r.
BootstrapResult bootstrap_ate(const CausalFrame& frame, const Eigen::MatrixXd& phi,
                              const ConfoundConfig& config);

struct SalienceGrid {
  int patch = 0;
  int stride = 0;
  Eigen::MatrixXd values; // occlusion grid, |delta predicted probability|
};

/// Occlusion salience: for each grid cell, overwrite a patch with `fill`
/// (default: per-band mean of the image), re-embed, and score the change in
/// the prediction. `predict` maps an embedding to a probability.
SalienceGrid occlusion_salience(const ImageTensor& img, const embed::KernelBank& bank,
                                const std::function<double(const Eigen::VectorXd&)>& predict,
                                int patch, int stride, std::optional<float> fill = std::nullopt,
                                bool standardize = true);

/// Occlusion salience against a propensity model over [1, x_tab, phi].
SalienceGrid salience_map(const ImageTensor& img, const embed::KernelBank& bank,
                          const PropensityModel& model, const Eigen::VectorXd& x_tab, int patch,
                          int stride, std::optional<float> fill = std::nullopt,
                          bool standardize = true);

struct ConfoundingResult {
  double tau_hajek = 0.0;
  double tau_hajek_se = 0.0;
  PropensityMetrics metrics;
  Eigen::VectorXd ehat;
  PropensityModel model; // raw-feature space, for salience / reuse
  Eigen::MatrixXd features; // [1 | x | phi] as fit
};

/// Full pipeline: embed -> fit -> evaluate -> hajek -> bootstrap.
/// The frame must already be clean (see drop_na / check_frame).
ConfoundingResult analyze_image_confounding(const CausalFrame& frame,
                                            const embed::TensorLoader& loader,
                                            const embed::EmbeddingConfig& embed_config,
                                            const ConfoundConfig& config);

/// Same pipeline with embeddings already in hand (rows aligned with frame).
ConfoundingResult analyze_image_confounding(const CausalFrame& frame, const Eigen::MatrixXd& phi,
                                            const ConfoundConfig& config);

} // namespace causalchips::causal
