#pragma once

#include "causalchips/causal/frame.hpp"
#include "causalchips/causal/logistic.hpp"
#include "causalchips/embed/embedding.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace causalchips::causal {

struct HeterogeneityConfig {
  int k_clusters = 2;
  int max_em_iters = 500;
  double tol = 1e-8; // relative change of the penalized log-likelihood
  int n_boot = 200;  // 0 skips the bootstrap outputs
  uint64_t seed = 0;
  double gate_ridge = 1.0;   // lambda on non-intercept gate coefficients
  double conf_level = 0.05;  // lower-bound percentile for cluster probabilities
  int max_restarts = 5;
  int threads = 1;
};

/// Mixture of treatment effects: Y = alpha + x'beta + w * tau_c + eps with
/// latent cluster c gated by softmax(theta' [1, phi~]); fit by EM. Clusters
/// reported sorted by tau ascending.
struct HeterogeneityFit {
  Eigen::VectorXd tau_k;     // K cluster effects, ascending
  Eigen::VectorXd tau_k_sd;  // bootstrap sd (zero when n_boot = 0)
  Eigen::VectorXd pi_mean;   // mean posterior cluster probabilities, sums to 1
  Eigen::VectorXd pi_sd;     // bootstrap sd of pi_mean
  Eigen::VectorXd pi_lower;  // bootstrap percentile lower bound
  Eigen::MatrixXd theta;     // K x (1+D) gate coefficients on standardized phi, last row zero
  Eigen::VectorXd beta;      // intercept + P outcome nuisance coefficients
  double sigma2 = 0.0;
  Eigen::MatrixXd resp;      // N x K posterior responsibilities, rows sum to 1
  double implied_ate = 0.0;  // mean_i sum_k resp_ik tau_k
  Eigen::VectorXd individual_tau; // N, sum_k resp_ik tau_k
  std::vector<size_t> dropped;    // filled by the orchestration layer

  FeatureScaler phi_scaler;  // gate standardization, needed for new units
  double loglik = 0.0;       // final penalized log-likelihood
  std::vector<double> loglik_trace; // one entry per EM iteration
  int em_iters = 0;
  int restarts_used = 0;
};

/// Errors: EmptyCluster (after max_restarts reseeded attempts),
/// NonConvergence, TooFewUnits, NoTreated/NoControl.
/// `keys` (optional) defines the bootstrap clusters; null means per-unit.
HeterogeneityFit fit_effect_clusters(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& x,
                                     const std::vector<int>& w, const Eigen::VectorXd& y,
                                     const HeterogeneityConfig& config,
                                     const std::vector<std::string>* keys = nullptr);

double implied_ate(const HeterogeneityFit& fit);

/// Gate (prior) cluster probabilities for new units from their embeddings.
/// Rows sum to 1. Error: DimMismatch.
Eigen::MatrixXd transportability(const HeterogeneityFit& fit, const Eigen::MatrixXd& new_phi);

/// drop_na -> embed -> fit. The input frame may contain missing values.
struct HeteroAnalysis {
  HeterogeneityFit fit;
  CausalFrame clean;        // frame after drop_na
  embed::EmbeddingMatrix phi; // aligned with clean
};
HeteroAnalysis analyze_image_heterogeneity(const CausalFrame& frame, const embed::TensorLoader& loader,
                                           const std::vector<std::string>& available_keys,
                                           const embed::EmbeddingConfig& embed_config,
                                           const HeterogeneityConfig& config);

} // namespace causalchips::causal
