#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace causalchips::causal {

/// Ridge logistic propensity model. Coefficients act on the feature layout
/// they were fit with ([1, x, phi] in the pipeline); the intercept (column 0)
/// is never penalized.
struct PropensityModel {
  Eigen::VectorXd coefficients;
  double l2_lambda = 1.0;
  double clip_eps = 0.01;
};

/// Newton with step-halving on the ridge-penalized negative log-likelihood;
/// converges to gradient norm <= 1e-8 within 100 iterations or raises
/// Separation. Column 0 of features must be the intercept.
PropensityModel fit_propensity(const Eigen::MatrixXd& features, const std::vector<int>& w,
                               double l2_lambda, double clip_eps = 0.01,
                               const Eigen::VectorXd* warm_start = nullptr);

/// Logistic link, clipped into [eps, 1-eps].
Eigen::VectorXd predict_propensity(const PropensityModel& model, const Eigen::MatrixXd& features);

/// Column z-scoring that leaves the intercept column alone. Zero-variance
/// columns keep scale 1 (centered only).
struct FeatureScaler {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
};
FeatureScaler fit_scaler(const Eigen::MatrixXd& features, bool skip_first_column);
Eigen::MatrixXd apply_scaler(const FeatureScaler& s, const Eigen::MatrixXd& features);

/// Fits on z-scored features, then folds the scaling into the returned
/// coefficients so the model acts on raw features.
PropensityModel fit_propensity_standardized(const Eigen::MatrixXd& features, const std::vector<int>& w,
                                            double l2_lambda, double clip_eps = 0.01,
                                            const PropensityModel* warm_start = nullptr);

struct PropensityMetrics {
  double nll = 0.0;      // mean held-out negative log-likelihood
  double accuracy = 0.0; // at 0.5 threshold
  double auc = 0.0;      // rank statistic, midranks for ties
};

/// Seeded, w-stratified k-fold cross-validation of the standardized fit.
PropensityMetrics evaluate_propensity(const Eigen::MatrixXd& features, const std::vector<int>& w,
                                      int folds, uint64_t seed, double l2_lambda,
                                      double clip_eps = 0.01);

/// AUC of scores against binary labels, with tie correction.
double rank_auc(const Eigen::VectorXd& scores, const std::vector<int>& labels);

} // namespace causalchips::causal
