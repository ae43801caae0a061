#include "causalchips/causal/logistic.hpp"

#include "causalchips/core/error.hpp"
#include "causalchips/core/rng.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace causalchips::causal {

namespace {

constexpr double kGradTol = 1e-8;
constexpr int kMaxNewtonIters = 100;

double softplus(double s) { return s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }

double sigmoid(double s) { return s >= 0.0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s)); }

// ridge-penalized logistic negative log-likelihood (intercept unpenalized)
double objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& w, const Eigen::VectorXd& beta,
                 double lambda) {
  const Eigen::VectorXd s = X * beta;
  double f = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) f += softplus(s[i]) - w[i] * s[i];
  if (lambda > 0.0 && beta.size() > 1) f += 0.5 * lambda * beta.tail(beta.size() - 1).squaredNorm();
  return f;
}

void check_inputs(const Eigen::MatrixXd& features, const std::vector<int>& w) {
  if (static_cast<size_t>(features.rows()) != w.size())
    fail(Errc::invalid_argument, "feature rows and treatment length disagree");
  if (features.rows() < 2) fail(Errc::too_few_units, "need at least 2 units");
  if (!features.allFinite()) fail(Errc::degenerate_features, "non-finite feature value");
  int n1 = 0;
  for (int v : w) n1 += v;
  if (n1 == 0) fail(Errc::no_treated, "no treated units");
  if (n1 == static_cast<int>(w.size())) fail(Errc::no_control, "no control units");
}

} // namespace

PropensityModel fit_propensity(const Eigen::MatrixXd& X, const std::vector<int>& w, double l2_lambda,
                               double clip_eps, const Eigen::VectorXd* warm_start) {
  check_inputs(X, w);
  if (l2_lambda < 0.0) fail(Errc::invalid_argument, "lambda must be >= 0");
  if (!(clip_eps > 0.0 && clip_eps < 0.5)) fail(Errc::invalid_argument, "clip_eps must be in (0, 0.5)");
  const Eigen::Index p = X.cols();
  Eigen::VectorXd wv(X.rows());
  for (Eigen::Index i = 0; i < wv.size(); ++i) wv[i] = w[static_cast<size_t>(i)];

  Eigen::VectorXd beta = warm_start && warm_start->size() == p ? *warm_start : Eigen::VectorXd::Zero(p);
  Eigen::VectorXd reg = Eigen::VectorXd::Constant(p, l2_lambda);
  reg[0] = 0.0; // intercept unpenalized

  double f = objective(X, wv, beta, l2_lambda);
  for (int iter = 0; iter < kMaxNewtonIters; ++iter) {
    const Eigen::VectorXd s = X * beta;
    Eigen::VectorXd prob(s.size()), var(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      prob[i] = sigmoid(s[i]);
      var[i] = prob[i] * (1.0 - prob[i]);
    }
    Eigen::VectorXd grad = X.transpose() * (prob - wv);
    grad += reg.cwiseProduct(beta);
    if (grad.norm() <= kGradTol) {
      if (!beta.allFinite()) fail(Errc::separation, "coefficients diverged");
      return {beta, l2_lambda, clip_eps};
    }
    Eigen::MatrixXd H = X.transpose() * var.asDiagonal() * X;
    H.diagonal() += reg;
    const Eigen::VectorXd dir = H.ldlt().solve(grad);
    double step = 1.0;
    bool moved = false;
    for (int halve = 0; halve < 60; ++halve, step *= 0.5) {
      const Eigen::VectorXd cand = beta - step * dir;
      const double fc = objective(X, wv, cand, l2_lambda);
      if (std::isfinite(fc) && fc <= f) {
        beta = cand;
        f = fc;
        moved = true;
        break;
      }
    }
    if (!moved) break; // no descent direction left
  }
  fail(Errc::separation,
       "logistic fit did not reach gradient tolerance; data may be separable — try a larger ridge lambda");
}

Eigen::VectorXd predict_propensity(const PropensityModel& model, const Eigen::MatrixXd& X) {
  if (X.cols() != model.coefficients.size())
    fail(Errc::dim_mismatch, "features have " + std::to_string(X.cols()) + " columns, model has " +
                                 std::to_string(model.coefficients.size()));
  Eigen::VectorXd s = X * model.coefficients;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    s[i] = std::clamp(sigmoid(s[i]), model.clip_eps, 1.0 - model.clip_eps);
  return s;
}

FeatureScaler fit_scaler(const Eigen::MatrixXd& X, bool skip_first_column) {
  FeatureScaler s;
  s.mean = Eigen::VectorXd::Zero(X.cols());
  s.scale = Eigen::VectorXd::Ones(X.cols());
  const Eigen::Index j0 = skip_first_column ? 1 : 0;
  for (Eigen::Index j = j0; j < X.cols(); ++j) {
    s.mean[j] = X.col(j).mean();
    const double var = (X.col(j).array() - s.mean[j]).square().sum() / static_cast<double>(X.rows());
    const double sd = std::sqrt(var);
    if (sd > 0.0) s.scale[j] = sd;
  }
  return s;
}

Eigen::MatrixXd apply_scaler(const FeatureScaler& s, const Eigen::MatrixXd& X) {
  Eigen::MatrixXd out = X;
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    out.col(j) = (X.col(j).array() - s.mean[j]) / s.scale[j];
  return out;
}

PropensityModel fit_propensity_standardized(const Eigen::MatrixXd& X, const std::vector<int>& w,
                                            double l2_lambda, double clip_eps,
                                            const PropensityModel* warm_start) {
  const FeatureScaler scaler = fit_scaler(X, /*skip_first_column=*/true);
  Eigen::MatrixXd Xs = apply_scaler(scaler, X);
  Xs.col(0).setOnes(); // scaler leaves column 0 alone, keep it exact

  Eigen::VectorXd warm_std;
  const Eigen::VectorXd* warm_ptr = nullptr;
  if (warm_start && warm_start->coefficients.size() == X.cols()) {
    // translate raw-space coefficients into this sample's standardized space
    const Eigen::VectorXd& raw = warm_start->coefficients;
    warm_std = raw.cwiseProduct(scaler.scale);
    warm_std[0] = raw[0];
    for (Eigen::Index j = 1; j < raw.size(); ++j) warm_std[0] += raw[j] * scaler.mean[j];
    warm_ptr = &warm_std;
  }

  PropensityModel m = fit_propensity(Xs, w, l2_lambda, clip_eps, warm_ptr);
  // unfold z-scoring so coefficients act on raw features
  Eigen::VectorXd raw = m.coefficients.cwiseQuotient(scaler.scale);
  raw[0] = m.coefficients[0];
  for (Eigen::Index j = 1; j < raw.size(); ++j) raw[0] -= m.coefficients[j] * scaler.mean[j] / scaler.scale[j];
  m.coefficients = std::move(raw);
  return m;
}

double rank_auc(const Eigen::VectorXd& scores, const std::vector<int>& labels) {
  const size_t n = labels.size();
  if (scores.size() != static_cast<Eigen::Index>(n))
    fail(Errc::invalid_argument, "scores/labels length mismatch");
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[static_cast<Eigen::Index>(a)] < scores[static_cast<Eigen::Index>(b)]; });
  std::vector<double> rank(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && scores[static_cast<Eigen::Index>(order[j + 1])] ==
                            scores[static_cast<Eigen::Index>(order[i])])
      ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0; // midrank, 1-based
    for (size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double rank_sum = 0.0;
  size_t n1 = 0;
  for (size_t k = 0; k < n; ++k)
    if (labels[k] == 1) {
      rank_sum += rank[k];
      ++n1;
    }
  const size_t n0 = n - n1;
  if (n1 == 0) fail(Errc::no_treated, "auc needs a positive class");
  if (n0 == 0) fail(Errc::no_control, "auc needs a negative class");
  return (rank_sum - 0.5 * static_cast<double>(n1) * static_cast<double>(n1 + 1)) /
         (static_cast<double>(n1) * static_cast<double>(n0));
}

PropensityMetrics evaluate_propensity(const Eigen::MatrixXd& X, const std::vector<int>& w, int folds,
                                      uint64_t seed, double l2_lambda, double clip_eps) {
  check_inputs(X, w);
  const size_t n = w.size();
  if (folds < 2) fail(Errc::too_few_units, "need at least 2 folds");
  if (n < 2 * static_cast<size_t>(folds))
    fail(Errc::too_few_units, "need N >= 2k for " + std::to_string(folds) + "-fold evaluation");
  std::vector<size_t> treated, control;
  for (size_t i = 0; i < n; ++i) (w[i] == 1 ? treated : control).push_back(i);
  if (treated.size() < 2 || control.size() < 2)
    fail(Errc::too_few_units, "each class needs at least 2 units for stratified folds");

  // stratified fold assignment: shuffle within class, deal round-robin
  Rng rng(seed);
  rng.shuffle(treated);
  rng.shuffle(control);
  std::vector<int> fold(n, 0);
  for (size_t i = 0; i < treated.size(); ++i) fold[treated[i]] = static_cast<int>(i % folds);
  for (size_t i = 0; i < control.size(); ++i) fold[control[i]] = static_cast<int>(i % folds);

  Eigen::VectorXd ehat(static_cast<Eigen::Index>(n));
  for (int f = 0; f < folds; ++f) {
    std::vector<size_t> train, test;
    for (size_t i = 0; i < n; ++i) (fold[i] == f ? test : train).push_back(i);
    if (test.empty()) continue;
    Eigen::MatrixXd Xt(static_cast<Eigen::Index>(train.size()), X.cols());
    std::vector<int> wt(train.size());
    for (size_t i = 0; i < train.size(); ++i) {
      Xt.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(train[i]));
      wt[i] = w[train[i]];
    }
    const PropensityModel m = fit_propensity_standardized(Xt, wt, l2_lambda, clip_eps);
    Eigen::MatrixXd Xe(static_cast<Eigen::Index>(test.size()), X.cols());
    for (size_t i = 0; i < test.size(); ++i)
      Xe.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(test[i]));
    const Eigen::VectorXd pe = predict_propensity(m, Xe);
    for (size_t i = 0; i < test.size(); ++i) ehat[static_cast<Eigen::Index>(test[i])] = pe[static_cast<Eigen::Index>(i)];
  }

  PropensityMetrics metrics;
  double nll = 0.0;
  size_t correct = 0;
  for (size_t i = 0; i < n; ++i) {
    const double p = ehat[static_cast<Eigen::Index>(i)];
    nll += w[i] == 1 ? -std::log(p) : -std::log(1.0 - p);
    const int pred = p >= 0.5 ? 1 : 0;
    if (pred == w[i]) ++correct;
  }
  metrics.nll = nll / static_cast<double>(n);
  metrics.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  metrics.auc = rank_auc(ehat, w);
  return metrics;
}

} // namespace causalchips::causal
