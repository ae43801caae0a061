#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "causalchips/causal/confound.hpp"
#include "causalchips/causal/frame.hpp"
#include "causalchips/causal/logistic.hpp"
#include "causalchips/core/rng.hpp"
#include "causalchips/synth/synth.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace causalchips;
using namespace causalchips::causal;
using testutil::error_code_of;

namespace {

/// Slow reference optimizer for the same penalized objective: plain gradient
/// descent with backtracking, run to a tiny gradient norm. Independent of the
/// Newton path under test.
Eigen::VectorXd reference_ridge_logistic(const Eigen::MatrixXd& X, const std::vector<int>& w,
                                         double lambda) {
  const Eigen::Index p = X.cols();
  Eigen::VectorXd wv(X.rows());
  for (Eigen::Index i = 0; i < wv.size(); ++i) wv[i] = w[static_cast<size_t>(i)];
  auto value = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd s = X * beta;
    double f = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      const double si = s[i];
      f += (si > 0.0 ? si + std::log1p(std::exp(-si)) : std::log1p(std::exp(si))) - wv[i] * si;
    }
    for (Eigen::Index j = 1; j < p; ++j) f += 0.5 * lambda * beta[j] * beta[j];
    return f;
  };
  auto gradient = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd s = X * beta;
    Eigen::VectorXd prob(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i)
      prob[i] = s[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-s[i])) : std::exp(s[i]) / (1.0 + std::exp(s[i]));
    Eigen::VectorXd g = X.transpose() * (prob - wv);
    for (Eigen::Index j = 1; j < p; ++j) g[j] += lambda * beta[j];
    return g;
  };

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double f = value(beta);
  double step = 1.0;
  for (int iter = 0; iter < 200000; ++iter) {
    const Eigen::VectorXd g = gradient(beta);
    if (g.norm() < 1e-10) break;
    double s = step;
    for (int halve = 0; halve < 60; ++halve, s *= 0.5) {
      const Eigen::VectorXd cand = beta - s * g;
      const double fc = value(cand);
      if (fc < f) {
        beta = cand;
        f = fc;
        step = s * 2.0;
        break;
      }
    }
  }
  return beta;
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& cols) {
  Eigen::MatrixXd X(cols.rows(), cols.cols() + 1);
  X.col(0).setOnes();
  X.rightCols(cols.cols()) = cols;
  return X;
}

} // namespace

TEST_CASE("intercept-only fit gives ehat = mean(w)") {
  const int n = 40;
  std::vector<int> w(n, 0);
  for (int i = 0; i < 12; ++i) w[static_cast<size_t>(i)] = 1;
  const Eigen::MatrixXd X = Eigen::MatrixXd::Ones(n, 1);
  const PropensityModel m = fit_propensity(X, w, 1.0);
  const Eigen::VectorXd e = predict_propensity(m, X);
  for (int i = 0; i < n; ++i) CHECK(e[i] == doctest::Approx(0.3).epsilon(1e-10));
}

TEST_CASE("ridge Newton matches the slow reference optimizer") {
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 30 + static_cast<int>(rng.uniform_int(20));
    const int p = 3;
    Eigen::MatrixXd cols(n, p);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < p; ++j) cols(i, j) = rng.normal();
    std::vector<int> w(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
      w[static_cast<size_t>(i)] = rng.uniform() < 1.0 / (1.0 + std::exp(-cols(i, 0))) ? 1 : 0;
    int n1 = 0;
    for (int v : w) n1 += v;
    if (n1 == 0 || n1 == n) continue;
    const Eigen::MatrixXd X = with_intercept(cols);
    const PropensityModel newton = fit_propensity(X, w, 1.0);
    const Eigen::VectorXd slow = reference_ridge_logistic(X, w, 1.0);
    CHECK((newton.coefficients - slow).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("perfect separation: converges with ridge, fails at lambda 0") {
  const int n = 20;
  Eigen::MatrixXd cols(n, 1);
  std::vector<int> w(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    cols(i, 0) = i < n / 2 ? -1.0 - i * 0.1 : 1.0 + i * 0.1;
    w[static_cast<size_t>(i)] = i < n / 2 ? 0 : 1;
  }
  const Eigen::MatrixXd X = with_intercept(cols);
  const PropensityModel ridge = fit_propensity(X, w, 1.0);
  CHECK(ridge.coefficients.allFinite());
  const Eigen::VectorXd slow = reference_ridge_logistic(X, w, 1.0);
  CHECK((ridge.coefficients - slow).cwiseAbs().maxCoeff() < 1e-5);

  CHECK(error_code_of([&] { fit_propensity(X, w, 0.0); }) == Errc::separation);
}

TEST_CASE("predict: zero coefficients, clipping, scalar logistic value") {
  PropensityModel m;
  m.coefficients = Eigen::VectorXd::Zero(2);
  m.clip_eps = 0.01;
  Eigen::MatrixXd X(3, 2);
  X << 1, 0, 1, 5, 1, -2;
  const Eigen::VectorXd e = predict_propensity(m, X);
  for (int i = 0; i < 3; ++i) CHECK(e[i] == 0.5);

  m.coefficients << 0, 10; // score 50 at x = 5
  const Eigen::VectorXd hi = predict_propensity(m, X);
  CHECK(hi[1] == 0.99); // clipped to 1 - eps exactly

  m.coefficients << 0, 0.3;
  Eigen::MatrixXd one(1, 2);
  one << 1, 1; // score 0.3
  CHECK(predict_propensity(m, one)[0] == doctest::Approx(0.574442516811659).epsilon(1e-12));
}

TEST_CASE("cross-validated metrics: ln 2 for constant predictor, AUC extremes") {
  // balanced classes, all-zero feature -> every fold predicts exactly 0.5
  const int n = 40;
  std::vector<int> w(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) w[static_cast<size_t>(i)] = i % 2;
  Eigen::MatrixXd zero_feature = Eigen::MatrixXd::Zero(n, 2);
  zero_feature.col(0).setOnes();
  const PropensityMetrics flat = evaluate_propensity(zero_feature, w, 5, 17, 1.0);
  CHECK(flat.nll == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  CHECK(flat.auc == doctest::Approx(0.5).epsilon(1e-12));

  // perfectly informative feature -> AUC 1.0
  Eigen::MatrixXd strong(n, 2);
  strong.col(0).setOnes();
  for (int i = 0; i < n; ++i) strong(i, 1) = w[static_cast<size_t>(i)] == 1 ? 1.0 : -1.0;
  const PropensityMetrics sharp = evaluate_propensity(strong, w, 5, 17, 1.0);
  CHECK(sharp.auc == 1.0);
  CHECK(sharp.accuracy == 1.0);

  // random noise feature -> AUC near 0.5
  Rng rng(23);
  Eigen::MatrixXd noise(n * 5, 2);
  std::vector<int> wn(static_cast<size_t>(n * 5));
  noise.col(0).setOnes();
  for (int i = 0; i < n * 5; ++i) {
    noise(i, 1) = rng.normal();
    wn[static_cast<size_t>(i)] = i % 2;
  }
  const PropensityMetrics rand_m = evaluate_propensity(noise, wn, 5, 17, 1.0);
  CHECK(rand_m.auc > 0.4);
  CHECK(rand_m.auc < 0.6);

  CHECK(error_code_of([&] { evaluate_propensity(zero_feature, w, 25, 17, 1.0); }) ==
        Errc::too_few_units);
}

TEST_CASE("hajek: hand case, reductions, errors") {
  // ehat = 0.5 everywhere reduces to the difference in means
  {
    std::vector<int> w{1, 0};
    Eigen::VectorXd y(2), e(2);
    y << 3, 1;
    e << 0.5, 0.5;
    CHECK(hajek_ate(w, y, e) == doctest::Approx(2.0).epsilon(1e-12));
  }
  {
    std::vector<int> w{1, 1, 0, 0};
    Eigen::VectorXd y(4), e(4);
    y << 2, 4, 1, 3;
    e << 0.8, 0.4, 0.5, 0.2;
    CHECK(hajek_ate(w, y, e) == doctest::Approx(12.5 / 3.75 - 5.75 / 3.25).epsilon(1e-14));
    CHECK(hajek_ate(w, y, e) == doctest::Approx(1.5641025641025641).epsilon(1e-12));
  }
  {
    std::vector<int> w{1, 1};
    Eigen::VectorXd y(2), e(2);
    y << 1, 2;
    e << 0.5, 0.5;
    CHECK(error_code_of([&] { hajek_ate(w, y, e); }) == Errc::no_control);
  }
}

TEST_CASE("hajek weight normalization, shift and scale equivariance") {
  Rng rng(29);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 4 + static_cast<int>(rng.uniform_int(16));
    std::vector<int> w(static_cast<size_t>(n));
    Eigen::VectorXd y(n), e(n);
    int n1 = 0;
    for (int i = 0; i < n; ++i) {
      w[static_cast<size_t>(i)] = rng.uniform() < 0.5 ? 1 : 0;
      n1 += w[static_cast<size_t>(i)];
      y[i] = rng.normal() * 3.0;
      e[i] = 0.05 + 0.9 * rng.uniform();
    }
    if (n1 == 0 || n1 == n) continue;

    // implied treated weights sum to exactly 1 (same for controls)
    double den1 = 0.0, den0 = 0.0;
    for (int i = 0; i < n; ++i)
      (w[static_cast<size_t>(i)] == 1 ? den1 : den0) +=
          w[static_cast<size_t>(i)] == 1 ? 1.0 / e[i] : 1.0 / (1.0 - e[i]);
    double sum1 = 0.0, sum0 = 0.0;
    for (int i = 0; i < n; ++i) {
      if (w[static_cast<size_t>(i)] == 1)
        sum1 += (1.0 / e[i]) / den1;
      else
        sum0 += (1.0 / (1.0 - e[i])) / den0;
    }
    CHECK(sum1 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sum0 == doctest::Approx(1.0).epsilon(1e-12));

    const double tau = hajek_ate(w, y, e);
    const double shifted = hajek_ate(w, (y.array() + 17.5).matrix(), e);
    CHECK(shifted == doctest::Approx(tau).epsilon(1e-10));
    const double scaled = hajek_ate(w, 3.0 * y, e);
    CHECK(scaled == doctest::Approx(3.0 * tau).epsilon(1e-10));

    // ehat = mean(w) reduces to difference in group means
    const double wbar = static_cast<double>(n1) / n;
    const double flat = hajek_ate(w, y, Eigen::VectorXd::Constant(n, wbar));
    double m1 = 0.0, m0 = 0.0;
    for (int i = 0; i < n; ++i) (w[static_cast<size_t>(i)] == 1 ? m1 : m0) += y[i];
    m1 /= n1;
    m0 /= (n - n1);
    CHECK(flat == doctest::Approx(m1 - m0).epsilon(1e-12));
  }
}

TEST_CASE("bootstrap: constant outcome, determinism, cluster moves") {
  Rng rng(31);
  const int n = 60;
  CausalFrame frame;
  frame.x.resize(n, 0);
  frame.w.resize(n);
  frame.y.resize(n);
  Eigen::MatrixXd phi(n, 3);
  for (int i = 0; i < n; ++i) {
    frame.keys.push_back("img" + std::to_string(i / 2)); // units share images in pairs
    frame.w[i] = i % 2;
    frame.y[i] = 5.0;
    for (int j = 0; j < 3; ++j) phi(i, j) = rng.normal();
  }
  ConfoundConfig cfg;
  cfg.n_boot = 50;
  cfg.seed = 5;

  const BootstrapResult constant = bootstrap_ate(frame, phi, cfg);
  CHECK(std::abs(constant.tau) < 1e-12);
  CHECK(constant.se < 1e-12);

  for (int i = 0; i < n; ++i) frame.y[i] = frame.w[i] * 2.0 + rng.normal();
  const BootstrapResult a = bootstrap_ate(frame, phi, cfg);
  const BootstrapResult b = bootstrap_ate(frame, phi, cfg);
  CHECK(a.tau == b.tau);
  CHECK(a.se == b.se);
  CHECK(testutil::bit_equal(a.replicate_taus, b.replicate_taus));
  CHECK(a.se > 0.0);

  cfg.threads = 3; // parallel replicates, same answer
  const BootstrapResult c = bootstrap_ate(frame, phi, cfg);
  CHECK(testutil::bit_equal(a.replicate_taus, c.replicate_taus));

  cfg.seed = 6;
  const BootstrapResult d = bootstrap_ate(frame, phi, cfg);
  CHECK(a.se != d.se);
}

TEST_CASE("salience: zero image coefficients give a zero grid; degenerate 1x1 grid") {
  embed::EmbeddingConfig ec;
  ec.n_embed_dim = 5;
  ec.seed = 3;
  const embed::KernelBank bank = embed::make_kernels(ec, 1);

  ImageTensor img({12, 12, 1});
  Rng rng(37);
  for (auto& v : img.data) v = static_cast<float>(rng.uniform());

  PropensityModel model;
  model.coefficients = Eigen::VectorXd::Zero(1 + 0 + 5);
  model.coefficients[0] = 0.37; // intercept only; phi coefficients zero
  const SalienceGrid flat = salience_map(img, bank, model, Eigen::VectorXd(), 4, 2);
  CHECK(flat.values.rows() == (12 - 4) / 2 + 1);
  CHECK(flat.values.cols() == 5);
  CHECK(flat.values.maxCoeff() == 0.0);

  const SalienceGrid whole = salience_map(img, bank, model, Eigen::VectorXd(), 12, 1);
  CHECK(whole.values.rows() == 1);
  CHECK(whole.values.cols() == 1);

  CHECK(error_code_of([&] { salience_map(img, bank, model, Eigen::VectorXd(), 13, 1); }) ==
        Errc::image_too_small);
}

TEST_CASE("salience localizes a planted texture signal") {
  // treatment probability driven by rough texture in one quadrant
  using namespace causalchips::synth;
  SynthSpec spec;
  spec.n_units = 300;
  spec.chip_size = 16;
  spec.seed = 11;
  spec.gamma = 6.0;
  const SynthConfounded data = gen_confounded(spec);

  embed::EmbeddingConfig ec;
  ec.n_embed_dim = 40;
  ec.seed = 2;
  const embed::KernelBank bank = embed::make_kernels(ec, 1);
  Eigen::MatrixXd phi(spec.n_units, ec.n_embed_dim);
  for (int i = 0; i < spec.n_units; ++i)
    phi.row(i) = embed::embed_image(data.chips[static_cast<size_t>(i)], bank).transpose();

  ConfoundConfig cc;
  cc.seed = 1;
  const Eigen::MatrixXd X = [&] {
    Eigen::MatrixXd m(spec.n_units, 1 + ec.n_embed_dim);
    m.col(0).setOnes();
    m.rightCols(ec.n_embed_dim) = phi;
    return m;
  }();
  const PropensityModel model = fit_propensity_standardized(X, w_as_int(data.frame), 1.0);

  // craft an image: smooth except a rough, bright top-left quadrant
  ImageTensor probe({16, 16, 1});
  Rng rng(123);
  for (uint32_t r = 0; r < 16; ++r)
    for (uint32_t c = 0; c < 16; ++c) {
      const bool hot = r < 8 && c < 8;
      const double base = hot ? 0.9 : 0.3;
      const double noise = hot ? 0.45 * (rng.uniform() - 0.5) : 0.02 * (rng.uniform() - 0.5);
      probe.at(r, c, 0) = static_cast<float>(base + noise);
    }
  const SalienceGrid grid = salience_map(probe, bank, model, Eigen::VectorXd(), 8, 4);
  REQUIRE(grid.values.rows() == 3);
  REQUIRE(grid.values.cols() == 3);
  Eigen::Index best_r = 0, best_c = 0;
  grid.values.maxCoeff(&best_r, &best_c);
  CHECK(best_r == 0);
  CHECK(best_c == 0);
}

TEST_CASE("analyze_image_confounding wires the pieces together") {
  using namespace causalchips::synth;
  SynthSpec spec;
  spec.n_units = 240;
  spec.chip_size = 16;
  spec.seed = 3;
  const SynthConfounded data = gen_confounded(spec);

  embed::EmbeddingConfig ec;
  ec.n_embed_dim = 30;
  ec.seed = 5;
  ConfoundConfig cc;
  cc.n_boot = 30;
  cc.folds = 4;
  cc.seed = 9;
  const auto loader = [&](const std::string& key) {
    for (size_t i = 0; i < data.keys.size(); ++i)
      if (data.keys[i] == key) return data.chips[i];
    throw Error(Errc::key_not_found, key);
  };
  const ConfoundingResult res = analyze_image_confounding(data.frame, loader, ec, cc);
  CHECK(res.ehat.size() == 240);
  CHECK(res.ehat.minCoeff() >= cc.clip_eps);
  CHECK(res.ehat.maxCoeff() <= 1.0 - cc.clip_eps);
  CHECK(res.tau_hajek_se > 0.0);
  CHECK(res.metrics.auc > 0.5); // textures predict treatment here
  CHECK(std::isfinite(res.tau_hajek));
}
