#include "causalchips/causal/confound.hpp"

#include "causalchips/core/error.hpp"
#include "causalchips/core/parallel.hpp"
#include "causalchips/core/rng.hpp"

#include <cmath>
#include <map>

namespace causalchips::causal {

double hajek_ate(const std::vector<int>& w, const Eigen::VectorXd& y, const Eigen::VectorXd& ehat) {
  const size_t n = w.size();
  if (y.size() != static_cast<Eigen::Index>(n) || ehat.size() != static_cast<Eigen::Index>(n))
    fail(Errc::invalid_argument, "hajek inputs disagree on N");
  double num1 = 0.0, den1 = 0.0, num0 = 0.0, den0 = 0.0;
  bool any1 = false, any0 = false;
  for (size_t i = 0; i < n; ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    const double e = ehat[idx];
    if (!(e > 0.0 && e < 1.0))
      fail(Errc::invalid_argument, "propensity outside (0,1) at unit " + std::to_string(i));
    if (w[i] == 1) {
      num1 += y[idx] / e;
      den1 += 1.0 / e;
      any1 = true;
    } else {
      num0 += y[idx] / (1.0 - e);
      den0 += 1.0 / (1.0 - e);
      any0 = true;
    }
  }
  if (!any1) fail(Errc::no_treated, "no treated units");
  if (!any0) fail(Errc::no_control, "no control units");
  return num1 / den1 - num0 / den0;
}

namespace {

Eigen::MatrixXd build_features(const CausalFrame& frame, const Eigen::MatrixXd& phi) {
  const auto n = static_cast<Eigen::Index>(frame.n());
  if (phi.rows() != n) fail(Errc::invalid_argument, "phi rows disagree with frame");
  Eigen::MatrixXd X(n, 1 + frame.x.cols() + phi.cols());
  X.col(0).setOnes();
  if (frame.x.cols() > 0) X.middleCols(1, frame.x.cols()) = frame.x;
  X.rightCols(phi.cols()) = phi;
  return X;
}

// groups of unit indices that resample together
std::vector<std::vector<size_t>> bootstrap_clusters(const CausalFrame& frame, bool by_key) {
  std::vector<std::vector<size_t>> clusters;
  if (!by_key) {
    clusters.resize(frame.n());
    for (size_t i = 0; i < frame.n(); ++i) clusters[i] = {i};
    return clusters;
  }
  std::map<std::string, size_t> pos;
  for (size_t i = 0; i < frame.n(); ++i) {
    auto [it, inserted] = pos.emplace(frame.keys[i], clusters.size());
    if (inserted) clusters.emplace_back();
    clusters[it->second].push_back(i);
  }
  return clusters;
}

} // namespace

BootstrapResult bootstrap_ate(const CausalFrame& frame, const Eigen::MatrixXd& phi,
                              const ConfoundConfig& config) {
  check_frame(frame);
  if (config.n_boot < 2) fail(Errc::invalid_argument, "n_boot must be >= 2");
  const Eigen::MatrixXd X = build_features(frame, phi);
  const std::vector<int> w = w_as_int(frame);

  const PropensityModel full = fit_propensity_standardized(X, w, config.l2_lambda, config.clip_eps);
  const Eigen::VectorXd ehat = predict_propensity(full, X);
  BootstrapResult out;
  out.tau = hajek_ate(w, frame.y, ehat);

  const auto clusters = bootstrap_clusters(frame, config.cluster_bootstrap);
  const size_t n_clusters = clusters.size();
  out.replicate_taus.resize(config.n_boot);

  parallel_for(static_cast<size_t>(config.n_boot), config.threads, [&](size_t rep) {
    Rng rng(config.seed + rep);
    for (int attempt = 0; attempt < 100; ++attempt) {
      std::vector<size_t> rows;
      rows.reserve(frame.n());
      for (size_t c = 0; c < n_clusters; ++c) {
        const auto& cluster = clusters[rng.uniform_int(n_clusters)];
        rows.insert(rows.end(), cluster.begin(), cluster.end());
      }
      int treated = 0;
      for (size_t r : rows) treated += w[r];
      if (treated == 0 || treated == static_cast<int>(rows.size())) continue; // redraw

      Eigen::MatrixXd Xr(static_cast<Eigen::Index>(rows.size()), X.cols());
      Eigen::VectorXd yr(static_cast<Eigen::Index>(rows.size()));
      std::vector<int> wr(rows.size());
      for (size_t i = 0; i < rows.size(); ++i) {
        const auto src = static_cast<Eigen::Index>(rows[i]);
        Xr.row(static_cast<Eigen::Index>(i)) = X.row(src);
        yr[static_cast<Eigen::Index>(i)] = frame.y[src];
        wr[i] = w[rows[i]];
      }
      try {
        const PropensityModel m =
            fit_propensity_standardized(Xr, wr, config.l2_lambda, config.clip_eps, &full);
        const Eigen::VectorXd er = predict_propensity(m, Xr);
        out.replicate_taus[static_cast<Eigen::Index>(rep)] = hajek_ate(wr, yr, er);
        return;
      } catch (const Error& e) {
        if (e.code() == Errc::separation) continue; // degenerate resample, redraw
        throw;
      }
    }
    fail(Errc::degenerate_resample,
         "replicate " + std::to_string(rep) + " had no usable resample in 100 attempts");
  });

  const double mean = out.replicate_taus.mean();
  const double ss = (out.replicate_taus.array() - mean).square().sum();
  out.se = config.n_boot > 1 ? std::sqrt(ss / static_cast<double>(config.n_boot - 1)) : 0.0;
  return out;
}

SalienceGrid occlusion_salience(const ImageTensor& img, const embed::KernelBank& bank,
                                const std::function<double(const Eigen::VectorXd&)>& predict,
                                int patch, int stride, std::optional<float> fill, bool standardize) {
  check_tensor(img);
  if (img.rank() != 3) fail(Errc::unsupported_rank, "salience wants an (H,W,C) image");
  const int H = static_cast<int>(img.dims[0]);
  const int W = static_cast<int>(img.dims[1]);
  const int C = static_cast<int>(img.dims[2]);
  if (patch < 1 || stride < 1) fail(Errc::invalid_argument, "patch and stride must be >= 1");
  if (patch > H || patch > W)
    fail(Errc::image_too_small, "patch " + std::to_string(patch) + " exceeds image " + img.dims_str());

  std::vector<float> fill_value(static_cast<size_t>(C));
  if (fill) {
    std::fill(fill_value.begin(), fill_value.end(), *fill);
  } else {
    // per-band mean of the original image
    std::vector<double> acc(static_cast<size_t>(C), 0.0);
    for (size_t i = 0; i < img.data.size(); ++i) acc[i % C] += img.data[i];
    const double npx = static_cast<double>(img.data.size() / C);
    for (int c = 0; c < C; ++c) fill_value[static_cast<size_t>(c)] = static_cast<float>(acc[static_cast<size_t>(c)] / npx);
  }

  const double p_orig = predict(embed::embed_image(img, bank, standardize));
  SalienceGrid grid;
  grid.patch = patch;
  grid.stride = stride;
  const int rows = (H - patch) / stride + 1;
  const int cols = (W - patch) / stride + 1;
  grid.values.resize(rows, cols);
  for (int gr = 0; gr < rows; ++gr) {
    for (int gc = 0; gc < cols; ++gc) {
      ImageTensor occluded = img;
      const int r0 = gr * stride, c0 = gc * stride;
      for (int r = r0; r < r0 + patch; ++r)
        for (int c = c0; c < c0 + patch; ++c)
          for (int ch = 0; ch < C; ++ch) occluded.at(r, c, ch) = fill_value[static_cast<size_t>(ch)];
      const double p_occ = predict(embed::embed_image(occluded, bank, standardize));
      grid.values(gr, gc) = std::abs(p_occ - p_orig);
    }
  }
  return grid;
}

SalienceGrid salience_map(const ImageTensor& img, const embed::KernelBank& bank,
                          const PropensityModel& model, const Eigen::VectorXd& x_tab, int patch,
                          int stride, std::optional<float> fill, bool standardize) {
  return occlusion_salience(
      img, bank,
      [&](const Eigen::VectorXd& phi) {
        Eigen::MatrixXd X(1, 1 + x_tab.size() + phi.size());
        X(0, 0) = 1.0;
        if (x_tab.size() > 0) X.block(0, 1, 1, x_tab.size()) = x_tab.transpose();
        X.rightCols(phi.size()) = phi.transpose();
        return predict_propensity(model, X)[0];
      },
      patch, stride, fill, standardize);
}

ConfoundingResult analyze_image_confounding(const CausalFrame& frame, const Eigen::MatrixXd& phi,
                                            const ConfoundConfig& config) {
  check_frame(frame);
  ConfoundingResult res;
  res.features = build_features(frame, phi);
  const std::vector<int> w = w_as_int(frame);
  res.model = fit_propensity_standardized(res.features, w, config.l2_lambda, config.clip_eps);
  res.ehat = predict_propensity(res.model, res.features);
  res.metrics =
      evaluate_propensity(res.features, w, config.folds, config.seed, config.l2_lambda, config.clip_eps);
  const BootstrapResult boot = bootstrap_ate(frame, phi, config);
  res.tau_hajek = boot.tau;
  res.tau_hajek_se = boot.se;
  return res;
}

ConfoundingResult analyze_image_confounding(const CausalFrame& frame,
                                            const embed::TensorLoader& loader,
                                            const embed::EmbeddingConfig& embed_config,
                                            const ConfoundConfig& config) {
  const embed::EmbeddingMatrix phi = embed::embed_corpus(loader, frame.keys, embed_config, config.threads);
  return analyze_image_confounding(frame, phi.values, config);
}

} // namespace causalchips::causal
