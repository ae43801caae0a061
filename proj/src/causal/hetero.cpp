#include "causalchips/causal/hetero.hpp"

#include "causalchips/core/error.hpp"
#include "causalchips/core/parallel.hpp"
#include "causalchips/core/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace causalchips::causal {

namespace {

constexpr double kSigmaFloor = 1e-12;
constexpr double kLogTwoPi = 1.8378770664093453; // log(2*pi)

struct EmParams {
  Eigen::VectorXd beta;  // intercept + P
  Eigen::VectorXd tau;   // K
  double sigma2 = 1.0;
  Eigen::MatrixXd theta; // K x (1+D), last row zero
};

struct EmData {
  Eigen::MatrixXd u; // N x (1+P), [1, x]
  Eigen::MatrixXd g; // N x (1+D), [1, standardized phi]
  Eigen::VectorXd y;
  std::vector<int> w;
  int K = 0;
  double gate_ridge = 1.0;
};

double gate_penalty(const EmData& d, const Eigen::MatrixXd& theta) {
  if (d.K < 2 || d.gate_ridge <= 0.0) return 0.0;
  // non-intercept entries of the K-1 free rows
  return 0.5 * d.gate_ridge *
         theta.topRows(d.K - 1).rightCols(theta.cols() - 1).squaredNorm();
}

// log gate probabilities, N x K, rows log-softmax of g * theta'
Eigen::MatrixXd log_gates(const EmData& d, const Eigen::MatrixXd& theta) {
  Eigen::MatrixXd s = d.g * theta.transpose();
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double m = s.row(i).maxCoeff();
    const double lse = m + std::log((s.row(i).array() - m).exp().sum());
    s.row(i).array() -= lse;
  }
  return s;
}

struct EStep {
  Eigen::MatrixXd resp; // N x K
  double loglik = 0.0;  // penalized observed-data log-likelihood
};

EStep e_step(const EmData& d, const EmParams& p) {
  const Eigen::Index n = d.y.size();
  const Eigen::MatrixXd lg = log_gates(d, p.theta);
  const Eigen::VectorXd pred = d.u * p.beta;
  const double log_norm = -0.5 * (kLogTwoPi + std::log(p.sigma2));
  const double inv2s = 0.5 / p.sigma2;

  EStep out;
  out.resp.resize(n, d.K);
  double ll = 0.0;
  Eigen::VectorXd logp(d.K);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double base = d.y[i] - pred[i];
    for (int k = 0; k < d.K; ++k) {
      const double r = d.w[static_cast<size_t>(i)] == 1 ? base - p.tau[k] : base;
      logp[k] = lg(i, k) + log_norm - r * r * inv2s;
    }
    const double m = logp.maxCoeff();
    const double lse = m + std::log((logp.array() - m).exp().sum());
    ll += lse;
    out.resp.row(i) = (logp.array() - lse).exp();
  }
  out.loglik = ll - gate_penalty(d, p.theta);
  return out;
}

// weighted least squares for (beta, tau) and sigma2 given responsibilities
void m_step_outcome(const EmData& d, const Eigen::MatrixXd& resp, EmParams& p) {
  const Eigen::Index n = d.y.size();
  const Eigen::Index pu = d.u.cols();
  const Eigen::Index dim = pu + d.K;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(dim);

  A.topLeftCorner(pu, pu) = d.u.transpose() * d.u; // sum_k resp = 1 per row
  b.head(pu) = d.u.transpose() * d.y;
  for (int k = 0; k < d.K; ++k) {
    double akk = 0.0, bk = 0.0;
    Eigen::VectorXd auk = Eigen::VectorXd::Zero(pu);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (d.w[static_cast<size_t>(i)] != 1) continue;
      const double r = resp(i, k);
      akk += r;
      bk += r * d.y[i];
      auk += r * d.u.row(i).transpose();
    }
    A(pu + k, pu + k) = akk;
    A.col(pu + k).head(pu) = auk;
    A.row(pu + k).head(pu) = auk.transpose();
    b[pu + k] = bk;
  }
  A.diagonal().array() += 1e-10; // keeps empty treated mass solvable

  const Eigen::VectorXd coef = A.ldlt().solve(b);
  p.beta = coef.head(pu);
  p.tau = coef.tail(d.K);

  const Eigen::VectorXd pred = d.u * p.beta;
  double ss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double base = d.y[i] - pred[i];
    if (d.w[static_cast<size_t>(i)] == 1) {
      for (int k = 0; k < d.K; ++k) {
        const double r = base - p.tau[k];
        ss += resp(i, k) * r * r;
      }
    } else {
      ss += base * base;
    }
  }
  p.sigma2 = std::max(ss / static_cast<double>(n), kSigmaFloor);
}

// responsibility-weighted multinomial gate objective (to maximize)
double gate_objective(const EmData& d, const Eigen::MatrixXd& resp, const Eigen::MatrixXd& theta) {
  const Eigen::MatrixXd lg = log_gates(d, theta);
  return (resp.array() * lg.array()).sum() - gate_penalty(d, theta);
}

// Newton ascent with step halving; never decreases the objective
void m_step_gate(const EmData& d, const Eigen::MatrixXd& resp, EmParams& p, int max_steps = 30) {
  if (d.K < 2) return;
  const Eigen::Index q = d.g.cols();
  const int kf = d.K - 1; // free rows
  double obj = gate_objective(d, resp, p.theta);

  for (int step = 0; step < max_steps; ++step) {
    const Eigen::MatrixXd lg = log_gates(d, p.theta);
    const Eigen::MatrixXd gate = lg.array().exp();

    Eigen::VectorXd grad(kf * q);
    for (int k = 0; k < kf; ++k) {
      Eigen::VectorXd gk = d.g.transpose() * (resp.col(k) - gate.col(k));
      gk.tail(q - 1) -= d.gate_ridge * p.theta.row(k).tail(q - 1).transpose();
      grad.segment(static_cast<Eigen::Index>(k) * q, q) = gk;
    }
    if (grad.lpNorm<Eigen::Infinity>() <= 1e-9 * std::max<double>(1.0, d.y.size())) break;

    Eigen::MatrixXd H(kf * q, kf * q);
    for (int k = 0; k < kf; ++k) {
      for (int l = k; l < kf; ++l) {
        Eigen::ArrayXd m = -gate.col(k).array() * ((k == l ? 1.0 : 0.0) - gate.col(l).array());
        Eigen::MatrixXd block = d.g.transpose() * m.matrix().asDiagonal() * d.g;
        if (k == l) {
          for (Eigen::Index j = 1; j < q; ++j) block(j, j) -= d.gate_ridge;
          block.diagonal().array() -= 1e-10;
        }
        H.block(static_cast<Eigen::Index>(k) * q, static_cast<Eigen::Index>(l) * q, q, q) = block;
        if (k != l)
          H.block(static_cast<Eigen::Index>(l) * q, static_cast<Eigen::Index>(k) * q, q, q) =
              block.transpose();
      }
    }

    const Eigen::VectorXd dir = (-H).ldlt().solve(grad); // H negative definite
    double alpha = 1.0;
    bool moved = false;
    for (int halve = 0; halve < 40; ++halve, alpha *= 0.5) {
      Eigen::MatrixXd cand = p.theta;
      for (int k = 0; k < kf; ++k)
        cand.row(k) += alpha * dir.segment(static_cast<Eigen::Index>(k) * q, q).transpose();
      const double cand_obj = gate_objective(d, resp, cand);
      if (std::isfinite(cand_obj) && cand_obj >= obj) {
        p.theta = std::move(cand);
        obj = cand_obj;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
}

// permutation-equivariant initialization from an OLS fit plus residual spread
EmParams init_params(const EmData& d, uint64_t restart_seed, int restart) {
  const Eigen::Index n = d.y.size();
  const Eigen::Index pu = d.u.cols();
  Eigen::MatrixXd Xw(n, pu + 1);
  Xw.leftCols(pu) = d.u;
  for (Eigen::Index i = 0; i < n; ++i) Xw(i, pu) = d.w[static_cast<size_t>(i)];
  const Eigen::VectorXd coef = Xw.colPivHouseholderQr().solve(d.y);

  EmParams p;
  p.beta = coef.head(pu);
  const double tau_bar = coef[pu];
  const Eigen::VectorXd resid = d.y - Xw * coef;
  p.sigma2 = std::max(resid.squaredNorm() / static_cast<double>(n), kSigmaFloor);
  p.theta = Eigen::MatrixXd::Zero(d.K, d.g.cols());

  // spread cluster effects over the treated-residual quantiles
  std::vector<double> tr;
  for (Eigen::Index i = 0; i < n; ++i)
    if (d.w[static_cast<size_t>(i)] == 1) tr.push_back(resid[i]);
  std::sort(tr.begin(), tr.end());
  p.tau.resize(d.K);
  for (int k = 0; k < d.K; ++k) {
    const double frac = (k + 0.5) / d.K;
    const double pos = frac * static_cast<double>(tr.size() - 1);
    const auto lo = static_cast<size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, tr.size() - 1);
    const double q = tr[lo] + (pos - static_cast<double>(lo)) * (tr[hi] - tr[lo]);
    p.tau[k] = tau_bar + q;
  }
  if (restart > 0) {
    Rng rng(derive_seed(restart_seed, static_cast<uint64_t>(restart)));
    const double spread = std::max(std::sqrt(p.sigma2), 1e-3);
    for (int k = 0; k < d.K; ++k) p.tau[k] += spread * rng.normal();
  }
  return p;
}

struct EmOutcome {
  EmParams params;
  Eigen::MatrixXd resp;
  double loglik = 0.0;
  std::vector<double> trace;
  int iters = 0;
};

// single EM run; throws EmptyCluster / NonConvergence
EmOutcome run_em(const EmData& d, const EmParams& init, int max_iters, double tol,
                 bool keep_trace) {
  EmOutcome out;
  out.params = init;
  double prev = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iters; ++iter) {
    EStep e = e_step(d, out.params);
    out.resp = std::move(e.resp);
    out.loglik = e.loglik;
    if (keep_trace) out.trace.push_back(e.loglik);
    out.iters = iter + 1;

    const Eigen::VectorXd mass = out.resp.colwise().sum();
    for (int k = 0; k < d.K; ++k)
      if (mass[k] < 1e-6 * static_cast<double>(d.y.size()))
        fail(Errc::empty_cluster, "cluster " + std::to_string(k + 1) + " lost all responsibility");

    const double rel = std::abs(e.loglik - prev) / (std::abs(e.loglik) + 1.0);
    if (iter > 0 && rel < tol) return out;
    prev = e.loglik;

    m_step_outcome(d, out.resp, out.params);
    m_step_gate(d, out.resp, out.params);
  }
  fail(Errc::non_convergence,
       "EM did not converge in " + std::to_string(max_iters) + " iterations (last relative change " +
           std::to_string(std::abs(out.loglik - prev) / (std::abs(out.loglik) + 1.0)) + ")");
}

// sort clusters by tau ascending; permute resp/theta consistently and re-zero
// the gate against the new last row (softmax is shift invariant)
void canonicalize(EmOutcome& em, int K) {
  std::vector<int> order(K);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return em.params.tau[a] < em.params.tau[b]; });
  Eigen::VectorXd tau(K);
  Eigen::MatrixXd theta(K, em.params.theta.cols());
  Eigen::MatrixXd resp(em.resp.rows(), K);
  for (int k = 0; k < K; ++k) {
    tau[k] = em.params.tau[order[k]];
    theta.row(k) = em.params.theta.row(order[k]);
    resp.col(k) = em.resp.col(order[k]);
  }
  theta.rowwise() -= theta.row(K - 1).eval();
  em.params.tau = std::move(tau);
  em.params.theta = std::move(theta);
  em.resp = std::move(resp);
}

std::vector<std::vector<size_t>> index_clusters(size_t n, const std::vector<std::string>* keys) {
  std::vector<std::vector<size_t>> clusters;
  if (!keys) {
    clusters.resize(n);
    for (size_t i = 0; i < n; ++i) clusters[i] = {i};
    return clusters;
  }
  std::map<std::string, size_t> pos;
  for (size_t i = 0; i < n; ++i) {
    auto [it, inserted] = pos.emplace((*keys)[i], clusters.size());
    if (inserted) clusters.emplace_back();
    clusters[it->second].push_back(i);
  }
  return clusters;
}

double percentile(std::vector<double> v, double frac) {
  std::sort(v.begin(), v.end());
  const double pos = frac * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

} // namespace

HeterogeneityFit fit_effect_clusters(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& x,
                                     const std::vector<int>& w, const Eigen::VectorXd& y,
                                     const HeterogeneityConfig& config,
                                     const std::vector<std::string>* keys) {
  const size_t n = w.size();
  if (config.k_clusters < 1) fail(Errc::invalid_argument, "k_clusters must be >= 1");
  if (config.tol <= 0.0) fail(Errc::invalid_argument, "tol must be > 0");
  if (static_cast<size_t>(y.size()) != n || static_cast<size_t>(phi.rows()) != n ||
      static_cast<size_t>(x.rows()) != n)
    fail(Errc::invalid_argument, "hetero inputs disagree on N");
  if (n <= static_cast<size_t>(config.k_clusters))
    fail(Errc::too_few_units, "need N > K");
  {
    int n1 = 0;
    for (int v : w) n1 += v;
    if (n1 == 0) fail(Errc::no_treated, "no treated units");
    if (n1 == static_cast<int>(n)) fail(Errc::no_control, "no control units");
  }
  if (keys && keys->size() != n) fail(Errc::invalid_argument, "keys length disagrees with N");

  EmData d;
  d.K = config.k_clusters;
  d.gate_ridge = config.gate_ridge;
  d.y = y;
  d.w = w;
  d.u.resize(static_cast<Eigen::Index>(n), 1 + x.cols());
  d.u.col(0).setOnes();
  if (x.cols() > 0) d.u.rightCols(x.cols()) = x;

  const FeatureScaler scaler = fit_scaler(phi, /*skip_first_column=*/false);
  d.g.resize(static_cast<Eigen::Index>(n), 1 + phi.cols());
  d.g.col(0).setOnes();
  d.g.rightCols(phi.cols()) = apply_scaler(scaler, phi);

  // full fit, restarting on empty clusters with a perturbed init
  EmOutcome em;
  int restart = 0;
  for (;; ++restart) {
    try {
      em = run_em(d, init_params(d, config.seed, restart), config.max_em_iters, config.tol,
                  /*keep_trace=*/true);
      break;
    } catch (const Error& e) {
      if (e.code() != Errc::empty_cluster || restart >= config.max_restarts) throw;
    }
  }
  canonicalize(em, d.K);

  HeterogeneityFit fit;
  fit.tau_k = em.params.tau;
  fit.theta = em.params.theta;
  fit.beta = em.params.beta;
  fit.sigma2 = em.params.sigma2;
  fit.resp = em.resp;
  fit.pi_mean = em.resp.colwise().mean().transpose();
  fit.individual_tau = em.resp * em.params.tau;
  fit.implied_ate = fit.individual_tau.mean();
  fit.phi_scaler = scaler;
  fit.loglik = em.loglik;
  fit.loglik_trace = em.trace;
  fit.em_iters = em.iters;
  fit.restarts_used = restart;
  fit.tau_k_sd = Eigen::VectorXd::Zero(d.K);
  fit.pi_sd = Eigen::VectorXd::Zero(d.K);
  fit.pi_lower = fit.pi_mean;

  if (config.n_boot > 0) {
    const auto clusters = index_clusters(n, keys);
    const size_t n_clusters = clusters.size();
    Eigen::MatrixXd boot_tau(config.n_boot, d.K);
    Eigen::MatrixXd boot_pi(config.n_boot, d.K);

    parallel_for(static_cast<size_t>(config.n_boot), config.threads, [&](size_t rep) {
      Rng rng(config.seed + rep);
      for (int attempt = 0; attempt < 100; ++attempt) {
        std::vector<size_t> rows;
        rows.reserve(n);
        for (size_t c = 0; c < n_clusters; ++c) {
          const auto& cl = clusters[rng.uniform_int(n_clusters)];
          rows.insert(rows.end(), cl.begin(), cl.end());
        }
        int treated = 0;
        for (size_t r : rows) treated += w[r];
        if (treated == 0 || treated == static_cast<int>(rows.size()) || rows.size() <= static_cast<size_t>(d.K))
          continue;

        EmData rd;
        rd.K = d.K;
        rd.gate_ridge = d.gate_ridge;
        rd.y.resize(static_cast<Eigen::Index>(rows.size()));
        rd.w.resize(rows.size());
        rd.u.resize(static_cast<Eigen::Index>(rows.size()), d.u.cols());
        rd.g.resize(static_cast<Eigen::Index>(rows.size()), d.g.cols());
        for (size_t i = 0; i < rows.size(); ++i) {
          const auto src = static_cast<Eigen::Index>(rows[i]);
          const auto dst = static_cast<Eigen::Index>(i);
          rd.y[dst] = y[src];
          rd.w[i] = w[rows[i]];
          rd.u.row(dst) = d.u.row(src);
          rd.g.row(dst) = d.g.row(src);
        }
        try {
          // warm start from the full fit; clusters aligned by sorted tau
          EmOutcome rem = run_em(rd, em.params, config.max_em_iters, config.tol, false);
          canonicalize(rem, d.K);
          boot_tau.row(static_cast<Eigen::Index>(rep)) = rem.params.tau.transpose();
          boot_pi.row(static_cast<Eigen::Index>(rep)) = rem.resp.colwise().mean();
          return;
        } catch (const Error& e) {
          if (e.code() == Errc::empty_cluster || e.code() == Errc::non_convergence) continue;
          throw;
        }
      }
      fail(Errc::degenerate_resample,
           "replicate " + std::to_string(rep) + " had no usable resample in 100 attempts");
    });

    for (int k = 0; k < d.K; ++k) {
      std::vector<double> taus(static_cast<size_t>(config.n_boot));
      std::vector<double> pis(static_cast<size_t>(config.n_boot));
      for (int r = 0; r < config.n_boot; ++r) {
        taus[static_cast<size_t>(r)] = boot_tau(r, k);
        pis[static_cast<size_t>(r)] = boot_pi(r, k);
      }
      fit.tau_k_sd[k] = sample_sd(taus);
      fit.pi_sd[k] = sample_sd(pis);
      fit.pi_lower[k] = percentile(pis, config.conf_level);
    }
  }
  return fit;
}

double implied_ate(const HeterogeneityFit& fit) {
  return (fit.resp * fit.tau_k).mean();
}

Eigen::MatrixXd transportability(const HeterogeneityFit& fit, const Eigen::MatrixXd& new_phi) {
  const Eigen::Index D = fit.theta.cols() - 1;
  if (new_phi.cols() != D)
    fail(Errc::dim_mismatch, "new phi has " + std::to_string(new_phi.cols()) +
                                 " columns, gate expects " + std::to_string(D));
  Eigen::MatrixXd g(new_phi.rows(), 1 + D);
  g.col(0).setOnes();
  g.rightCols(D) = apply_scaler(fit.phi_scaler, new_phi);
  Eigen::MatrixXd s = g * fit.theta.transpose();
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double m = s.row(i).maxCoeff();
    Eigen::ArrayXd e = (s.row(i).array() - m).exp();
    s.row(i) = (e / e.sum()).matrix();
  }
  return s;
}

HeteroAnalysis analyze_image_heterogeneity(const CausalFrame& frame, const embed::TensorLoader& loader,
                                           const std::vector<std::string>& available_keys,
                                           const embed::EmbeddingConfig& embed_config,
                                           const HeterogeneityConfig& config) {
  const std::set<std::string> avail(available_keys.begin(), available_keys.end());
  DropResult dropped = drop_na(frame, avail.empty() ? nullptr : &avail);
  check_frame(dropped.clean);

  HeteroAnalysis out;
  out.clean = std::move(dropped.clean);
  out.phi = embed::embed_corpus(loader, out.clean.keys, embed_config, config.threads);
  out.fit = fit_effect_clusters(out.phi.values, out.clean.x, w_as_int(out.clean), out.clean.y,
                                config, &out.clean.keys);
  out.fit.dropped = std::move(dropped.dropped);
  return out;
}

} // namespace causalchips::causal
