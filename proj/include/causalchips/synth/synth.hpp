#pragma once

#include "causalchips/causal/frame.hpp"
#include "causalchips/core/tensor.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace causalchips::synth {

struct SynthSpec {
  int n_units = 2000;
  int chip_size = 32; // H = W
  int bands = 1;
  std::vector<double> tau = {1.0}; // scalar effect, or one per cluster
  double gamma = 4.0;              // confounding strength
  double noise_sd = 0.5;
  uint64_t seed = 7;
};

void check_spec(const SynthSpec& spec);

/// Confounded observational data. Per unit: latent brightness b ~ U(0,1);
/// the chip is a smooth random field with mean level b whose texture
/// roughness also tracks b (the embedding standardizes away the level, so
/// the confounder must live in texture); e = logistic(gamma*(b-0.5));
/// w ~ Bernoulli(e); y = tau*w + 2*b + Normal(0, sigma).
struct SynthConfounded {
  std::vector<std::string> keys;
  std::vector<ImageTensor> chips;
  causal::CausalFrame frame;
  Eigen::VectorXd e_true;
  Eigen::VectorXd brightness;
  double tau_true = 0.0;
};
SynthConfounded gen_confounded(const SynthSpec& spec, int threads = 1);

/// Randomized experiment with K latent effect clusters. Cluster k gets a
/// well-separated brightness/roughness regime; w ~ Bernoulli(0.5);
/// y = tau_k * w + Normal(0, sigma).
struct SynthHeterogeneous {
  std::vector<std::string> keys;
  std::vector<ImageTensor> chips;
  causal::CausalFrame frame;
  std::vector<int> labels; // true cluster per unit, 0-based
  std::vector<double> taus;
};
SynthHeterogeneous gen_heterogeneous(const SynthSpec& spec, int threads = 1);

/// Reference Hajek evaluation, written independently of the estimator path.
double oracle_hajek(const std::vector<int>& w, const Eigen::VectorXd& y, const Eigen::VectorXd& e);

} // namespace causalchips::synth
