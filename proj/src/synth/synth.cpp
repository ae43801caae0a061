#include "causalchips/synth/synth.hpp"

#include "causalchips/core/error.hpp"
#include "causalchips/core/parallel.hpp"
#include "causalchips/core/rng.hpp"

#include <cmath>

namespace causalchips::synth {

namespace {

/// Seeded value noise: a coarse uniform grid in [-0.5, 0.5], bilinear
/// upsampled to size x size. `cells` controls the spatial scale.
std::vector<double> value_noise(Rng& rng, int size, int cells) {
  const int g = cells + 1;
  std::vector<double> grid(static_cast<size_t>(g) * g);
  for (auto& v : grid) v = rng.uniform() - 0.5;
  std::vector<double> out(static_cast<size_t>(size) * size);
  const double scale = static_cast<double>(cells) / size;
  for (int r = 0; r < size; ++r) {
    const double gr = r * scale;
    const int r0 = static_cast<int>(gr);
    const double fr = gr - r0;
    for (int c = 0; c < size; ++c) {
      const double gc = c * scale;
      const int c0 = static_cast<int>(gc);
      const double fc = gc - c0;
      const double v00 = grid[static_cast<size_t>(r0) * g + c0];
      const double v01 = grid[static_cast<size_t>(r0) * g + c0 + 1];
      const double v10 = grid[static_cast<size_t>(r0 + 1) * g + c0];
      const double v11 = grid[static_cast<size_t>(r0 + 1) * g + c0 + 1];
      out[static_cast<size_t>(r) * size + c] =
          (1 - fr) * ((1 - fc) * v00 + fc * v01) + fr * ((1 - fc) * v10 + fc * v11);
    }
  }
  return out;
}

/// Chip band: mean level `level`, texture mixing coarse and fine noise by
/// `roughness` in [0,1] (0 = smooth, 1 = rough). The field is recentered so
/// the band mean is exactly `level`.
void fill_band(Rng& rng, ImageTensor& chip, int band, int size, double level, double roughness) {
  const int coarse_cells = std::max(2, size / 8);
  const int fine_cells = std::max(4, size / 2);
  const auto coarse = value_noise(rng, size, coarse_cells);
  const auto fine = value_noise(rng, size, fine_cells);
  std::vector<double> field(coarse.size());
  double mean = 0.0;
  for (size_t i = 0; i < field.size(); ++i) {
    field[i] = (1.0 - roughness) * coarse[i] + roughness * fine[i];
    mean += field[i];
  }
  mean /= static_cast<double>(field.size());
  constexpr double kAmplitude = 0.5;
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c)
      chip.at(r, c, band) =
          static_cast<float>(level + kAmplitude * (field[static_cast<size_t>(r) * size + c] - mean));
}

double logistic(double s) { return 1.0 / (1.0 + std::exp(-s)); }

std::string unit_key(int i) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "unit%06d", i);
  return buf;
}

} // namespace

void check_spec(const SynthSpec& spec) {
  if (spec.n_units < 10) fail(Errc::invalid_argument, "n_units must be >= 10");
  if (spec.chip_size < 8) fail(Errc::invalid_argument, "chip_size must be >= 8");
  if (spec.bands < 1) fail(Errc::invalid_argument, "bands must be >= 1");
  if (!(spec.noise_sd > 0.0)) fail(Errc::invalid_argument, "noise_sd must be > 0");
  if (spec.tau.empty()) fail(Errc::invalid_argument, "tau must be given");
}

SynthConfounded gen_confounded(const SynthSpec& spec, int threads) {
  check_spec(spec);
  if (spec.tau.size() != 1) fail(Errc::invalid_argument, "gen_confounded wants a scalar tau");
  const int n = spec.n_units;
  SynthConfounded out;
  out.tau_true = spec.tau[0];
  out.keys.resize(static_cast<size_t>(n));
  out.chips.resize(static_cast<size_t>(n));
  out.e_true.resize(n);
  out.brightness.resize(n);
  out.frame.w.resize(n);
  out.frame.y.resize(n);
  out.frame.x.resize(n, 0);

  parallel_for(static_cast<size_t>(n), threads, [&](size_t i) {
    Rng rng(derive_seed(spec.seed, i));
    const double b = rng.uniform();
    ImageTensor chip({static_cast<uint32_t>(spec.chip_size), static_cast<uint32_t>(spec.chip_size),
                      static_cast<uint32_t>(spec.bands)});
    for (int band = 0; band < spec.bands; ++band) fill_band(rng, chip, band, spec.chip_size, b, b);
    const double e = logistic(spec.gamma * (b - 0.5));
    const int w = rng.uniform() < e ? 1 : 0;
    const double y = out.tau_true * w + 2.0 * b + spec.noise_sd * rng.normal();

    const auto idx = static_cast<Eigen::Index>(i);
    out.keys[i] = unit_key(static_cast<int>(i));
    out.chips[i] = std::move(chip);
    out.brightness[idx] = b;
    out.e_true[idx] = e;
    out.frame.w[idx] = w;
    out.frame.y[idx] = y;
  });
  out.frame.keys = out.keys;
  return out;
}

SynthHeterogeneous gen_heterogeneous(const SynthSpec& spec, int threads) {
  check_spec(spec);
  const int K = static_cast<int>(spec.tau.size());
  const int n = spec.n_units;
  SynthHeterogeneous out;
  out.taus = spec.tau;
  out.keys.resize(static_cast<size_t>(n));
  out.chips.resize(static_cast<size_t>(n));
  out.labels.resize(static_cast<size_t>(n));
  out.frame.w.resize(n);
  out.frame.y.resize(n);
  out.frame.x.resize(n, 0);

  parallel_for(static_cast<size_t>(n), threads, [&](size_t i) {
    Rng rng(derive_seed(spec.seed, i));
    const int label = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(K)));
    // well-separated regimes: cluster k is brighter and rougher than k-1
    const double regime = (label + 0.5) / K;
    const double level = std::clamp(regime + 0.05 * rng.normal(), 0.02, 0.98);
    const double rough = std::clamp(regime + 0.1 * (rng.uniform() - 0.5), 0.0, 1.0);
    ImageTensor chip({static_cast<uint32_t>(spec.chip_size), static_cast<uint32_t>(spec.chip_size),
                      static_cast<uint32_t>(spec.bands)});
    for (int band = 0; band < spec.bands; ++band)
      fill_band(rng, chip, band, spec.chip_size, level, rough);
    const int w = rng.uniform() < 0.5 ? 1 : 0;
    const double y = spec.tau[static_cast<size_t>(label)] * w + spec.noise_sd * rng.normal();

    const auto idx = static_cast<Eigen::Index>(i);
    out.keys[i] = unit_key(static_cast<int>(i));
    out.chips[i] = std::move(chip);
    out.labels[i] = label;
    out.frame.w[idx] = w;
    out.frame.y[idx] = y;
  });
  out.frame.keys = out.keys;
  return out;
}

double oracle_hajek(const std::vector<int>& w, const Eigen::VectorXd& y, const Eigen::VectorXd& e) {
  // direct transcription of the self-normalized IPW contrast
  double treated_weighted = 0.0, treated_weight = 0.0;
  double control_weighted = 0.0, control_weight = 0.0;
  for (size_t i = 0; i < w.size(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    if (w[i] == 1) {
      const double inv = 1.0 / e[idx];
      treated_weighted += y[idx] * inv;
      treated_weight += inv;
    } else {
      const double inv = 1.0 / (1.0 - e[idx]);
      control_weighted += y[idx] * inv;
      control_weight += inv;
    }
  }
  if (treated_weight == 0.0) fail(Errc::no_treated, "no treated units");
  if (control_weight == 0.0) fail(Errc::no_control, "no control units");
  return treated_weighted / treated_weight - control_weighted / control_weight;
}

} // namespace causalchips::synth
