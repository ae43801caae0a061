#pragma once

#include "causalchips/core/tensor.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace causalchips::record {
class RecordReader;
}

namespace causalchips::embed {

struct EmbeddingConfig {
  int n_embed_dim = 100;       // D
  int kernel_size = 3;         // k, odd
  int temporal_kernel_size = 2; // t, sequences only
  uint64_t seed = 0;
  bool standardize = true; // per-band standardization; off only for oracle tests
};

enum class KernelKind { image, sequence };

/// D random kernels, entries i.i.d. standard normal. Drawn kernel-major,
/// then row-major over (t,) h, w, c — channel fastest. Biases zero in v1.
struct KernelBank {
  KernelKind kind = KernelKind::image;
  int kernel_size = 0;
  int temporal_size = 1; // 1 for images
  int channels = 0;
  Eigen::MatrixXd weights; // D x (t*k*k*C), rows in draw order
  Eigen::VectorXd biases;  // D, zero

  int dim() const { return static_cast<int>(weights.rows()); }
  int patch_len() const { return static_cast<int>(weights.cols()); }
};

KernelBank make_kernels(const EmbeddingConfig& config, int channels,
                        KernelKind kind = KernelKind::image);

/// Standardize (per band), valid-padding correlation at stride 1, rectifier,
/// mean over positions. One feature per kernel, in kernel order.
Eigen::VectorXd embed_image(const ImageTensor& img, const KernelBank& bank,
                            bool standardize = true);

/// Same over (time, height, width) for a (T,H,W,C) sequence.
Eigen::VectorXd embed_sequence(const ImageTensor& seq, const KernelBank& bank,
                               bool standardize = true);

struct EmbeddingMatrix {
  std::vector<std::string> keys;
  Eigen::MatrixXd values; // N x D, row i belongs to keys[i]
};

using TensorLoader = std::function<ImageTensor(const std::string& key)>;

/// One row per requested key (duplicates share the unique key's row).
/// Deterministic in (corpus, config); independent of threads and key batching.
EmbeddingMatrix embed_corpus(const TensorLoader& loader, const std::vector<std::string>& keys,
                             const EmbeddingConfig& config, int threads = 1);
EmbeddingMatrix embed_corpus(const record::RecordReader& reader, const std::vector<std::string>& keys,
                             const EmbeddingConfig& config, int threads = 1);

/// CSV with header key,f1..fD; doubles are written round-trip exact.
void write_embeddings_csv(const std::string& path, const EmbeddingMatrix& m);
EmbeddingMatrix read_embeddings_csv(const std::string& path);

} // namespace causalchips::embed
