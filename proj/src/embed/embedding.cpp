#include "causalchips/embed/embedding.hpp"

#include "causalchips/core/csv.hpp"
#include "causalchips/core/error.hpp"
#include "causalchips/core/parallel.hpp"
#include "causalchips/core/rng.hpp"
#include "causalchips/record/record_file.hpp"

#include <fstream>
#include <map>

namespace causalchips::embed {

namespace {

void check_config(const EmbeddingConfig& c) {
  if (c.n_embed_dim < 1) fail(Errc::invalid_argument, "n_embed_dim must be >= 1");
  if (c.kernel_size < 1 || c.kernel_size % 2 == 0)
    fail(Errc::invalid_argument, "kernel_size must be odd and >= 1");
  if (c.temporal_kernel_size < 1) fail(Errc::invalid_argument, "temporal_kernel_size must be >= 1");
}

/// Per-band standardization into doubles: subtract band mean, divide by band
/// std (population); zero std leaves the band centered. `frames` is T for
/// sequences, 1 for images; spatial block is H*W, channel-fastest layout.
Eigen::MatrixXd standardized_copy(const ImageTensor& t, int channels, bool standardize) {
  const size_t n_px = t.data.size() / static_cast<size_t>(channels);
  Eigen::MatrixXd out(n_px, channels); // pixel-major per band
  for (size_t i = 0; i < n_px; ++i)
    for (int c = 0; c < channels; ++c)
      out(static_cast<Eigen::Index>(i), c) = static_cast<double>(t.data[i * channels + c]);
  if (!standardize) return out;
  for (int c = 0; c < channels; ++c) {
    auto col = out.col(c);
    const double mean = col.mean();
    col.array() -= mean;
    const double var = col.squaredNorm() / static_cast<double>(n_px);
    const double sd = std::sqrt(var);
    if (sd > 0.0) col /= sd;
  }
  return out;
}

Eigen::VectorXd relu_mean_features(const Eigen::MatrixXd& patches, const KernelBank& bank) {
  // patches: positions x L; responses: positions x D
  Eigen::MatrixXd resp = patches * bank.weights.transpose();
  resp.rowwise() += bank.biases.transpose();
  resp = resp.cwiseMax(0.0);
  return resp.colwise().mean().transpose();
}

} // namespace

KernelBank make_kernels(const EmbeddingConfig& config, int channels, KernelKind kind) {
  check_config(config);
  if (channels < 1) fail(Errc::invalid_argument, "channels must be >= 1");
  KernelBank bank;
  bank.kind = kind;
  bank.kernel_size = config.kernel_size;
  bank.temporal_size = kind == KernelKind::sequence ? config.temporal_kernel_size : 1;
  bank.channels = channels;
  const int L = bank.temporal_size * bank.kernel_size * bank.kernel_size * channels;
  bank.weights.resize(config.n_embed_dim, L);
  bank.biases = Eigen::VectorXd::Zero(config.n_embed_dim);
  Rng rng(config.seed);
  for (int d = 0; d < config.n_embed_dim; ++d)
    for (int j = 0; j < L; ++j) bank.weights(d, j) = rng.normal();
  return bank;
}

Eigen::VectorXd embed_image(const ImageTensor& img, const KernelBank& bank, bool standardize) {
  check_tensor(img);
  if (img.rank() != 3) fail(Errc::unsupported_rank, "embed_image wants (H,W,C), got " + img.dims_str());
  if (bank.kind != KernelKind::image) fail(Errc::invalid_argument, "bank built for sequences");
  const int H = static_cast<int>(img.dims[0]);
  const int W = static_cast<int>(img.dims[1]);
  const int C = static_cast<int>(img.dims[2]);
  const int k = bank.kernel_size;
  if (C != bank.channels)
    fail(Errc::channel_mismatch,
         "image has " + std::to_string(C) + " bands, bank expects " + std::to_string(bank.channels));
  if (H < k || W < k)
    fail(Errc::image_too_small, img.dims_str() + " below kernel size " + std::to_string(k));

  const Eigen::MatrixXd x = standardized_copy(img, C, standardize); // (H*W) x C
  const int oh = H - k + 1, ow = W - k + 1;
  Eigen::MatrixXd patches(static_cast<Eigen::Index>(oh) * ow, bank.patch_len());
  for (int r = 0; r < oh; ++r) {
    for (int c = 0; c < ow; ++c) {
      const Eigen::Index row = static_cast<Eigen::Index>(r) * ow + c;
      Eigen::Index j = 0;
      for (int dr = 0; dr < k; ++dr)
        for (int dc = 0; dc < k; ++dc)
          for (int ch = 0; ch < C; ++ch)
            patches(row, j++) = x(static_cast<Eigen::Index>(r + dr) * W + (c + dc), ch);
    }
  }
  return relu_mean_features(patches, bank);
}

Eigen::VectorXd embed_sequence(const ImageTensor& seq, const KernelBank& bank, bool standardize) {
  check_tensor(seq);
  if (seq.rank() != 4)
    fail(Errc::unsupported_rank, "embed_sequence wants (T,H,W,C), got " + seq.dims_str());
  if (bank.kind != KernelKind::sequence) fail(Errc::invalid_argument, "bank built for images");
  const int T = static_cast<int>(seq.dims[0]);
  const int H = static_cast<int>(seq.dims[1]);
  const int W = static_cast<int>(seq.dims[2]);
  const int C = static_cast<int>(seq.dims[3]);
  const int k = bank.kernel_size;
  const int tk = bank.temporal_size;
  if (C != bank.channels)
    fail(Errc::channel_mismatch,
         "sequence has " + std::to_string(C) + " bands, bank expects " + std::to_string(bank.channels));
  if (H < k || W < k)
    fail(Errc::image_too_small, seq.dims_str() + " below kernel size " + std::to_string(k));
  if (T < tk)
    fail(Errc::sequence_too_short,
         std::to_string(T) + " frames below temporal kernel size " + std::to_string(tk));

  const Eigen::MatrixXd x = standardized_copy(seq, C, standardize); // (T*H*W) x C
  const int ot = T - tk + 1, oh = H - k + 1, ow = W - k + 1;
  Eigen::MatrixXd patches(static_cast<Eigen::Index>(ot) * oh * ow, bank.patch_len());
  Eigen::Index row = 0;
  for (int t = 0; t < ot; ++t) {
    for (int r = 0; r < oh; ++r) {
      for (int c = 0; c < ow; ++c, ++row) {
        Eigen::Index j = 0;
        for (int dt = 0; dt < tk; ++dt)
          for (int dr = 0; dr < k; ++dr)
            for (int dc = 0; dc < k; ++dc)
              for (int ch = 0; ch < C; ++ch)
                patches(row, j++) =
                    x((static_cast<Eigen::Index>(t + dt) * H + (r + dr)) * W + (c + dc), ch);
      }
    }
  }
  return relu_mean_features(patches, bank);
}

EmbeddingMatrix embed_corpus(const TensorLoader& loader, const std::vector<std::string>& keys,
                             const EmbeddingConfig& config, int threads) {
  check_config(config);
  if (keys.empty()) fail(Errc::empty_input, "no keys to embed");

  // unique keys in first-appearance order; duplicates share one row
  std::vector<std::string> uniq;
  std::map<std::string, size_t> pos;
  for (const auto& k : keys)
    if (pos.emplace(k, uniq.size()).second) uniq.push_back(k);

  std::vector<ImageTensor> tensors(uniq.size());
  for (size_t i = 0; i < uniq.size(); ++i) tensors[i] = loader(uniq[i]);

  const auto& dims0 = tensors[0].dims;
  for (size_t i = 1; i < tensors.size(); ++i)
    if (tensors[i].dims != dims0)
      fail(Errc::heterogeneous_dims, "key '" + uniq[i] + "' has dims " + tensors[i].dims_str() +
                                         ", corpus started with " + tensors[0].dims_str());
  const size_t rank = dims0.size();
  if (rank != 3 && rank != 4)
    fail(Errc::unsupported_rank, "corpus tensors must be (H,W,C) or (T,H,W,C), got " +
                                     tensors[0].dims_str());
  const int channels = static_cast<int>(dims0.back());
  const KernelKind kind = rank == 3 ? KernelKind::image : KernelKind::sequence;
  const KernelBank bank = make_kernels(config, channels, kind);

  Eigen::MatrixXd uniq_rows(uniq.size(), config.n_embed_dim);
  parallel_for(uniq.size(), threads, [&](size_t i) {
    const Eigen::VectorXd f = kind == KernelKind::image
                                  ? embed_image(tensors[i], bank, config.standardize)
                                  : embed_sequence(tensors[i], bank, config.standardize);
    uniq_rows.row(static_cast<Eigen::Index>(i)) = f.transpose();
  });

  EmbeddingMatrix out;
  out.keys = keys;
  out.values.resize(keys.size(), config.n_embed_dim);
  for (size_t i = 0; i < keys.size(); ++i)
    out.values.row(static_cast<Eigen::Index>(i)) =
        uniq_rows.row(static_cast<Eigen::Index>(pos[keys[i]]));
  return out;
}

EmbeddingMatrix embed_corpus(const record::RecordReader& reader, const std::vector<std::string>& keys,
                             const EmbeddingConfig& config, int threads) {
  return embed_corpus([&reader](const std::string& key) { return reader.read(key); }, keys, config,
                      threads);
}

void write_embeddings_csv(const std::string& path, const EmbeddingMatrix& m) {
  std::ofstream out(path);
  if (!out) fail(Errc::io_error, "cannot write " + path);
  out << "key";
  for (int d = 0; d < m.values.cols(); ++d) out << ",f" << (d + 1);
  out << "\n";
  for (size_t i = 0; i < m.keys.size(); ++i) {
    out << m.keys[i];
    for (int d = 0; d < m.values.cols(); ++d)
      out << "," << csv::format_double(m.values(static_cast<Eigen::Index>(i), d));
    out << "\n";
  }
  if (!out) fail(Errc::io_error, "short write: " + path);
}

EmbeddingMatrix read_embeddings_csv(const std::string& path) {
  const auto table = csv::read_table(path);
  if (table.header.empty() || table.header[0] != "key")
    fail(Errc::corrupt_file, path + ": first column must be 'key'");
  const int D = static_cast<int>(table.header.size()) - 1;
  EmbeddingMatrix m;
  m.values.resize(static_cast<Eigen::Index>(table.rows.size()), D);
  for (size_t i = 0; i < table.rows.size(); ++i) {
    m.keys.push_back(table.rows[i][0]);
    for (int d = 0; d < D; ++d)
      m.values(static_cast<Eigen::Index>(i), d) = csv::parse_value(table.rows[i][static_cast<size_t>(d) + 1]);
  }
  return m;
}

} // namespace causalchips::embed
