#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "causalchips/core/rng.hpp"
#include "causalchips/embed/embedding.hpp"
#include "causalchips/record/record_file.hpp"
#include "test_util.hpp"

#include <cmath>
#include <map>

using namespace causalchips;
using namespace causalchips::embed;
using testutil::TempDir;
using testutil::error_code_of;

namespace {

ImageTensor random_image(Rng& rng, int h, int w, int c) {
  ImageTensor t({static_cast<uint32_t>(h), static_cast<uint32_t>(w), static_cast<uint32_t>(c)});
  for (auto& v : t.data) v = static_cast<float>(rng.normal());
  return t;
}

/// Direct-formula oracle for k = 1: per kernel d, mean over pixels of
/// ReLU(sum_c w_dc * x~[p,c]), with the same per-band standardization.
Eigen::VectorXd direct_k1_embedding(const ImageTensor& img, const KernelBank& bank) {
  const int H = static_cast<int>(img.dims[0]);
  const int W = static_cast<int>(img.dims[1]);
  const int C = static_cast<int>(img.dims[2]);
  std::vector<double> mean(C, 0.0), sd(C, 0.0);
  for (int c = 0; c < C; ++c) {
    for (int r = 0; r < H; ++r)
      for (int col = 0; col < W; ++col) mean[c] += img.at(r, col, c);
    mean[c] /= H * W;
    for (int r = 0; r < H; ++r)
      for (int col = 0; col < W; ++col) {
        const double d = img.at(r, col, c) - mean[c];
        sd[c] += d * d;
      }
    sd[c] = std::sqrt(sd[c] / (H * W));
    if (sd[c] == 0.0) sd[c] = 1.0;
  }
  Eigen::VectorXd out(bank.dim());
  for (int d = 0; d < bank.dim(); ++d) {
    double acc = 0.0;
    for (int r = 0; r < H; ++r)
      for (int col = 0; col < W; ++col) {
        double s = 0.0;
        for (int c = 0; c < C; ++c)
          s += bank.weights(d, c) * (img.at(r, col, c) - mean[c]) / sd[c];
        acc += std::max(0.0, s);
      }
    out[d] = acc / (H * W);
  }
  return out;
}

} // namespace

TEST_CASE("kernel bank shapes and determinism") {
  EmbeddingConfig cfg;
  cfg.n_embed_dim = 4;
  cfg.kernel_size = 3;
  cfg.seed = 11;
  const KernelBank a = make_kernels(cfg, 2);
  CHECK(a.dim() == 4);
  CHECK(a.patch_len() == 3 * 3 * 2);
  const KernelBank b = make_kernels(cfg, 2);
  CHECK(testutil::bit_equal(a.weights, b.weights));

  cfg.seed = 12;
  const KernelBank c = make_kernels(cfg, 2);
  CHECK((a.weights - c.weights).cwiseAbs().maxCoeff() > 0.0);

  CHECK(error_code_of([&] {
          EmbeddingConfig bad;
          bad.kernel_size = 2;
          make_kernels(bad, 1);
        }) == Errc::invalid_argument);
}

TEST_CASE("hand case: 2x2 image, 1x1 unit kernel, no standardization -> 0.75") {
  ImageTensor img({2, 2, 1});
  img.data = {1.0f, -1.0f, 2.0f, 0.0f};
  KernelBank bank;
  bank.kind = KernelKind::image;
  bank.kernel_size = 1;
  bank.temporal_size = 1;
  bank.channels = 1;
  bank.weights = Eigen::MatrixXd::Ones(1, 1);
  bank.biases = Eigen::VectorXd::Zero(1);
  const Eigen::VectorXd f = embed_image(img, bank, /*standardize=*/false);
  CHECK(f.size() == 1);
  CHECK(f[0] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("zero image embeds to the zero vector") {
  ImageTensor img({5, 5, 2});
  EmbeddingConfig cfg;
  cfg.n_embed_dim = 8;
  cfg.seed = 1;
  const KernelBank bank = make_kernels(cfg, 2);
  const Eigen::VectorXd f = embed_image(img, bank);
  CHECK(f.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("non-negativity with zero biases and rectifier") {
  Rng rng(5);
  EmbeddingConfig cfg;
  cfg.n_embed_dim = 16;
  cfg.seed = 2;
  const KernelBank bank = make_kernels(cfg, 3);
  for (int i = 0; i < 10; ++i) {
    const ImageTensor img = random_image(rng, 8, 9, 3);
    const Eigen::VectorXd f = embed_image(img, bank);
    CHECK(f.minCoeff() >= 0.0);
  }
}

TEST_CASE("per-band positive affine rescaling leaves the embedding unchanged") {
  Rng rng(6);
  EmbeddingConfig cfg;
  cfg.n_embed_dim = 12;
  cfg.seed = 3;
  const KernelBank bank = make_kernels(cfg, 2);
  const ImageTensor img = random_image(rng, 10, 10, 2);
  ImageTensor scaled = img;
  for (uint32_t r = 0; r < 10; ++r)
    for (uint32_t c = 0; c < 10; ++c) {
      scaled.at(r, c, 0) = 3.5f * scaled.at(r, c, 0) + 100.0f;
      scaled.at(r, c, 1) = 0.04f * scaled.at(r, c, 1) - 7.0f;
    }
  const Eigen::VectorXd f0 = embed_image(img, bank);
  const Eigen::VectorXd f1 = embed_image(scaled, bank);
  CHECK((f0 - f1).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("k=1 small-case embeddings match the direct formula") {
  Rng rng(7);
  EmbeddingConfig cfg;
  cfg.n_embed_dim = 10;
  cfg.kernel_size = 1;
  cfg.seed = 4;
  for (int trial = 0; trial < 20; ++trial) {
    const int h = 2 + static_cast<int>(rng.uniform_int(3));
    const int w = 2 + static_cast<int>(rng.uniform_int(3));
    const int c = 1 + static_cast<int>(rng.uniform_int(2));
    const KernelBank bank = make_kernels(cfg, c);
    const ImageTensor img = random_image(rng, h, w, c);
    const Eigen::VectorXd got = embed_image(img, bank);
    const Eigen::VectorXd want = direct_k1_embedding(img, bank);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("image errors: too small, channel mismatch") {
  EmbeddingConfig cfg;
  cfg.n_embed_dim = 2;
  cfg.kernel_size = 3;
  const KernelBank bank = make_kernels(cfg, 1);
  ImageTensor tiny({2, 5, 1});
  CHECK(error_code_of([&] { embed_image(tiny, bank); }) == Errc::image_too_small);
  ImageTensor wrong({5, 5, 2});
  CHECK(error_code_of([&] { embed_image(wrong, bank); }) == Errc::channel_mismatch);
}

TEST_CASE("sequence with T = t and equal frames equals collapsed-kernel image embedding") {
  Rng rng(8);
  EmbeddingConfig cfg;
  cfg.n_embed_dim = 6;
  cfg.kernel_size = 3;
  cfg.temporal_kernel_size = 2;
  cfg.seed = 9;
  const KernelBank seq_bank = make_kernels(cfg, 1, KernelKind::sequence);

  const ImageTensor frame = random_image(rng, 7, 7, 1);
  ImageTensor seq({2, 7, 7, 1});
  for (uint32_t t = 0; t < 2; ++t)
    for (uint32_t r = 0; r < 7; ++r)
      for (uint32_t c = 0; c < 7; ++c) seq.at4(t, r, c, 0) = frame.at(r, c, 0);

  // collapse each kernel over its time axis
  KernelBank img_bank;
  img_bank.kind = KernelKind::image;
  img_bank.kernel_size = 3;
  img_bank.temporal_size = 1;
  img_bank.channels = 1;
  const int L = 3 * 3 * 1;
  img_bank.weights = Eigen::MatrixXd::Zero(6, L);
  for (int d = 0; d < 6; ++d)
    for (int t = 0; t < 2; ++t)
      for (int j = 0; j < L; ++j) img_bank.weights(d, j) += seq_bank.weights(d, t * L + j);
  img_bank.biases = Eigen::VectorXd::Zero(6);

  const Eigen::VectorXd via_seq = embed_sequence(seq, seq_bank);
  const Eigen::VectorXd via_img = embed_image(frame, img_bank);
  CHECK((via_seq - via_img).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zero sequence embeds to zero; short sequence raises") {
  EmbeddingConfig cfg;
  cfg.n_embed_dim = 4;
  cfg.temporal_kernel_size = 2;
  const KernelBank bank = make_kernels(cfg, 1, KernelKind::sequence);
  ImageTensor zseq({3, 6, 6, 1});
  CHECK(embed_sequence(zseq, bank).cwiseAbs().maxCoeff() == 0.0);
  ImageTensor short_seq({1, 6, 6, 1});
  CHECK(error_code_of([&] { embed_sequence(short_seq, bank); }) == Errc::sequence_too_short);
}

TEST_CASE("embed_corpus: duplicates, permutation, sources, empties") {
  TempDir tmp("embed_corpus");
  Rng rng(10);
  std::map<std::string, ImageTensor> corpus;
  std::vector<std::pair<std::string, ImageTensor>> entries;
  for (int i = 0; i < 6; ++i) {
    auto t = random_image(rng, 9, 9, 2);
    corpus["img" + std::to_string(i)] = t;
    entries.emplace_back("img" + std::to_string(i), t);
  }
  record::write_records(entries, tmp.path("c.circ"));
  const TensorLoader mem_loader = [&](const std::string& key) { return corpus.at(key); };

  EmbeddingConfig cfg;
  cfg.n_embed_dim = 7;
  cfg.seed = 12;

  const std::vector<std::string> keys{"img0", "img3", "img0", "img5"};
  const EmbeddingMatrix m = embed_corpus(mem_loader, keys, cfg);
  CHECK(m.values.rows() == 4);
  CHECK(testutil::bit_equal(m.values.row(0), m.values.row(2))); // duplicated key, identical rows

  // record-file source gives exactly the same matrix
  record::RecordReader reader(tmp.path("c.circ"));
  const EmbeddingMatrix m2 = embed_corpus(reader, keys, cfg);
  CHECK(testutil::bit_equal(m.values, m2.values));

  // permuting keys permutes rows identically
  const std::vector<std::string> perm{"img5", "img0", "img3", "img0"};
  const EmbeddingMatrix mp = embed_corpus(mem_loader, perm, cfg);
  CHECK(testutil::bit_equal(mp.values.row(0), m.values.row(3)));
  CHECK(testutil::bit_equal(mp.values.row(1), m.values.row(0)));
  CHECK(testutil::bit_equal(mp.values.row(2), m.values.row(1)));

  // determinism across thread counts, bit-exact
  const EmbeddingMatrix mt = embed_corpus(mem_loader, keys, cfg, 4);
  CHECK(testutil::bit_equal(m.values, mt.values));

  CHECK(error_code_of([&] { embed_corpus(mem_loader, {}, cfg); }) == Errc::empty_input);
  CHECK(error_code_of([&] { embed_corpus(reader, {"missing"}, cfg); }) == Errc::key_not_found);

  // heterogeneous dims across the corpus
  std::map<std::string, ImageTensor> hetero = corpus;
  hetero["odd"] = random_image(rng, 5, 5, 2);
  CHECK(error_code_of([&] {
          embed_corpus([&](const std::string& k) { return hetero.at(k); }, {"img0", "odd"}, cfg);
        }) == Errc::heterogeneous_dims);
}

TEST_CASE("embeddings csv round-trips") {
  TempDir tmp("embed_csv");
  EmbeddingMatrix m;
  m.keys = {"a", "b"};
  m.values.resize(2, 3);
  m.values << 0.5, -1.25, 3.75, 1e-17, 2.0, -0.125;
  write_embeddings_csv(tmp.path("e.csv"), m);
  const EmbeddingMatrix got = read_embeddings_csv(tmp.path("e.csv"));
  CHECK(got.keys == m.keys);
  CHECK(testutil::bit_equal(got.values, m.values));
}
