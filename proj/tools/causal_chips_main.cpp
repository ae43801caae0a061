#include "causalchips/causal/confound.hpp"
#include "causalchips/causal/frame.hpp"
#include "causalchips/causal/hetero.hpp"
#include "causalchips/core/csv.hpp"
#include "causalchips/core/error.hpp"
#include "causalchips/core/log.hpp"
#include "causalchips/core/parallel.hpp"
#include "causalchips/core/pgm.hpp"
#include "causalchips/embed/embedding.hpp"
#include "causalchips/geo/chip.hpp"
#include "causalchips/geo/raster.hpp"
#include "causalchips/record/record_file.hpp"
#include "causalchips/synth/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace causalchips;

namespace {

struct GlobalOpts {
  uint64_t seed = 0;
  int threads = hardware_threads();
  std::string log_level = "info";
};

void add_global(CLI::App* cmd, GlobalOpts& g) {
  cmd->add_option("--seed", g.seed, "Seed for all randomness")->capture_default_str();
  cmd->add_option("--threads", g.threads, "Worker thread cap (results are thread-count invariant)")
      ->capture_default_str();
  cmd->add_option("--log-level", g.log_level, "error|info|debug")->capture_default_str();
}

void apply_log_level(const GlobalOpts& g) { log::set_level(log::parse_level(g.log_level)); }

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  size_t start = 0;
  while (start <= s.size()) {
    const size_t pos = s.find(',', start);
    if (pos == std::string::npos) {
      if (start < s.size()) out.push_back(s.substr(start));
      break;
    }
    if (pos > start) out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

struct SalienceOpts {
  int patch = 8;
  int stride = 4;
};

SalienceOpts parse_salience(const std::string& s) {
  SalienceOpts o;
  for (const auto& kv : split_list(s)) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) fail(Errc::invalid_argument, "--salience wants patch=P,stride=S");
    const std::string key = kv.substr(0, eq);
    const int value = std::stoi(kv.substr(eq + 1));
    if (key == "patch")
      o.patch = value;
    else if (key == "stride")
      o.stride = value;
    else
      fail(Errc::invalid_argument, "--salience key '" + key + "' unknown");
  }
  return o;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) fail(Errc::io_error, "cannot write " + path);
  out << j.dump(2) << "\n";
}

json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

void write_salience_files(const std::string& out_dir, const std::string& tag, const std::string& key,
                          const causal::SalienceGrid& grid) {
  const std::string prefix = tag.empty() ? "salience_" : tag + "_salience_";
  const std::string base = (fs::path(out_dir) / (prefix + key)).string();
  {
    std::ofstream csv_out(base + ".csv");
    if (!csv_out) fail(Errc::io_error, "cannot write " + base + ".csv");
    for (Eigen::Index r = 0; r < grid.values.rows(); ++r) {
      for (Eigen::Index c = 0; c < grid.values.cols(); ++c)
        csv_out << csv::format_double(grid.values(r, c)) << (c + 1 == grid.values.cols() ? "" : ",");
      csv_out << "\n";
    }
  }
  write_pgm(base + ".pgm", grid.values);
}

// ---------------------------------------------------------------- extract

struct ExtractOpts {
  GlobalOpts g;
  std::string points, pool, out_dir, format = "csv", bands;
  int width = 500;
  double pad = 0.0;
  bool has_pad = false;
};

int run_extract(const ExtractOpts& o) {
  apply_log_level(o.g);
  const auto table = csv::read_table(o.points);
  const auto key_col = table.column("key");
  const auto lon_col = table.column("lon");
  const auto lat_col = table.column("lat");
  if (!key_col || !lon_col || !lat_col)
    fail(Errc::corrupt_file, o.points + ": needs key,lon,lat columns");

  std::vector<int> bands;
  for (const auto& b : split_list(o.bands)) bands.push_back(std::stoi(b) - 1);

  std::vector<geo::ChipRequest> requests;
  for (const auto& row : table.rows)
    requests.push_back({row[*key_col], csv::parse_value(row[*lon_col]),
                        csv::parse_value(row[*lat_col]), o.width, bands});

  geo::ChipOptions opts;
  if (o.has_pad) opts.pad = static_cast<float>(o.pad);
  const auto format = o.format == "record" ? geo::ChipFormat::record : geo::ChipFormat::csv;
  const auto report =
      geo::extract_from_pool(requests, split_list(o.pool), o.out_dir, format, opts, o.g.threads);

  std::ofstream rep_out(fs::path(o.out_dir) / "extract_report.csv");
  rep_out << "key,raster_index\n";
  for (const auto& e : report.entries) rep_out << e.key << "," << e.raster_index << "\n";
  log::info("matched " + std::to_string(report.matched()) + "/" +
            std::to_string(report.entries.size()) + " points");
  for (const auto& e : report.entries)
    if (e.raster_index < 0) log::info("unmatched key: " + e.key + (e.error.empty() ? "" : " (" + e.error + ")"));
  return 0;
}

// ---------------------------------------------------------------- pack

struct PackOpts {
  GlobalOpts g;
  std::string chips_dir, out, points, pool, bands;
  int width = 500;
  double pad = 0.0;
  bool has_pad = false;
};

int run_pack(const PackOpts& o) {
  apply_log_level(o.g);
  if (o.chips_dir.empty() == o.points.empty())
    fail(Errc::invalid_argument, "pack wants exactly one of --chips or --points");

  record::RecordWriter writer(o.out);
  if (!o.chips_dir.empty()) {
    // gather Key{key}_BAND{band}.csv per key
    std::map<std::string, std::map<int, std::string>> by_key;
    for (const auto& entry : fs::directory_iterator(o.chips_dir)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("Key", 0) != 0 || name.size() < 9) continue;
      const size_t band_pos = name.rfind("_BAND");
      if (band_pos == std::string::npos || name.substr(name.size() - 4) != ".csv") continue;
      const std::string key = name.substr(3, band_pos - 3);
      const int band = std::stoi(name.substr(band_pos + 5, name.size() - 4 - band_pos - 5));
      by_key[key][band] = entry.path().string();
    }
    if (by_key.empty()) fail(Errc::empty_input, "no Key*_BAND*.csv files in " + o.chips_dir);
    for (const auto& [key, files] : by_key) {
      int width = 0;
      std::vector<std::vector<float>> planes;
      for (const auto& [band, path] : files) {
        int w = 0;
        planes.push_back(geo::read_chip_csv(path, w));
        if (width == 0) width = w;
        if (w != width) fail(Errc::heterogeneous_dims, "bands of key '" + key + "' disagree on width");
      }
      ImageTensor t({static_cast<uint32_t>(width), static_cast<uint32_t>(width),
                     static_cast<uint32_t>(planes.size())});
      for (size_t b = 0; b < planes.size(); ++b)
        for (int r = 0; r < width; ++r)
          for (int c = 0; c < width; ++c)
            t.at(static_cast<size_t>(r), static_cast<size_t>(c), b) =
                planes[b][static_cast<size_t>(r) * width + c];
      writer.add(key, t);
    }
  } else {
    const auto table = csv::read_table(o.points);
    const auto key_col = table.column("key");
    const auto lon_col = table.column("lon");
    const auto lat_col = table.column("lat");
    if (!key_col || !lon_col || !lat_col)
      fail(Errc::corrupt_file, o.points + ": needs key,lon,lat columns");
    std::vector<int> bands;
    for (const auto& b : split_list(o.bands)) bands.push_back(std::stoi(b) - 1);
    std::vector<geo::Raster> rasters;
    for (const auto& p : split_list(o.pool)) rasters.push_back(geo::Raster::open(p));
    if (rasters.empty()) fail(Errc::invalid_argument, "pack --points needs --pool");
    geo::ChipOptions opts;
    if (o.has_pad) opts.pad = static_cast<float>(o.pad);
    size_t matched = 0;
    for (const auto& row : table.rows) {
      const geo::ChipRequest req{row[*key_col], csv::parse_value(row[*lon_col]),
                                 csv::parse_value(row[*lat_col]), o.width, bands};
      for (const auto& raster : rasters) {
        try {
          writer.add(req.key, geo::extract_chip(raster, req, opts));
          ++matched;
          break;
        } catch (const Error& e) {
          if (e.code() == Errc::point_outside_raster || e.code() == Errc::window_clipped) continue;
          throw;
        }
      }
    }
    log::info("packed " + std::to_string(matched) + "/" + std::to_string(table.rows.size()) +
              " points");
  }
  const record::RecordFile rf = writer.close();
  log::info("wrote " + std::to_string(rf.count) + " records to " + o.out);
  return 0;
}

// ---------------------------------------------------------------- validate

int run_validate(const std::string& path) {
  const record::ValidationReport rep = record::validate(path);
  std::cout << "file: " << path << "\n"
            << "total_bytes: " << rep.total_bytes << "\n"
            << "records_seen: " << rep.records_seen << "\n"
            << "records_ok: " << rep.records_ok << "\n"
            << "index_ok: " << (rep.index_ok ? "yes" : "no") << "\n";
  for (const auto& f : rep.findings) {
    const char* kind = "";
    switch (f.kind) {
      case record::ValidationFinding::Kind::crc_mismatch: kind = "CrcMismatch"; break;
      case record::ValidationFinding::Kind::bad_framing: kind = "BadFraming"; break;
      case record::ValidationFinding::Kind::truncated: kind = "Truncated"; break;
      case record::ValidationFinding::Kind::index_missing: kind = "IndexMissing"; break;
      case record::ValidationFinding::Kind::index_bad_entry: kind = "IndexBadEntry"; break;
      case record::ValidationFinding::Kind::count_mismatch: kind = "CountMismatch"; break;
    }
    std::cout << "finding: " << kind << " record=" << f.record_ordinal << " " << f.detail << "\n";
  }
  std::cout << (rep.all_ok() ? "OK" : "FAILED") << "\n";
  return rep.all_ok() ? 0 : 2;
}

// ---------------------------------------------------------------- embed

struct EmbedOpts {
  GlobalOpts g;
  std::string records, out;
  int dim = 100;
  int kernel = 3;
  int temporal_kernel = 2;
};

int run_embed(const EmbedOpts& o) {
  apply_log_level(o.g);
  record::RecordReader reader(o.records);
  embed::EmbeddingConfig ec;
  ec.n_embed_dim = o.dim;
  ec.kernel_size = o.kernel;
  ec.temporal_kernel_size = o.temporal_kernel;
  ec.seed = o.g.seed;
  const embed::EmbeddingMatrix m = embed::embed_corpus(reader, reader.keys(), ec, o.g.threads);
  embed::write_embeddings_csv(o.out, m);
  log::info("embedded " + std::to_string(m.keys.size()) + " records into D=" +
            std::to_string(o.dim) + " -> " + o.out);
  return 0;
}

// ---------------------------------------------------------------- confound

struct ConfoundOpts {
  GlobalOpts g;
  std::string records, data, out, out_dir, tag, salience;
  int dim = 100;
  int kernel = 3;
  int nboot = 200;
  int folds = 5;
  double lambda = 1.0;
  double clip = 0.01;
  bool plain_bootstrap = false;
};

int run_confound(const ConfoundOpts& o) {
  apply_log_level(o.g);
  record::RecordReader reader(o.records);
  causal::CausalFrame raw = causal::read_frame_csv(o.data);
  const auto keys = reader.keys();
  const std::set<std::string> avail(keys.begin(), keys.end());
  causal::DropResult dropped = causal::drop_na(raw, &avail);
  causal::CausalFrame frame = std::move(dropped.clean);
  const auto kept_cols = causal::drop_constant_x_columns(frame);
  if (dropped.dropped.size() > 0)
    log::info("dropped " + std::to_string(dropped.dropped.size()) + " units with missing values");
  if (static_cast<Eigen::Index>(kept_cols.size()) != raw.x.cols())
    log::info("dropped " + std::to_string(raw.x.cols() - static_cast<Eigen::Index>(kept_cols.size())) +
              " zero-variance covariate columns");

  embed::EmbeddingConfig ec;
  ec.n_embed_dim = o.dim;
  ec.kernel_size = o.kernel;
  ec.seed = o.g.seed;
  causal::ConfoundConfig cc;
  cc.l2_lambda = o.lambda;
  cc.clip_eps = o.clip;
  cc.n_boot = o.nboot;
  cc.folds = o.folds;
  cc.seed = o.g.seed;
  cc.cluster_bootstrap = !o.plain_bootstrap;
  cc.threads = o.g.threads;

  const embed::EmbeddingMatrix phi = embed::embed_corpus(reader, frame.keys, ec, o.g.threads);
  const causal::ConfoundingResult res = causal::analyze_image_confounding(frame, phi.values, cc);

  json out;
  out["config"] = {{"records", o.records}, {"data", o.data},     {"dim", o.dim},
                   {"kernel", o.kernel},   {"seed", o.g.seed},   {"nboot", o.nboot},
                   {"folds", o.folds},     {"lambda", o.lambda}, {"clip", o.clip},
                   {"cluster_bootstrap", !o.plain_bootstrap},    {"tag", o.tag}};
  out["tauHat_propensityHajek"] = res.tau_hajek;
  out["tauHat_propensityHajek_se"] = res.tau_hajek_se;
  out["metrics"] = {{"nll", res.metrics.nll}, {"acc", res.metrics.accuracy}, {"auc", res.metrics.auc}};
  out["ehat"] = vector_json(res.ehat);
  out["whichNA_dropped"] = dropped.dropped;
  write_json(o.out, out);
  log::info("tauHat_propensityHajek = " + std::to_string(res.tau_hajek) + " (se " +
            std::to_string(res.tau_hajek_se) + ")");

  if (!o.salience.empty()) {
    if (o.out_dir.empty()) fail(Errc::invalid_argument, "--salience needs --out-dir");
    fs::create_directories(o.out_dir);
    const SalienceOpts so = parse_salience(o.salience);
    const ImageTensor first = reader.read(frame.keys[0]);
    const int channels = static_cast<int>(first.dims.back());
    const embed::KernelBank bank = embed::make_kernels(ec, channels);
    // unique keys only; units sharing an image share the grid
    std::vector<std::string> uniq;
    std::map<std::string, size_t> unit_of;
    for (size_t i = 0; i < frame.keys.size(); ++i)
      if (unit_of.emplace(frame.keys[i], i).second) uniq.push_back(frame.keys[i]);
    parallel_for(uniq.size(), o.g.threads, [&](size_t i) {
      const size_t unit = unit_of[uniq[i]];
      const ImageTensor img = reader.read(uniq[i]);
      const Eigen::VectorXd x_tab = frame.x.row(static_cast<Eigen::Index>(unit)).transpose();
      const causal::SalienceGrid grid =
          causal::salience_map(img, bank, res.model, x_tab, so.patch, so.stride);
      write_salience_files(o.out_dir, o.tag, uniq[i], grid);
    });
    log::info("wrote " + std::to_string(uniq.size()) + " salience grids to " + o.out_dir);
  }
  return 0;
}

// ---------------------------------------------------------------- hetero

struct HeteroOpts {
  GlobalOpts g;
  std::string records, data, out, out_dir, tag, transport, salience;
  int k = 2;
  int dim = 100;
  int kernel = 3;
  int nboot = 200;
  int max_iters = 500;
  double tol = 1e-8;
  double gate_ridge = 1.0;
  double conf_level = 0.05;
};

int run_hetero(const HeteroOpts& o) {
  apply_log_level(o.g);
  record::RecordReader reader(o.records);
  const causal::CausalFrame raw = causal::read_frame_csv(o.data);

  embed::EmbeddingConfig ec;
  ec.n_embed_dim = o.dim;
  ec.kernel_size = o.kernel;
  ec.seed = o.g.seed;
  causal::HeterogeneityConfig hc;
  hc.k_clusters = o.k;
  hc.max_em_iters = o.max_iters;
  hc.tol = o.tol;
  hc.n_boot = o.nboot;
  hc.seed = o.g.seed;
  hc.gate_ridge = o.gate_ridge;
  hc.conf_level = o.conf_level;
  hc.threads = o.g.threads;

  const auto loader = [&reader](const std::string& key) { return reader.read(key); };
  const causal::HeteroAnalysis analysis =
      causal::analyze_image_heterogeneity(raw, loader, reader.keys(), ec, hc);
  const causal::HeterogeneityFit& fit = analysis.fit;

  json out;
  out["config"] = {{"records", o.records},   {"data", o.data},
                   {"k", o.k},               {"dim", o.dim},
                   {"kernel", o.kernel},     {"seed", o.g.seed},
                   {"nboot", o.nboot},       {"tol", o.tol},
                   {"max_iters", o.max_iters}, {"gate_ridge", o.gate_ridge},
                   {"conf_level", o.conf_level}, {"tag", o.tag}};
  out["clusterTaus_mean"] = vector_json(fit.tau_k);
  out["clusterTaus_sd"] = vector_json(fit.tau_k_sd);
  out["clusterProbs_mean"] = vector_json(fit.pi_mean);
  out["clusterProbs_sd"] = vector_json(fit.pi_sd);
  out["clusterProbs_lowerConf"] = vector_json(fit.pi_lower);
  out["impliedATE"] = fit.implied_ate;
  out["individualTau_est"] = vector_json(fit.individual_tau);
  out["whichNA_dropped"] = fit.dropped;

  if (!o.transport.empty()) {
    const auto table = csv::read_table(o.transport);
    const auto key_col = table.column("key");
    if (!key_col) fail(Errc::corrupt_file, o.transport + ": needs a key column");
    std::vector<std::string> tkeys;
    for (const auto& row : table.rows) tkeys.push_back(row[*key_col]);
    const embed::EmbeddingMatrix tphi = embed::embed_corpus(reader, tkeys, ec, o.g.threads);
    const Eigen::MatrixXd gate = causal::transportability(fit, tphi.values);
    json tj = json::array();
    for (size_t i = 0; i < tkeys.size(); ++i) {
      json row;
      row["key"] = tkeys[i];
      row["probs"] = vector_json(gate.row(static_cast<Eigen::Index>(i)).transpose());
      tj.push_back(row);
    }
    out["transportability"] = tj;
  }
  write_json(o.out, out);
  log::info("impliedATE = " + std::to_string(fit.implied_ate));

  if (!o.out_dir.empty()) {
    fs::create_directories(o.out_dir);
    // exemplar lists: top-10 by gate probability per cluster
    const Eigen::MatrixXd gate = causal::transportability(fit, analysis.phi.values);
    for (int k = 0; k < o.k; ++k) {
      std::vector<size_t> order(analysis.clean.n());
      std::iota(order.begin(), order.end(), size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return gate(static_cast<Eigen::Index>(a), k) > gate(static_cast<Eigen::Index>(b), k);
      });
      std::ofstream ex(fs::path(o.out_dir) / ("cluster" + std::to_string(k + 1) + "_exemplars.csv"));
      ex << "key,gate_prob\n";
      const size_t top = std::min<size_t>(10, order.size());
      for (size_t i = 0; i < top; ++i)
        ex << analysis.clean.keys[order[i]] << ","
           << csv::format_double(gate(static_cast<Eigen::Index>(order[i]), k)) << "\n";
    }

    if (!o.salience.empty()) {
      const SalienceOpts so = parse_salience(o.salience);
      const ImageTensor first = reader.read(analysis.clean.keys[0]);
      const embed::KernelBank bank = embed::make_kernels(ec, static_cast<int>(first.dims.back()));
      std::vector<std::string> uniq;
      std::map<std::string, size_t> unit_of;
      for (size_t i = 0; i < analysis.clean.keys.size(); ++i)
        if (unit_of.emplace(analysis.clean.keys[i], i).second) uniq.push_back(analysis.clean.keys[i]);
      parallel_for(uniq.size(), o.g.threads, [&](size_t i) {
        const auto unit = static_cast<Eigen::Index>(unit_of[uniq[i]]);
        Eigen::Index modal = 0;
        fit.resp.row(unit).maxCoeff(&modal);
        const ImageTensor img = reader.read(uniq[i]);
        const auto predict = [&](const Eigen::VectorXd& phi_vec) {
          const Eigen::MatrixXd g = causal::transportability(fit, phi_vec.transpose());
          return g(0, modal);
        };
        const causal::SalienceGrid grid =
            causal::occlusion_salience(img, bank, predict, so.patch, so.stride);
        write_salience_files(o.out_dir, o.tag, uniq[i], grid);
      });
      log::info("wrote " + std::to_string(uniq.size()) + " salience grids to " + o.out_dir);
    }
  }
  return 0;
}

// ---------------------------------------------------------------- synth

struct SynthOpts {
  GlobalOpts g;
  std::string out_dir, taus = "1,3";
  int n = 2000;
  int size = 32;
  int bands = 1;
  int holdout = 0;
  double tau = 1.0;
  double gamma = 4.0;
  double sigma = 0.5;
};

int run_synth_confounded(const SynthOpts& o) {
  apply_log_level(o.g);
  synth::SynthSpec spec;
  spec.n_units = o.n;
  spec.chip_size = o.size;
  spec.bands = o.bands;
  spec.tau = {o.tau};
  spec.gamma = o.gamma;
  spec.noise_sd = o.sigma;
  spec.seed = o.g.seed;
  const synth::SynthConfounded data = synth::gen_confounded(spec, o.g.threads);

  fs::create_directories(o.out_dir);
  {
    record::RecordWriter writer((fs::path(o.out_dir) / "chips.circ").string());
    for (size_t i = 0; i < data.keys.size(); ++i) writer.add(data.keys[i], data.chips[i]);
    writer.close();
  }
  causal::write_frame_csv((fs::path(o.out_dir) / "frame.csv").string(), data.frame);
  json truth;
  truth["config"] = {{"kind", "confounded"}, {"n", o.n},         {"size", o.size},
                     {"bands", o.bands},     {"tau", o.tau},     {"gamma", o.gamma},
                     {"sigma", o.sigma},     {"seed", o.g.seed}};
  truth["tau_true"] = data.tau_true;
  truth["e_true"] = vector_json(data.e_true);
  truth["brightness"] = vector_json(data.brightness);
  write_json((fs::path(o.out_dir) / "truth.json").string(), truth);
  log::info("synth confounded: " + std::to_string(o.n) + " units in " + o.out_dir);
  return 0;
}

int run_synth_hetero(const SynthOpts& o) {
  apply_log_level(o.g);
  synth::SynthSpec spec;
  spec.n_units = o.n + o.holdout;
  spec.chip_size = o.size;
  spec.bands = o.bands;
  spec.tau.clear();
  for (const auto& t : split_list(o.taus)) spec.tau.push_back(std::stod(t));
  spec.noise_sd = o.sigma;
  spec.seed = o.g.seed;
  const synth::SynthHeterogeneous data = synth::gen_heterogeneous(spec, o.g.threads);

  fs::create_directories(o.out_dir);
  {
    record::RecordWriter writer((fs::path(o.out_dir) / "chips.circ").string());
    for (size_t i = 0; i < data.keys.size(); ++i) writer.add(data.keys[i], data.chips[i]);
    writer.close();
  }
  // frame holds the first n units; the rest are held out for transportability
  causal::CausalFrame frame;
  frame.keys.assign(data.keys.begin(), data.keys.begin() + o.n);
  frame.w = data.frame.w.head(o.n);
  frame.y = data.frame.y.head(o.n);
  frame.x.resize(o.n, 0);
  causal::write_frame_csv((fs::path(o.out_dir) / "frame.csv").string(), frame);
  if (o.holdout > 0) {
    std::ofstream tf(fs::path(o.out_dir) / "transport.csv");
    tf << "key\n";
    for (int i = o.n; i < o.n + o.holdout; ++i) tf << data.keys[static_cast<size_t>(i)] << "\n";
  }
  json truth;
  truth["config"] = {{"kind", "hetero"},   {"n", o.n},         {"size", o.size},
                     {"bands", o.bands},   {"taus", spec.tau}, {"sigma", o.sigma},
                     {"holdout", o.holdout}, {"seed", o.g.seed}};
  truth["taus"] = spec.tau;
  truth["labels"] = std::vector<int>(data.labels.begin(), data.labels.begin() + o.n);
  if (o.holdout > 0)
    truth["holdout_labels"] = std::vector<int>(data.labels.begin() + o.n, data.labels.end());
  write_json((fs::path(o.out_dir) / "truth.json").string(), truth);
  log::info("synth hetero: " + std::to_string(o.n) + "+" + std::to_string(o.holdout) + " units in " +
            o.out_dir);
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"causal-chips: geolocated chip extraction, record packing, randomized-convolution "
               "embeddings, image-deconfounded ATE estimation, and image-driven effect "
               "heterogeneity"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Config file (INI; [subcommand] sections; flags override)");

  ExtractOpts ex;
  auto* cmd_extract = app.add_subcommand("extract", "Extract geolocated chips from a raster pool");
  cmd_extract->add_option("--points", ex.points, "CSV with key,lon,lat columns")->required();
  cmd_extract->add_option("--pool", ex.pool, "Comma-separated raster paths, searched in order")->required();
  cmd_extract->add_option("--width", ex.width, "Chip width in pixels")->capture_default_str();
  cmd_extract->add_option("--out", ex.out_dir, "Output directory")->required();
  auto* pad_opt = cmd_extract->add_option("--pad", ex.pad, "Pad value for windows past raster edges");
  cmd_extract->add_option("--format", ex.format, "csv|record")
      ->capture_default_str()
      ->check(CLI::IsMember({"csv", "record"}));
  cmd_extract->add_option("--bands", ex.bands, "Comma-separated 1-based band list (default all)");
  add_global(cmd_extract, ex.g);
  cmd_extract->callback([&] { ex.has_pad = pad_opt->count() > 0; });

  PackOpts pk;
  auto* cmd_pack = app.add_subcommand("pack", "Pack chips into a .circ record file");
  cmd_pack->add_option("--chips", pk.chips_dir, "Directory of Key*_BAND*.csv chip files");
  cmd_pack->add_option("--points", pk.points, "CSV with key,lon,lat (extract directly to records)");
  cmd_pack->add_option("--pool", pk.pool, "Comma-separated raster paths (with --points)");
  cmd_pack->add_option("--width", pk.width, "Chip width in pixels (with --points)")->capture_default_str();
  auto* pk_pad = cmd_pack->add_option("--pad", pk.pad, "Pad value for clipped windows");
  cmd_pack->add_option("--bands", pk.bands, "Comma-separated 1-based band list");
  cmd_pack->add_option("--out", pk.out, "Output .circ path")->required();
  add_global(cmd_pack, pk.g);
  cmd_pack->callback([&] { pk.has_pad = pk_pad->count() > 0; });

  std::string validate_path;
  auto* cmd_validate = app.add_subcommand("validate", "Check a .circ record file");
  cmd_validate->add_option("file", validate_path, "Record file path")->required();

  EmbedOpts em;
  auto* cmd_embed = app.add_subcommand("embed", "Randomized-convolution embeddings for a record file");
  cmd_embed->add_option("--records", em.records, "Input .circ record file")->required();
  cmd_embed->add_option("--dim", em.dim, "Embedding dimension")->capture_default_str();
  cmd_embed->add_option("--kernel", em.kernel, "Spatial kernel size (odd)")->capture_default_str();
  cmd_embed->add_option("--temporal-kernel", em.temporal_kernel, "Temporal kernel size (sequences)")
      ->capture_default_str();
  cmd_embed->add_option("--out", em.out, "Output embeddings CSV")->required();
  add_global(cmd_embed, em.g);

  ConfoundOpts cf;
  auto* cmd_confound = app.add_subcommand("confound", "Image-deconfounded ATE estimation");
  cmd_confound->add_option("--records", cf.records, "Input .circ record file")->required();
  cmd_confound->add_option("--data", cf.data, "Frame CSV: key,w,y[,lon,lat],x1..xP")->required();
  cmd_confound->add_option("--dim", cf.dim, "Embedding dimension")->capture_default_str();
  cmd_confound->add_option("--kernel", cf.kernel, "Spatial kernel size (odd)")->capture_default_str();
  cmd_confound->add_option("--nboot", cf.nboot, "Bootstrap replicates")->capture_default_str();
  cmd_confound->add_option("--folds", cf.folds, "Cross-validation folds")->capture_default_str();
  cmd_confound->add_option("--lambda", cf.lambda, "Ridge strength")->capture_default_str();
  cmd_confound->add_option("--clip", cf.clip, "Propensity clipping epsilon")->capture_default_str();
  cmd_confound->add_option("--out", cf.out, "Output result.json")->required();
  cmd_confound->add_option("--salience", cf.salience, "Occlusion grids, e.g. patch=8,stride=4");
  cmd_confound->add_option("--out-dir", cf.out_dir, "Directory for salience grids");
  cmd_confound->add_option("--tag", cf.tag, "Filename tag for figure outputs");
  cmd_confound->add_flag("--plain-bootstrap", cf.plain_bootstrap,
                         "Resample units independently instead of by image key");
  add_global(cmd_confound, cf.g);

  HeteroOpts ht;
  auto* cmd_hetero = app.add_subcommand("hetero", "Image-driven treatment-effect heterogeneity");
  cmd_hetero->add_option("--records", ht.records, "Input .circ record file")->required();
  cmd_hetero->add_option("--data", ht.data, "Frame CSV: key,w,y[,lon,lat],x1..xP")->required();
  cmd_hetero->add_option("--k", ht.k, "Number of effect clusters")->capture_default_str();
  cmd_hetero->add_option("--dim", ht.dim, "Embedding dimension")->capture_default_str();
  cmd_hetero->add_option("--kernel", ht.kernel, "Spatial kernel size (odd)")->capture_default_str();
  cmd_hetero->add_option("--nboot", ht.nboot, "Bootstrap replicates")->capture_default_str();
  cmd_hetero->add_option("--tol", ht.tol, "EM relative log-likelihood tolerance")->capture_default_str();
  cmd_hetero->add_option("--max-iters", ht.max_iters, "EM iteration cap")->capture_default_str();
  cmd_hetero->add_option("--gate-ridge", ht.gate_ridge, "Ridge on gate coefficients")->capture_default_str();
  cmd_hetero->add_option("--conf-level", ht.conf_level, "Lower-bound percentile for cluster probs")
      ->capture_default_str();
  cmd_hetero->add_option("--out", ht.out, "Output result.json")->required();
  cmd_hetero->add_option("--out-dir", ht.out_dir, "Directory for exemplars and salience grids");
  cmd_hetero->add_option("--tag", ht.tag, "Filename tag for figure outputs");
  cmd_hetero->add_option("--transport", ht.transport, "CSV of keys to score for transportability");
  cmd_hetero->add_option("--salience", ht.salience, "Occlusion grids, e.g. patch=8,stride=4");
  add_global(cmd_hetero, ht.g);

  SynthOpts sy;
  auto* cmd_synth = app.add_subcommand("synth", "Synthetic data with known ground truth");
  cmd_synth->require_subcommand(1);
  auto* cmd_synth_conf = cmd_synth->add_subcommand("confounded", "Image-confounded observational data");
  auto* cmd_synth_het = cmd_synth->add_subcommand("hetero", "Randomized experiment with effect clusters");
  for (CLI::App* sub : {cmd_synth_conf, cmd_synth_het}) {
    sub->add_option("--n", sy.n, "Number of units")->capture_default_str();
    sub->add_option("--size", sy.size, "Chip height = width in pixels")->capture_default_str();
    sub->add_option("--bands", sy.bands, "Bands per chip")->capture_default_str();
    sub->add_option("--sigma", sy.sigma, "Outcome noise sd")->capture_default_str();
    sub->add_option("--out-dir", sy.out_dir, "Output directory")->required();
  }
  cmd_synth_conf->add_option("--tau", sy.tau, "True treatment effect")->capture_default_str();
  cmd_synth_conf->add_option("--gamma", sy.gamma, "Confounding strength")->capture_default_str();
  cmd_synth_het->add_option("--taus", sy.taus, "Comma-separated cluster effects")->capture_default_str();
  cmd_synth_het->add_option("--holdout", sy.holdout, "Extra held-out units for transportability")
      ->capture_default_str();
  add_global(cmd_synth_conf, sy.g);
  add_global(cmd_synth_het, sy.g);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*cmd_extract) return run_extract(ex);
    if (*cmd_pack) return run_pack(pk);
    if (*cmd_validate) return run_validate(validate_path);
    if (*cmd_embed) return run_embed(em);
    if (*cmd_confound) return run_confound(cf);
    if (*cmd_hetero) return run_hetero(ht);
    if (*cmd_synth_conf) return run_synth_confounded(sy);
    if (*cmd_synth_het) return run_synth_hetero(sy);
  } catch (const Error& e) {
    log::error(e.what());
    return 2;
  } catch (const std::exception& e) {
    log::error(e.what());
    return 2;
  }
  return 0;
}
