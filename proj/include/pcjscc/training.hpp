// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "pcjscc/model.hpp"

namespace pcjscc {

// ---------------------------------------------------------------------------
// Losses

/// Chamfer distance plus its gradient with respect to the reconstruction.
/// Both NN directions contribute to d_recon; truth is constant.
inline double chamfer_with_grad(const PointMat& recon, const PointMat& truth,
                                Mat& d_recon) {
  const NnResult ab = nearest_neighbors(recon, truth, NnMode::kAccelerated);
  const NnResult ba = nearest_neighbors(truth, recon, NnMode::kAccelerated);
  const double cd = ab.sq_dist.mean() + ba.sq_dist.mean();
  d_recon = Mat::Zero(recon.rows(), 3);
  const double wa = 2.0 / static_cast<double>(recon.rows());
  for (Eigen::Index i = 0; i < recon.rows(); ++i)
    d_recon.row(i) +=
        wa * (recon.row(i) - truth.row(ab.index[static_cast<std::size_t>(i)]));
  const double wb = 2.0 / static_cast<double>(truth.rows());
  for (Eigen::Index j = 0; j < truth.rows(); ++j) {
    const auto i = ba.index[static_cast<std::size_t>(j)];
    d_recon.row(i) += wb * (recon.row(i) - truth.row(j));
  }
  return cd;
}

/// Frobenius orthogonality penalty and its gradient 2(OO^T - I)O / ||.||_F.
/// The value is the exact norm; only the gradient denominator is guarded, so
/// an orthonormal pool scores exactly zero.
inline double ortho_with_grad(const Mat& basis, Mat& d_basis) {
  const Eigen::Index n = basis.rows();
  const Mat m = basis * basis.transpose() - Mat::Identity(n, n);
  const double value = m.norm();
  d_basis = 2.0 * m * basis / std::max(value, 1e-12);
  return value;
}

struct LossBreakdown {
  double total = 0, cd = 0, ortho = 0;
};

/// L = CD(recon, truth) + beta * ||OO^T - I||_F.
inline LossBreakdown total_loss(const PointCloud& recon,
                                const PointCloud& truth,
                                const FeaturePool& pool, double beta) {
  if (recon.size() < 1 || truth.size() < 1)
    throw std::invalid_argument("total_loss: empty cloud");
  LossBreakdown out;
  out.cd = chamfer_distance(recon, truth);
  out.ortho = ortho_metric(pool);
  out.total = out.cd + beta * out.ortho;
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

struct TrainConfig {
  int epochs = 200;
  double lr_init = 3e-4;
  int warmup_epochs = 10;
  double beta = 1.0;
  double train_snr_db = 10.0;
  bool snr_range = false;  // sample train SNR uniformly from [lo, hi]
  double train_snr_lo = 0.0;
  double train_snr_hi = 20.0;
  double val_snr_db = std::numeric_limits<double>::quiet_NaN();  // -> train
  int bandwidth_n = 16;
  int batch_size = 32;
  std::uint64_t seed = 1;
  bool no_ort = false;
  bool no_folding = false;
  double weight_decay = 5e-2;
  int checkpoint_every = 0;  // epochs; 0 = final only
  std::string checkpoint_dir;
  bool non_ortho_pool_init = false;
  int steps_per_epoch = 1;  // set by train() from the dataset

  ModelConfig arch;

  double effective_beta() const { return no_ort ? 0.0 : beta; }
  double effective_val_snr() const {
    if (!std::isnan(val_snr_db)) return val_snr_db;
    return snr_range ? 0.5 * (train_snr_lo + train_snr_hi) : train_snr_db;
  }

  /// Sync the architecture with the training-level knobs.
  ModelConfig resolved_arch() const {
    ModelConfig a = arch;
    a.latent_n = bandwidth_n;
    a.no_folding = no_folding;
    return a;
  }

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs >= 1");
    if (beta < 0) throw std::invalid_argument("TrainConfig: beta >= 0");
    if (warmup_epochs < 0 || warmup_epochs >= epochs)
      throw std::invalid_argument("TrainConfig: need warmup_epochs < epochs");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size");
    if (lr_init <= 0) throw std::invalid_argument("TrainConfig: lr_init > 0");
    resolved_arch().validate();
  }

  void set_key(const std::string& key, const std::string& value);
  std::string to_text() const;
  static TrainConfig from_file(const std::string& path);
};

/// Linear warmup from 0 over the warmup span, then cosine decay from lr_init
/// to exactly 0 at step = epochs * steps_per_epoch.
inline double lr_at(long step, const TrainConfig& cfg) {
  const long spe = std::max(1, cfg.steps_per_epoch);
  const long warm = static_cast<long>(cfg.warmup_epochs) * spe;
  const long total = static_cast<long>(cfg.epochs) * spe;
  if (step <= 0 && warm > 0) return 0.0;
  if (step < warm)
    return cfg.lr_init * static_cast<double>(step) / static_cast<double>(warm);
  if (step >= total) return 0.0;
  const double progress = static_cast<double>(step - warm) /
                          static_cast<double>(total - warm);
  return cfg.lr_init * 0.5 * (1.0 + std::cos(M_PI * progress));
}

// ---------------------------------------------------------------------------
// Flat key=value config text

namespace detail {
inline bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw std::invalid_argument("bad boolean: '" + v + "'");
}
}  // namespace detail

inline void TrainConfig::set_key(const std::string& key,
                                 const std::string& value) {
  // training-level keys
  if (key == "epochs") epochs = static_cast<int>(parse_double(value));
  else if (key == "lr_init") lr_init = parse_double(value);
  else if (key == "warmup_epochs") warmup_epochs = static_cast<int>(parse_double(value));
  else if (key == "beta") beta = parse_double(value);
  else if (key == "train_snr_db") train_snr_db = parse_double(value);
  else if (key == "snr_range") snr_range = detail::parse_bool(value);
  else if (key == "train_snr_lo") train_snr_lo = parse_double(value);
  else if (key == "train_snr_hi") train_snr_hi = parse_double(value);
  else if (key == "val_snr_db") val_snr_db = parse_double(value);
  else if (key == "bandwidth_n") bandwidth_n = static_cast<int>(parse_double(value));
  else if (key == "batch_size") batch_size = static_cast<int>(parse_double(value));
  else if (key == "seed") seed = static_cast<std::uint64_t>(std::stoull(value));
  else if (key == "no_ort") no_ort = detail::parse_bool(value);
  else if (key == "no_folding") no_folding = detail::parse_bool(value);
  else if (key == "weight_decay") weight_decay = parse_double(value);
  else if (key == "checkpoint_every") checkpoint_every = static_cast<int>(parse_double(value));
  else if (key == "non_ortho_pool_init") non_ortho_pool_init = detail::parse_bool(value);
  // architecture keys
  else if (key == "feature_dim") arch.feature_dim = static_cast<int>(parse_double(value));
  else if (key == "num_centers") arch.num_centers = static_cast<int>(parse_double(value));
  else if (key == "grid_size") arch.grid_size = static_cast<int>(parse_double(value));
  else if (key == "num_groups") arch.num_groups = static_cast<int>(parse_double(value));
  else if (key == "group_radius_scale") arch.group_radius_scale = parse_double(value);
  else if (key == "embed_hidden") arch.embed_hidden = static_cast<int>(parse_double(value));
  else if (key == "attn_blocks") arch.attn_blocks = static_cast<int>(parse_double(value));
  else if (key == "ffn_hidden") arch.ffn_hidden = static_cast<int>(parse_double(value));
  else if (key == "gamma_hidden") arch.gamma_hidden = static_cast<int>(parse_double(value));
  else if (key == "delta_hidden") arch.delta_hidden = static_cast<int>(parse_double(value));
  else if (key == "rho_hidden") arch.rho_hidden = static_cast<int>(parse_double(value));
  else if (key == "fold_hidden") arch.fold_hidden = static_cast<int>(parse_double(value));
  else if (key == "denoise_reps") arch.denoise_reps = static_cast<int>(parse_double(value));
  else if (key == "unit_total_power") arch.unit_total_power = detail::parse_bool(value);
  else throw std::invalid_argument("unknown config key: '" + key + "'");
}

inline std::string TrainConfig::to_text() const {
  std::ostringstream out;
  out << "epochs = " << epochs << '\n'
      << "lr_init = " << fmt_double(lr_init) << '\n'
      << "warmup_epochs = " << warmup_epochs << '\n'
      << "beta = " << fmt_double(beta) << '\n'
      << "train_snr_db = " << fmt_double(train_snr_db) << '\n'
      << "snr_range = " << (snr_range ? 1 : 0) << '\n'
      << "train_snr_lo = " << fmt_double(train_snr_lo) << '\n'
      << "train_snr_hi = " << fmt_double(train_snr_hi) << '\n'
      << "bandwidth_n = " << bandwidth_n << '\n'
      << "batch_size = " << batch_size << '\n'
      << "seed = " << seed << '\n'
      << "no_ort = " << (no_ort ? 1 : 0) << '\n'
      << "no_folding = " << (no_folding ? 1 : 0) << '\n'
      << "weight_decay = " << fmt_double(weight_decay) << '\n'
      << "checkpoint_every = " << checkpoint_every << '\n'
      << "non_ortho_pool_init = " << (non_ortho_pool_init ? 1 : 0) << '\n'
      << "feature_dim = " << arch.feature_dim << '\n'
      << "num_centers = " << arch.num_centers << '\n'
      << "grid_size = " << arch.grid_size << '\n'
      << "num_groups = " << arch.num_groups << '\n'
      << "group_radius_scale = " << fmt_double(arch.group_radius_scale) << '\n'
      << "embed_hidden = " << arch.embed_hidden << '\n'
      << "attn_blocks = " << arch.attn_blocks << '\n'
      << "ffn_hidden = " << arch.ffn_hidden << '\n'
      << "gamma_hidden = " << arch.gamma_hidden << '\n'
      << "delta_hidden = " << arch.delta_hidden << '\n'
      << "rho_hidden = " << arch.rho_hidden << '\n'
      << "fold_hidden = " << arch.fold_hidden << '\n'
      << "denoise_reps = " << arch.denoise_reps << '\n'
      << "unit_total_power = " << (arch.unit_total_power ? 1 : 0) << '\n';
  if (!std::isnan(val_snr_db))
    out << "val_snr_db = " << fmt_double(val_snr_db) << '\n';
  return out.str();
}

inline TrainConfig TrainConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  TrainConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": expected key = value");
      continue;
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) continue;
    try {
      cfg.set_key(key, value);
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " +
                               e.what());
    }
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Training loop

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double cd_term = 0;
  double ortho_term = 0;
  double val_cd = 0;
  double lr = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  void to_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "epoch,train_loss,cd_term,ortho_term,val_cd,lr\n";
    for (const auto& r : epochs)
      out << r.epoch << ',' << fmt_double(r.train_loss) << ','
          << fmt_double(r.cd_term) << ',' << fmt_double(r.ortho_term) << ','
          << fmt_double(r.val_cd) << ',' << fmt_double(r.lr) << '\n';
  }
};

struct TrainingDiverged : std::runtime_error {
  long step;
  explicit TrainingDiverged(long s)
      : std::runtime_error("training diverged: non-finite loss at step " +
                           std::to_string(s)),
        step(s) {}
};

/// Mean chamfer distance of the model over a set of clouds at one SNR,
/// with per-sample noise streams derived from eval_seed.
inline double eval_mean_cd(const ModelParams& p,
                           const std::vector<PointCloud>& clouds,
                           double snr_db, std::uint64_t eval_seed) {
  if (clouds.empty()) throw std::invalid_argument("eval_mean_cd: empty set");
  ChannelConfig ch{snr_db, p.cfg.latent_n, eval_seed};
  double acc = 0.0;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    Rng rng(mix_seed(eval_seed, i));
    const PointCloud recon = model_forward(clouds[i], ch, p, rng);
    acc += chamfer_distance(recon, clouds[i]);
  }
  return acc / static_cast<double>(clouds.size());
}

/// Full optimization run; returns the trained parameters and the per-epoch
/// history. Deterministic for a fixed config and dataset.
inline std::pair<ModelParams, TrainHistory> train(
    const std::vector<PointCloud>& train_set,
    const std::vector<PointCloud>& val_set, TrainConfig cfg,
    std::ostream* log = nullptr) {
  cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty dataset");
  const ModelConfig arch = cfg.resolved_arch();
  for (const auto& c : train_set)
    if (c.size() != arch.output_points())
      throw std::invalid_argument(
          "train: cloud size " + std::to_string(c.size()) +
          " != decoder output " + std::to_string(arch.output_points()));

  ModelParams params =
      ModelParams::init(arch, cfg.seed, cfg.non_ortho_pool_init);
  auto refs = params.params();
  nn::AdamW opt;
  opt.weight_decay = cfg.weight_decay;
  opt.attach(refs);

  const int n_train = static_cast<int>(train_set.size());
  cfg.steps_per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;

  Rng shuffle_rng(mix_seed(cfg.seed, 0x73687566ULL));
  Rng noise_rng(mix_seed(cfg.seed, 0x6e6f6973ULL));
  Rng snr_rng(mix_seed(cfg.seed, 0x736e72ULL));

  std::vector<int> order(static_cast<std::size_t>(n_train));
  std::iota(order.begin(), order.end(), 0);

  const double beta = cfg.effective_beta();
  TrainHistory history;
  long global_step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double sum_cd = 0.0, sum_ortho = 0.0, sum_loss = 0.0;
    int batches = 0;
    double last_lr = 0.0;
    for (int start = 0; start < n_train; start += cfg.batch_size) {
      const int count = std::min(cfg.batch_size, n_train - start);
      params.zero_grads();
      double batch_cd = 0.0;
      for (int k = 0; k < count; ++k) {
        const PointCloud& cloud = train_set[order[start + k]];
        double snr = cfg.train_snr_db;
        if (cfg.snr_range) {
          std::uniform_real_distribution<double> u(cfg.train_snr_lo,
                                                   cfg.train_snr_hi);
          snr = u(snr_rng);
        }
        ChannelConfig ch{snr, arch.latent_n, 0};
        ForwardTrace trace;
        const PointCloud recon =
            model_forward(cloud, ch, params, noise_rng, nullptr, &trace);
        if (!recon.points.allFinite()) throw TrainingDiverged(global_step);
        Mat d_recon;
        batch_cd += chamfer_with_grad(recon.points, cloud.points, d_recon);
        d_recon /= static_cast<double>(count);
        model_backward(params, trace, d_recon);
      }
      batch_cd /= count;
      double batch_ortho = 0.0;
      if (beta > 0.0) {
        Mat d_pool;
        batch_ortho = ortho_with_grad(params.pool.value, d_pool);
        params.pool.grad += beta * d_pool;
      } else {
        batch_ortho = ortho_metric(params.feature_pool());
      }
      const double batch_loss = batch_cd + beta * batch_ortho;
      if (!std::isfinite(batch_loss)) throw TrainingDiverged(global_step);
      last_lr = lr_at(global_step, cfg);
      opt.step(refs, last_lr);
      ++global_step;
      sum_cd += batch_cd;
      sum_ortho += batch_ortho;
      sum_loss += batch_loss;
      ++batches;
    }
    if (!params.all_finite()) throw TrainingDiverged(global_step);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = sum_loss / batches;
    rec.cd_term = sum_cd / batches;
    rec.ortho_term = sum_ortho / batches;
    rec.lr = last_lr;
    rec.val_cd = val_set.empty()
                     ? std::numeric_limits<double>::quiet_NaN()
                     : eval_mean_cd(params, val_set, cfg.effective_val_snr(),
                                    mix_seed(cfg.seed, 0x76616cULL));
    history.epochs.push_back(rec);
    if (log)
      *log << "epoch " << epoch << " loss " << rec.train_loss << " cd "
           << rec.cd_term << " ortho " << rec.ortho_term << " val_cd "
           << rec.val_cd << " lr " << rec.lr << '\n';

    if (!cfg.checkpoint_dir.empty() && cfg.checkpoint_every > 0 &&
        (epoch + 1) % cfg.checkpoint_every == 0 && epoch + 1 < cfg.epochs) {
      std::filesystem::create_directories(cfg.checkpoint_dir);
      save_checkpoint(params, cfg.checkpoint_dir + "/checkpoint_epoch" +
                                  std::to_string(epoch + 1) + ".bin");
    }
  }
  if (!cfg.checkpoint_dir.empty()) {
    std::filesystem::create_directories(cfg.checkpoint_dir);
    save_checkpoint(params, cfg.checkpoint_dir + "/checkpoint_final.bin");
  }
  return {std::move(params), std::move(history)};
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct GradCheckOptions {
  double beta = 1.0;
  double fd_step = 1e-5;
  int max_entries_per_group = 1 << 20;
  double tolerance = 1e-4;
};

struct GradCheckGroup {
  std::string group;
  int entries = 0;
  double max_rel_err = 0;
  double max_abs_err = 0;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  double max_rel_err = 0;
  double tolerance = 1e-4;

  bool pass() const { return max_rel_err < tolerance; }

  std::string to_string() const {
    std::ostringstream out;
    for (const auto& g : groups) {
      char line[160];
      std::snprintf(line, sizeof(line),
                    "  %-10s entries %6d  max_rel %.3e  max_abs %.3e\n",
                    g.group.c_str(), g.entries, g.max_rel_err, g.max_abs_err);
      out << line;
    }
    out << (pass() ? "PASS" : "FAIL") << " max relative error "
        << fmt_double(max_rel_err) << " (tolerance " << fmt_double(tolerance)
        << ")\n";
    return out.str();
  }
};

/// Central finite differences of d(total_loss)/d(theta) over every parameter
/// group, at the noiseless sentinel so the loss is deterministic.
inline GradCheckReport gradcheck(ModelParams& params, const PointCloud& sample,
                                 const GradCheckOptions& opt = {}) {
  const ChannelConfig ch{kInf, params.cfg.latent_n, 0};
  Rng rng(0);

  auto loss_value = [&]() {
    const PointCloud recon = model_forward(sample, ch, params, rng);
    Mat scratch;
    double l = chamfer_with_grad(recon.points, sample.points, scratch);
    if (opt.beta > 0.0)
      l += opt.beta * ortho_metric(params.feature_pool());
    return l;
  };

  // analytic pass
  params.zero_grads();
  ForwardTrace trace;
  const PointCloud recon = model_forward(sample, ch, params, rng, nullptr,
                                         &trace);
  Mat d_recon;
  chamfer_with_grad(recon.points, sample.points, d_recon);
  model_backward(params, trace, d_recon);
  if (opt.beta > 0.0) {
    Mat d_pool;
    ortho_with_grad(params.pool.value, d_pool);
    params.pool.grad += opt.beta * d_pool;
  }

  GradCheckReport report;
  report.tolerance = opt.tolerance;
  std::map<std::string, GradCheckGroup> groups;
  for (auto& ref : params.params()) {
    auto& g = groups[ref.group];
    g.group = ref.group;
    Mat& value = ref.p->value;
    const Mat& grad = ref.p->grad;
    const auto total = static_cast<long>(value.size());
    const long budget = opt.max_entries_per_group;
    const long stride = std::max(1L, (total + budget - 1) / budget);
    for (long e = 0; e < total; e += stride) {
      const Eigen::Index r = e % value.rows();
      const Eigen::Index c = e / value.rows();
      const double saved = value(r, c);
      const double h = opt.fd_step * std::max(1.0, std::abs(saved));
      value(r, c) = saved + h;
      const double lp = loss_value();
      value(r, c) = saved - h;
      const double lm = loss_value();
      value(r, c) = saved;
      const double fd = (lp - lm) / (2.0 * h);
      const double a = grad(r, c);
      const double abs_err = std::abs(a - fd);
      const double rel_err = abs_err / std::max(1e-4, std::abs(a) + std::abs(fd));
      g.entries += 1;
      g.max_abs_err = std::max(g.max_abs_err, abs_err);
      g.max_rel_err = std::max(g.max_rel_err, rel_err);
    }
  }
  for (auto& [name, g] : groups) {
    report.max_rel_err = std::max(report.max_rel_err, g.max_rel_err);
    report.groups.push_back(g);
  }
  return report;
}

}  // namespace pcjscc
