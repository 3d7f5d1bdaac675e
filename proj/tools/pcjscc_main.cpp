// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: dataset generation, training, evaluation, SNR
// sweeps, gradient checking, report rendering and aggregate verification.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pcjscc/pcjscc.hpp"

namespace fs = std::filesystem;
using namespace pcjscc;

namespace {

struct GlobalOpts {
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::string config;
  bool deterministic = false;  // accepted for interface stability; every code
                               // path is already seed-deterministic
};

std::vector<double> parse_snr_list(const std::string& text) {
  std::vector<double> out;
  std::string cur;
  for (char c : text + ",") {
    if (c == ',') {
      if (!cur.empty()) out.push_back(parse_double(cur));
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur += c;
    }
  }
  if (out.empty()) throw std::invalid_argument("empty SNR list");
  return out;
}

DatasetSpec dataset_spec_for(const std::string& data_dir, int num_points,
                             const GlobalOpts& g) {
  DatasetSpec spec;
  if (data_dir.empty()) {
    spec.source = DatasetSpec::Source::kSynthetic;
  } else {
    spec.source = DatasetSpec::Source::kDirectory;
    spec.directory = data_dir;
  }
  spec.num_points = num_points;
  spec.gen_seed = g.seed;
  spec.split_seed = g.seed;
  return spec;
}

int cmd_gen_data(const GlobalOpts& g, const std::string& out,
                 const std::string& families_csv, int instances,
                 int raw_points, int num_points, double train_fraction,
                 bool no_pose) {
  DatasetSpec spec = dataset_spec_for("", num_points, g);
  spec.train_fraction = train_fraction;
  spec.recipe.instances_per_family = instances;
  spec.recipe.raw_points = raw_points;
  spec.recipe.random_pose = !no_pose;
  if (families_csv != "all") {
    spec.recipe.families.clear();
    std::string cur;
    for (char c : families_csv + ",") {
      if (c == ',') {
        if (!cur.empty()) spec.recipe.families.push_back(parse_family(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
  }
  const Dataset ds = load_dataset(spec);
  write_dataset(ds, out);
  std::cout << "wrote " << ds.train.size() << " train / " << ds.test.size()
            << " test clouds to " << out << "\n";
  return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& data_dir,
              const std::string& out, TrainConfig cfg, bool seed_set) {
  if (seed_set) cfg.seed = g.seed;
  cfg.validate();
  const ModelConfig arch = cfg.resolved_arch();
  DatasetSpec spec = dataset_spec_for(data_dir, arch.output_points(), g);
  const Dataset ds = load_dataset(spec);
  std::cout << "training on " << ds.train.size() << " clouds ("
            << ds.test.size() << " validation), n=" << cfg.bandwidth_n
            << ", epochs=" << cfg.epochs << "\n";
  fs::create_directories(out);
  cfg.checkpoint_dir = out;
  auto [params, history] = train(ds.train, ds.test, cfg, &std::cout);
  history.to_csv(out + "/history.csv");
  std::ofstream cfg_echo(out + "/config.txt");
  cfg_echo << cfg.to_text();
  std::cout << "final val_cd " << history.epochs.back().val_cd
            << ", checkpoint " << out << "/checkpoint_final.bin\n";
  return 0;
}

SweepVariant load_variant(const std::string& spec_text) {
  // [name=]path[:bandwidth]
  std::string text = spec_text;
  SweepVariant v;
  const auto eq = text.find('=');
  if (eq != std::string::npos) {
    v.name = text.substr(0, eq);
    text = text.substr(eq + 1);
  }
  const auto colon = text.rfind(':');
  if (colon != std::string::npos &&
      text.find_first_not_of("0123456789", colon + 1) == std::string::npos &&
      colon + 1 < text.size()) {
    v.declared_bandwidth = std::stoi(text.substr(colon + 1));
    text = text.substr(0, colon);
  }
  if (v.name.empty()) v.name = fs::path(text).stem().string();
  v.params = load_checkpoint(text);
  return v;
}

int cmd_sweep(const GlobalOpts& g, const std::vector<std::string>& checkpoints,
              const std::string& snr_csv, const std::string& data_dir,
              const std::string& out, double psnr_peak, bool noiseless) {
  std::vector<SweepVariant> variants;
  for (const auto& text : checkpoints) variants.push_back(load_variant(text));
  std::vector<double> snrs =
      noiseless ? std::vector<double>{kInf} : parse_snr_list(snr_csv);
  DatasetSpec spec = dataset_spec_for(
      data_dir, variants.front().params.cfg.output_points(), g);
  const Dataset ds = load_dataset(spec);
  const SweepResult result =
      run_sweep(variants, snrs, ds.test, ds.test_ids, g.seed, psnr_peak);
  emit_report(result, out);
  std::cout << "sweep: " << result.cells.size() << " cells, "
            << result.rows.size() << " per-sample rows -> " << out << "\n";
  return 0;
}

int cmd_evaluate(const GlobalOpts& g, const std::string& checkpoint,
                 const std::string& data_dir, double snr_db, bool noiseless,
                 const std::string& out, double psnr_peak) {
  std::vector<std::string> spec{checkpoint};
  return cmd_sweep(g, spec, fmt_double(noiseless ? kInf : snr_db), data_dir,
                   out, psnr_peak, noiseless);
}

int cmd_gradcheck(const GlobalOpts& g, int feature_dim, int pool_n, int points,
                  int centers, int grid, int groups, int hidden, double beta,
                  bool no_folding, double tolerance) {
  ModelConfig mc;
  mc.latent_n = pool_n;
  mc.feature_dim = feature_dim;
  mc.num_centers = centers;
  mc.grid_size = grid;
  mc.num_groups = groups;
  mc.embed_hidden = hidden;
  mc.attn_blocks = 1;
  mc.ffn_hidden = hidden;
  mc.gamma_hidden = hidden;
  mc.delta_hidden = hidden;
  mc.rho_hidden = hidden;
  mc.fold_hidden = hidden;
  mc.no_folding = no_folding;
  // start the pool away from the orthonormal optimum: the Frobenius penalty
  // is non-differentiable at exactly zero, so finite differences only make
  // sense off that point
  ModelParams params = ModelParams::init(mc, g.seed + 1, true);
  Rng rng(mix_seed(g.seed, 0x676331ULL));
  std::normal_distribution<double> gauss(0.0, 1.0);
  PointMat pts(points, 3);
  for (int i = 0; i < points; ++i)
    for (int j = 0; j < 3; ++j) pts(i, j) = gauss(rng);
  const PointCloud cloud = normalize_to_range(make_cloud(pts), -1.0, 1.0);
  GradCheckOptions opt;
  opt.beta = beta;
  opt.tolerance = tolerance;
  const GradCheckReport report = gradcheck(params, cloud, opt);
  std::cout << report.to_string();
  return report.pass() ? 0 : 1;
}

int cmd_report(const std::string& sweep_dir, const std::string& out) {
  const SweepResult result = load_sweep_dir(sweep_dir);
  emit_report(result, out.empty() ? sweep_dir : out);
  std::cout << "report rendered to " << (out.empty() ? sweep_dir : out)
            << "\n";
  return 0;
}

int cmd_verify_aggregates(const std::string& sweep_dir) {
  const auto mismatches = verify_aggregates(sweep_dir);
  if (mismatches.empty()) {
    std::cout << "aggregates verified: " << sweep_dir << "\n";
    return 0;
  }
  for (const auto& m : mismatches) std::cerr << "mismatch: " << m << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point-cloud transmission over a simulated AWGN channel: "
               "learned encoder, feature-pool receiver, folding decoder"};
  app.require_subcommand(1);
  GlobalOpts g;
  app.add_option("--seed", g.seed, "global RNG seed");
  app.add_option("--out-dir", g.out_dir, "default output directory");
  app.add_option("--config", g.config, "training config file");
  app.add_flag("--deterministic", g.deterministic,
               "deterministic mode (all code paths already are)");

  // gen-data
  std::string gd_out, gd_families = "all";
  int gd_instances = 64, gd_raw = 2048, gd_points = 512;
  double gd_fraction = 0.875;
  bool gd_no_pose = false;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--out", gd_out, "output directory");
  gen->add_option("--families", gd_families, "comma list or 'all'");
  gen->add_option("--instances", gd_instances, "instances per family");
  gen->add_option("--raw-points", gd_raw, "surface samples before FPS");
  gen->add_option("--num-points", gd_points, "points per cloud after FPS");
  gen->add_option("--train-fraction", gd_fraction, "train split fraction");
  gen->add_flag("--no-pose", gd_no_pose, "skip random pose/scale");

  // train
  std::string tr_data, tr_out;
  TrainConfig tr_cfg;
  auto* tr = app.add_subcommand("train", "train a transceiver");
  tr->add_option("--data", tr_data, "dataset directory (default: synthetic)");
  tr->add_option("--out", tr_out, "output directory");
  int tr_epochs = -1, tr_batch = -1, tr_bandwidth = -1;
  double tr_lr = -1, tr_beta = -1, tr_snr = std::numeric_limits<double>::quiet_NaN();
  bool tr_no_ort = false, tr_no_folding = false, tr_non_ortho = false;
  tr->add_option("--epochs", tr_epochs, "override epochs");
  tr->add_option("--batch-size", tr_batch, "override batch size");
  tr->add_option("--bandwidth", tr_bandwidth, "override bandwidth n");
  tr->add_option("--lr", tr_lr, "override initial learning rate");
  tr->add_option("--beta", tr_beta, "override orthogonality weight");
  tr->add_option("--snr-db", tr_snr, "override training SNR");
  tr->add_flag("--no-ort", tr_no_ort, "ablation: drop orthogonality loss");
  tr->add_flag("--no-folding", tr_no_folding, "ablation: residual head");
  tr->add_flag("--non-ortho-init", tr_non_ortho, "non-orthogonal pool init");

  // evaluate
  std::string ev_ckpt, ev_data, ev_out;
  double ev_snr = 10.0, ev_peak = 1.0;
  bool ev_noiseless = false;
  auto* ev = app.add_subcommand("evaluate", "evaluate one checkpoint");
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--data", ev_data, "dataset directory (default: synthetic)");
  ev->add_option("--snr-db", ev_snr, "evaluation SNR");
  ev->add_flag("--noiseless", ev_noiseless, "noiseless channel sentinel");
  ev->add_option("--out", ev_out, "output directory");
  ev->add_option("--psnr-peak", ev_peak, "PSNR peak p");

  // sweep
  std::vector<std::string> sw_ckpts;
  std::string sw_snrs = "0,5,10,15,20", sw_data, sw_out;
  double sw_peak = 1.0;
  bool sw_noiseless = false;
  auto* sw = app.add_subcommand("sweep", "evaluate checkpoints over SNRs");
  sw->add_option("--checkpoint", sw_ckpts,
                 "checkpoint as [name=]path[:bandwidth]; repeatable")
      ->required();
  sw->add_option("--snr-list", sw_snrs, "comma-separated SNRs in dB");
  sw->add_flag("--noiseless", sw_noiseless, "single noiseless column");
  sw->add_option("--data", sw_data, "dataset directory (default: synthetic)");
  sw->add_option("--out", sw_out, "output directory");
  sw->add_option("--psnr-peak", sw_peak, "PSNR peak p");

  // gradcheck
  int gc_d = 8, gc_n = 8, gc_points = 32, gc_centers = 8, gc_grid = 2,
      gc_groups = 4, gc_hidden = 16;
  double gc_beta = 1.0, gc_tol = 1e-4;
  bool gc_no_folding = false;
  auto* gc = app.add_subcommand("gradcheck",
                                "finite-difference check of all gradients");
  gc->add_option("--feature-dim", gc_d, "feature width d");
  gc->add_option("--pool-n", gc_n, "pool rows / bandwidth n");
  gc->add_option("--points", gc_points, "sample cloud size");
  gc->add_option("--centers", gc_centers, "decoder centers");
  gc->add_option("--grid", gc_grid, "folding grid size");
  gc->add_option("--groups", gc_groups, "encoder groups");
  gc->add_option("--hidden", gc_hidden, "hidden width for all MLPs");
  gc->add_option("--beta", gc_beta, "orthogonality weight");
  gc->add_option("--tolerance", gc_tol, "max relative error allowed");
  gc->add_flag("--no-folding", gc_no_folding, "check the ablation head");

  // report
  std::string rp_dir, rp_out;
  auto* rp = app.add_subcommand("report", "re-render plots from a sweep dir");
  rp->add_option("--sweep-dir", rp_dir, "sweep output directory")->required();
  rp->add_option("--out", rp_out, "target directory (default: sweep dir)");

  // verify-aggregates
  std::string va_dir;
  auto* va = app.add_subcommand("verify-aggregates",
                                "recompute aggregates from per-sample rows");
  va->add_option("--sweep-dir", va_dir, "sweep output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_gen_data(g, gd_out.empty() ? g.out_dir : gd_out, gd_families,
                          gd_instances, gd_raw, gd_points, gd_fraction,
                          gd_no_pose);
    if (tr->parsed()) {
      TrainConfig cfg = g.config.empty() ? tr_cfg
                                         : TrainConfig::from_file(g.config);
      if (tr_epochs >= 0) cfg.epochs = tr_epochs;
      if (tr_batch >= 0) cfg.batch_size = tr_batch;
      if (tr_bandwidth >= 0) cfg.bandwidth_n = tr_bandwidth;
      if (tr_lr >= 0) cfg.lr_init = tr_lr;
      if (tr_beta >= 0) cfg.beta = tr_beta;
      if (!std::isnan(tr_snr)) cfg.train_snr_db = tr_snr;
      if (tr_no_ort) cfg.no_ort = true;
      if (tr_no_folding) cfg.no_folding = true;
      if (tr_non_ortho) cfg.non_ortho_pool_init = true;
      return cmd_train(g, tr_data, tr_out.empty() ? g.out_dir : tr_out, cfg,
                       app.count("--seed") > 0);
    }
    if (ev->parsed())
      return cmd_evaluate(g, ev_ckpt, ev_data, ev_snr, ev_noiseless,
                          ev_out.empty() ? g.out_dir : ev_out, ev_peak);
    if (sw->parsed())
      return cmd_sweep(g, sw_ckpts, sw_snrs, sw_data,
                       sw_out.empty() ? g.out_dir : sw_out, sw_peak,
                       sw_noiseless);
    if (gc->parsed())
      return cmd_gradcheck(g, gc_d, gc_n, gc_points, gc_centers, gc_grid,
                           gc_groups, gc_hidden, gc_beta, gc_no_folding,
                           gc_tol);
    if (rp->parsed()) return cmd_report(rp_dir, rp_out);
    if (va->parsed()) return cmd_verify_aggregates(va_dir);
  } catch (const std::exception& e) {
    const nlohmann::json err = {{"error", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
