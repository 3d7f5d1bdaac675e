// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <fstream>
#include <iostream>
#include <sstream>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pcjscc/channel.hpp"
#include "pcjscc/geometry.hpp"
#include "pcjscc/metrics.hpp"
#include "pcjscc/nn.hpp"

namespace pcjscc {

// ---------------------------------------------------------------------------
// Configuration

struct ModelConfig {
  int latent_n = 16;       // channel bandwidth n; also the pool row count
  int feature_dim = 384;   // semantic feature width d
  int num_centers = 128;   // centers predicted by rho
  int grid_size = 4;       // folding grid is grid_size^2
  int num_groups = 32;     // encoder tokens
  double group_radius_scale = 1.5;
  int embed_hidden = 128;
  int attn_blocks = 2;
  int ffn_hidden = 0;     // 0 -> feature_dim
  int gamma_hidden = 512;
  int delta_hidden = 0;   // 0 -> max(latent_n, 64)
  int rho_hidden = 512;
  int fold_hidden = 512;
  int denoise_reps = 1;
  bool no_folding = false;       // ablation: per-center residual head, no grid
  bool unit_total_power = false; // ||z|| = 1 instead of unit per-symbol power

  int output_points() const { return num_centers * grid_size * grid_size; }
  int ffn_hidden_eff() const { return ffn_hidden > 0 ? ffn_hidden : feature_dim; }
  int delta_hidden_eff() const {
    return delta_hidden > 0 ? delta_hidden : std::max(latent_n, 64);
  }

  void validate() const {
    if (latent_n < 2 || latent_n % 2 != 0)
      throw std::invalid_argument("ModelConfig: latent_n must be even, >= 2");
    if (feature_dim < 1 || num_centers < 1 || grid_size < 1 || num_groups < 1)
      throw std::invalid_argument("ModelConfig: bad dimensions");
    if (denoise_reps < 1)
      throw std::invalid_argument("ModelConfig: denoise_reps must be >= 1");
    if (embed_hidden < 1 || gamma_hidden < 1 || rho_hidden < 1 ||
        fold_hidden < 1 || attn_blocks < 0)
      throw std::invalid_argument("ModelConfig: bad widths");
  }

  nlohmann::json to_json() const {
    return {{"latent_n", latent_n},
            {"feature_dim", feature_dim},
            {"num_centers", num_centers},
            {"grid_size", grid_size},
            {"num_groups", num_groups},
            {"group_radius_scale", group_radius_scale},
            {"embed_hidden", embed_hidden},
            {"attn_blocks", attn_blocks},
            {"ffn_hidden", ffn_hidden},
            {"gamma_hidden", gamma_hidden},
            {"delta_hidden", delta_hidden},
            {"rho_hidden", rho_hidden},
            {"fold_hidden", fold_hidden},
            {"denoise_reps", denoise_reps},
            {"no_folding", no_folding},
            {"unit_total_power", unit_total_power}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.latent_n = j.at("latent_n");
    c.feature_dim = j.at("feature_dim");
    c.num_centers = j.at("num_centers");
    c.grid_size = j.at("grid_size");
    c.num_groups = j.at("num_groups");
    c.group_radius_scale = j.at("group_radius_scale");
    c.embed_hidden = j.at("embed_hidden");
    c.attn_blocks = j.at("attn_blocks");
    c.ffn_hidden = j.at("ffn_hidden");
    c.gamma_hidden = j.at("gamma_hidden");
    c.delta_hidden = j.at("delta_hidden");
    c.rho_hidden = j.at("rho_hidden");
    c.fold_hidden = j.at("fold_hidden");
    c.denoise_reps = j.at("denoise_reps");
    c.no_folding = j.at("no_folding");
    c.unit_total_power = j.at("unit_total_power");
    return c;
  }

  std::uint64_t hash() const { return fnv1a(to_json().dump()); }
};

// ---------------------------------------------------------------------------
// Encoder grouping: FPS centers (canonical seed) + radius ball membership.
// Membership is a set, so the pooled group features are exactly invariant to
// point permutation and duplication.

struct Grouping {
  std::vector<int> center_index;
  std::vector<std::vector<int>> members;
  double radius = 0.0;
};

inline Grouping build_groups(const PointMat& pts, int num_groups,
                             double radius_scale) {
  const auto m = static_cast<int>(pts.rows());
  if (m < 1) throw std::invalid_argument("build_groups: empty cloud");
  const int t = std::min(num_groups, m);
  const FpsResult fps = fps_indices(pts, t, canonical_seed_index(pts));
  Grouping g;
  g.center_index = fps.order;
  if (t == 1) {
    double max_sq = 0.0;
    for (int i = 0; i < m; ++i)
      max_sq = std::max(max_sq,
                        (pts.row(i) - pts.row(fps.order[0])).squaredNorm());
    g.radius = std::sqrt(max_sq);
  } else {
    g.radius = radius_scale * std::sqrt(fps.dist_at_selection.back());
  }
  const double r_sq = g.radius * g.radius;
  g.members.resize(static_cast<std::size_t>(t));
  for (int gi = 0; gi < t; ++gi) {
    const Vec3 c = pts.row(g.center_index[static_cast<std::size_t>(gi)]);
    auto& mem = g.members[static_cast<std::size_t>(gi)];
    for (int i = 0; i < m; ++i)
      if ((pts.row(i) - c).squaredNorm() <= r_sq) mem.push_back(i);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Parameters

struct ModelParams {
  ModelConfig cfg;
  nn::Mlp2 embed;  // 3 -> embed_hidden -> d, per group-relative point
  nn::Mlp2 pos;    // 3 -> embed_hidden -> d, group-center position code
  nn::Param cls;   // 1 x d
  std::vector<nn::AttnBlock> blocks;
  nn::Mlp2 gamma;  // 2d -> gamma_hidden -> n
  nn::Mlp2 delta;  // n -> delta_hidden -> n, residual denoiser
  nn::Param pool;  // N x d, no weight decay
  nn::Mlp2 rho;    // d -> rho_hidden -> 3*num_centers
  nn::Mlp2 fold;   // (3+d+2) -> fold_hidden -> 3
  nn::Mlp2 fold_alt;  // (3+d) -> fold_hidden -> 3*grid^2, no_folding head
  Grid2D grid;

  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed,
                          bool non_ortho_pool = false) {
    cfg.validate();
    if (cfg.feature_dim < cfg.latent_n)
      std::cerr << "warning: feature_dim (" << cfg.feature_dim
                << ") < pool size (" << cfg.latent_n
                << "); pool rows cannot all be orthonormal\n";
    Rng rng(mix_seed(seed, 0x6d6f64656cULL));
    ModelParams p;
    p.cfg = cfg;
    const int d = cfg.feature_dim;
    const int n = cfg.latent_n;
    p.embed.init("embed", 3, cfg.embed_hidden, d, rng);
    p.pos.init("pos", 3, cfg.embed_hidden, d, rng);
    p.cls.init_zero("cls", 1, d, /*decay=*/false);
    {
      std::normal_distribution<double> gauss(0.0, 0.02);
      for (int j = 0; j < d; ++j) p.cls.value(0, j) = gauss(rng);
    }
    p.blocks.resize(static_cast<std::size_t>(cfg.attn_blocks));
    for (int i = 0; i < cfg.attn_blocks; ++i)
      p.blocks[static_cast<std::size_t>(i)].init(
          "attn" + std::to_string(i), d, cfg.ffn_hidden_eff(), rng);
    p.gamma.init("gamma", 2 * d, cfg.gamma_hidden, n, rng);
    p.delta.init("delta", n, cfg.delta_hidden_eff(), n, rng);
    p.pool.init_zero("pool", n, d, /*decay=*/false);
    if (non_ortho_pool) {
      std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(double(d)));
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) p.pool.value(i, j) = gauss(rng);
    } else {
      p.pool.value = orthonormal_rows(n, d, rng);
    }
    p.rho.init("rho", d, cfg.rho_hidden, 3 * cfg.num_centers, rng);
    if (cfg.no_folding) {
      p.fold_alt.init("fold_alt", 3 + d, cfg.fold_hidden,
                      3 * cfg.grid_size * cfg.grid_size, rng);
    } else {
      p.fold.init("fold", 3 + d + 2, cfg.fold_hidden, 3, rng);
    }
    p.grid = make_grid(cfg.grid_size);
    return p;
  }

  /// Rows of a random orthonormal frame; for N > d the rows are unit-norm
  /// Gaussian directions instead (exact orthonormality is impossible).
  static Mat orthonormal_rows(int n, int d, Rng& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    if (n <= d) {
      Mat g(d, n);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < n; ++j) g(i, j) = gauss(rng);
      Eigen::HouseholderQR<Mat> qr(g);
      Mat q = qr.householderQ() * Mat::Identity(d, n);
      return q.transpose();
    }
    Mat o(n, d);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) o(i, j) = gauss(rng);
      o.row(i).normalize();
    }
    return o;
  }

  std::vector<nn::ParamRef> params() {
    std::vector<nn::ParamRef> out;
    embed.collect(out, "embed");
    pos.collect(out, "pos");
    out.push_back({&cls, "cls"});
    for (auto& b : blocks) b.collect(out, "attn");
    gamma.collect(out, "gamma");
    delta.collect(out, "delta");
    out.push_back({&pool, "pool"});
    rho.collect(out, "rho");
    if (cfg.no_folding)
      fold_alt.collect(out, "fold_alt");
    else
      fold.collect(out, "fold");
    return out;
  }

  void zero_grads() { nn::zero_grads(params()); }

  bool all_finite() {
    for (const auto& ref : params())
      if (!ref.p->value.allFinite()) return false;
    return true;
  }

  FeaturePool feature_pool() const { return {pool.value}; }
};

// ---------------------------------------------------------------------------
// Forward traces

struct EncodeTrace {
  Grouping groups;
  Mat rel;  // all group-relative coordinates, stacked
  std::vector<std::pair<int, int>> seg;  // (begin, count) per group in rel
  nn::Mlp2Ctx embed_ctx;
  Mat centers_in;  // T x 3
  nn::Mlp2Ctx pos_ctx;
  Eigen::MatrixXi group_argmax;  // T x d, row index into rel
  Mat tokens0;                   // (T+1) x d, cls prepended
  std::vector<nn::AttnCtx> attn;
  Mat tokens_out;  // (T+1) x d
};

struct SemanticTokens {
  Vec cls;     // d
  Mat tokens;  // T x d
};

struct ChannelEncodeTrace {
  Eigen::VectorXi pool_argmax;  // d, row index into the tokens matrix
  Mat v;                        // 1 x 2d concat input to gamma
  nn::Mlp2Ctx gamma_ctx;
};

struct DecodeTrace {
  std::vector<nn::Mlp2Ctx> reps;
};

struct HeadTrace {
  Eigen::RowVectorXd alpha;  // 1 x N
  Mat f;                     // 1 x d
  nn::Mlp2Ctx rho_ctx;
  Mat centers;  // C x 3
  nn::Mlp2Ctx fold_ctx;  // fold input rows live in fold_ctx.x
};

struct ForwardTrace {
  EncodeTrace enc;
  ChannelEncodeTrace cenc;
  Vec z_tilde;
  DecodeTrace dec;
  HeadTrace head;
};

struct Diagnostics {
  Vec z_tilde, z, y, h_hat;
  Vec alpha;
  Mat centers;
};

// ---------------------------------------------------------------------------
// Operations

/// Permutation-invariant tokenization: per-group mini-PointNet (shared MLP +
/// max pool over the ball) plus a position code of the group center, then a
/// cls token and the attention stack.
inline SemanticTokens encode_semantic(const PointCloud& cloud,
                                      const ModelParams& p,
                                      EncodeTrace* trace = nullptr) {
  if (cloud.size() < 1) throw std::invalid_argument("encode_semantic: empty");
  if (!cloud.points.allFinite())
    throw std::invalid_argument("encode_semantic: non-finite coordinates");
  EncodeTrace local;
  EncodeTrace& tr = trace ? *trace : local;
  tr.groups = build_groups(cloud.points, p.cfg.num_groups,
                           p.cfg.group_radius_scale);
  const int t = static_cast<int>(tr.groups.center_index.size());
  const int d = p.cfg.feature_dim;
  int total = 0;
  for (const auto& mem : tr.groups.members) total += static_cast<int>(mem.size());
  tr.rel.resize(total, 3);
  tr.seg.resize(static_cast<std::size_t>(t));
  tr.centers_in.resize(t, 3);
  int row = 0;
  for (int gi = 0; gi < t; ++gi) {
    const Vec3 c = cloud.points.row(tr.groups.center_index[gi]);
    tr.centers_in.row(gi) = c;
    tr.seg[gi] = {row, static_cast<int>(tr.groups.members[gi].size())};
    for (int idx : tr.groups.members[gi]) {
      tr.rel.row(row) = cloud.points.row(idx) - c;
      ++row;
    }
  }
  const Mat embedded = p.embed.forward(tr.rel, &tr.embed_ctx);
  const Mat pos_code = p.pos.forward(tr.centers_in, &tr.pos_ctx);
  tr.group_argmax.resize(t, d);
  Mat group_feat(t, d);
  for (int gi = 0; gi < t; ++gi) {
    const auto [begin, count] = tr.seg[gi];
    for (int j = 0; j < d; ++j) {
      int best = begin;
      double best_v = embedded(begin, j);
      for (int r = begin + 1; r < begin + count; ++r) {
        if (embedded(r, j) > best_v) {
          best_v = embedded(r, j);
          best = r;
        }
      }
      group_feat(gi, j) = best_v;
      tr.group_argmax(gi, j) = best;
    }
  }
  group_feat += pos_code;
  tr.tokens0.resize(t + 1, d);
  tr.tokens0.row(0) = p.cls.value.row(0);
  tr.tokens0.bottomRows(t) = group_feat;
  Mat x = tr.tokens0;
  tr.attn.resize(p.blocks.size());
  for (std::size_t b = 0; b < p.blocks.size(); ++b)
    x = p.blocks[b].forward(x, &tr.attn[b]);
  tr.tokens_out = std::move(x);
  SemanticTokens out;
  out.cls = tr.tokens_out.row(0).transpose();
  out.tokens = tr.tokens_out.bottomRows(t);
  return out;
}

/// z_tilde = gamma([cls, maxpool(tokens)]); length n.
inline Vec channel_encode(const SemanticTokens& tokens, const ModelParams& p,
                          ChannelEncodeTrace* trace = nullptr) {
  const int d = p.cfg.feature_dim;
  if (tokens.cls.size() != d || tokens.tokens.cols() != d)
    throw std::invalid_argument("channel_encode: token width mismatch");
  if (tokens.tokens.rows() < 1)
    throw std::invalid_argument("channel_encode: no tokens");
  ChannelEncodeTrace local;
  ChannelEncodeTrace& tr = trace ? *trace : local;
  tr.pool_argmax.resize(d);
  Mat v(1, 2 * d);
  v.row(0).head(d) = tokens.cls.transpose();
  for (int j = 0; j < d; ++j) {
    Eigen::Index best = 0;
    tokens.tokens.col(j).maxCoeff(&best);
    tr.pool_argmax(j) = static_cast<int>(best);
    v(0, d + j) = tokens.tokens(best, j);
  }
  tr.v = std::move(v);
  const Mat z = p.gamma.forward(tr.v, &tr.gamma_ctx);
  return z.row(0).transpose();
}

/// h <- h - denoiser(h), `reps` times. The iteration core is generic so the
/// update rule can be exercised with toy denoisers.
template <typename Fn>
inline Vec channel_decode_iterate(Vec y, int reps, Fn&& denoiser) {
  if (reps < 1)
    throw std::invalid_argument("channel_decode: reps must be >= 1");
  for (int t = 0; t < reps; ++t) y -= denoiser(y);
  return y;
}

inline Vec channel_decode(const Vec& y, const ModelParams& p, int reps,
                          DecodeTrace* trace = nullptr) {
  if (y.size() != p.cfg.latent_n)
    throw std::invalid_argument("channel_decode: length mismatch");
  if (trace) trace->reps.clear();
  return channel_decode_iterate(y, reps, [&](const Vec& h) {
    nn::Mlp2Ctx ctx;
    const Mat out = p.delta.forward(h.transpose(), trace ? &ctx : nullptr);
    if (trace) trace->reps.push_back(std::move(ctx));
    return Vec(out.row(0).transpose());
  });
}

/// Softmax combination weights over the pool rows: F = softmax(h)^T O.
inline Vec aggregate_features(const Vec& h, const FeaturePool& pool) {
  if (h.size() != pool.rows())
    throw std::invalid_argument("aggregate_features: length != pool rows");
  const Mat alpha = nn::softmax_rows(h.transpose());
  return (alpha * pool.basis).row(0).transpose();
}

/// rho(F) reshaped to (num_centers x 3); no output activation.
inline Mat predict_centers(const Vec& f, const ModelParams& p,
                           nn::Mlp2Ctx* ctx = nullptr) {
  if (f.size() != p.cfg.feature_dim)
    throw std::invalid_argument("predict_centers: feature width mismatch");
  const Mat out = p.rho.forward(f.transpose(), ctx);
  Mat centers(p.cfg.num_centers, 3);
  for (int i = 0; i < p.cfg.num_centers; ++i)
    centers.row(i) = out.row(0).segment(3 * i, 3);
  return centers;
}

/// Folding head: every (center, grid point) pair maps through D once;
/// output point = center + D([center, F, grid point]).
inline PointCloud fold_decode(const Mat& centers, const Vec& f,
                              const Grid2D& grid, const ModelParams& p,
                              HeadTrace* trace = nullptr) {
  if (p.cfg.no_folding)
    throw std::invalid_argument("fold_decode: model built with no_folding");
  if (centers.rows() != p.cfg.num_centers || grid.g != p.cfg.grid_size)
    throw std::invalid_argument("fold_decode: size mismatch with config");
  const int d = p.cfg.feature_dim;
  const int gsq = grid.g * grid.g;
  const Eigen::Index rows = centers.rows() * gsq;
  Mat u(rows, 3 + d + 2);
  for (Eigen::Index i = 0; i < centers.rows(); ++i) {
    for (int j = 0; j < gsq; ++j) {
      const Eigen::Index r = i * gsq + j;
      u.row(r).head(3) = centers.row(i);
      u.row(r).segment(3, d) = f.transpose();
      u.row(r).tail(2) = grid.points.row(j);
    }
  }
  const Mat offsets =
      p.fold.forward(u, trace ? &trace->fold_ctx : nullptr);
  PointCloud out;
  out.points.resize(rows, 3);
  for (Eigen::Index i = 0; i < centers.rows(); ++i)
    for (int j = 0; j < gsq; ++j)
      out.points.row(i * gsq + j) = centers.row(i) + offsets.row(i * gsq + j);
  return out;
}

/// Ablation head: one two-layer map per center from [center, F] straight to
/// grid_size^2 offsets; no grid conditioning.
inline PointCloud fold_decode_no_grid(const Mat& centers, const Vec& f,
                                      const ModelParams& p,
                                      HeadTrace* trace = nullptr) {
  if (!p.cfg.no_folding)
    throw std::invalid_argument("fold_decode_no_grid: model has folding head");
  if (centers.rows() != p.cfg.num_centers)
    throw std::invalid_argument("fold_decode_no_grid: center count mismatch");
  const int d = p.cfg.feature_dim;
  const int gsq = p.cfg.grid_size * p.cfg.grid_size;
  Mat u(centers.rows(), 3 + d);
  for (Eigen::Index i = 0; i < centers.rows(); ++i) {
    u.row(i).head(3) = centers.row(i);
    u.row(i).segment(3, d) = f.transpose();
  }
  const Mat offsets =
      p.fold_alt.forward(u, trace ? &trace->fold_ctx : nullptr);
  PointCloud out;
  out.points.resize(centers.rows() * gsq, 3);
  for (Eigen::Index i = 0; i < centers.rows(); ++i)
    for (int j = 0; j < gsq; ++j)
      out.points.row(i * gsq + j) =
          centers.row(i) + offsets.row(i).segment(3 * j, 3);
  return out;
}

/// Full transmit-receive pass. Deterministic at the noiseless sentinel.
inline PointCloud model_forward(const PointCloud& cloud,
                                const ChannelConfig& ch, const ModelParams& p,
                                Rng& rng, Diagnostics* diag = nullptr,
                                ForwardTrace* trace = nullptr) {
  if (ch.bandwidth_n != p.cfg.latent_n)
    throw std::invalid_argument("model_forward: channel/model bandwidth mismatch");
  ForwardTrace local;
  ForwardTrace& tr = trace ? *trace : local;
  const SemanticTokens tokens = encode_semantic(cloud, p, &tr.enc);
  tr.z_tilde = channel_encode(tokens, p, &tr.cenc);
  const Vec z = power_normalize(tr.z_tilde, p.cfg.unit_total_power);
  const Vec y = transmit(z, ch, rng);
  const Vec h_hat = channel_decode(y, p, p.cfg.denoise_reps, &tr.dec);
  tr.head.alpha = nn::softmax_rows(h_hat.transpose()).row(0);
  tr.head.f = tr.head.alpha * p.pool.value;
  tr.head.centers =
      predict_centers(tr.head.f.row(0).transpose(), p, &tr.head.rho_ctx);
  PointCloud recon =
      p.cfg.no_folding
          ? fold_decode_no_grid(tr.head.centers, tr.head.f.row(0).transpose(),
                                p, &tr.head)
          : fold_decode(tr.head.centers, tr.head.f.row(0).transpose(), p.grid,
                        p, &tr.head);
  if (diag) {
    diag->z_tilde = tr.z_tilde;
    diag->z = z;
    diag->y = y;
    diag->h_hat = h_hat;
    diag->alpha = tr.head.alpha.transpose();
    diag->centers = tr.head.centers;
  }
  return recon;
}

/// Backprop of a reconstruction gradient through the whole pipeline,
/// accumulating into every parameter's grad buffer.
inline void model_backward(ModelParams& p, const ForwardTrace& tr,
                           const Mat& d_recon) {
  const int d = p.cfg.feature_dim;
  const int gsq = p.cfg.grid_size * p.cfg.grid_size;
  const Eigen::Index c_rows = tr.head.centers.rows();

  Mat d_centers = Mat::Zero(c_rows, 3);
  Mat d_f = Mat::Zero(1, d);
  if (p.cfg.no_folding) {
    Mat d_alt(c_rows, 3 * gsq);
    for (Eigen::Index i = 0; i < c_rows; ++i)
      for (int j = 0; j < gsq; ++j) {
        d_alt.row(i).segment(3 * j, 3) = d_recon.row(i * gsq + j);
        d_centers.row(i) += d_recon.row(i * gsq + j);
      }
    const Mat d_u = p.fold_alt.backward(tr.head.fold_ctx, d_alt);
    d_centers += d_u.leftCols(3);
    d_f.row(0) = d_u.middleCols(3, d).colwise().sum();
  } else {
    const Mat d_u = p.fold.backward(tr.head.fold_ctx, d_recon);
    for (Eigen::Index i = 0; i < c_rows; ++i)
      for (int j = 0; j < gsq; ++j) {
        d_centers.row(i) += d_recon.row(i * gsq + j);
        d_centers.row(i) += d_u.row(i * gsq + j).head(3);
      }
    d_f.row(0) = d_u.middleCols(3, d).colwise().sum();
  }

  Mat d_rho_out(1, 3 * c_rows);
  for (Eigen::Index i = 0; i < c_rows; ++i)
    d_rho_out.row(0).segment(3 * i, 3) = d_centers.row(i);
  d_f += p.rho.backward(tr.head.rho_ctx, d_rho_out);

  // F = alpha * O
  const Mat d_alpha = d_f * p.pool.value.transpose();  // 1 x N
  p.pool.grad.noalias() += tr.head.alpha.transpose() * d_f;
  Mat d_h = nn::softmax_rows_backward(tr.head.alpha, d_alpha);  // 1 x n

  // h_{t+1} = h_t - delta(h_t), reversed
  for (auto it = tr.dec.reps.rbegin(); it != tr.dec.reps.rend(); ++it)
    d_h += p.delta.backward(*it, -d_h);

  // additive noise: gradient passes straight to z
  const Vec d_z_tilde = power_normalize_backward(
      tr.z_tilde, d_h.row(0).transpose(), p.cfg.unit_total_power);

  const Mat d_v = p.gamma.backward(tr.cenc.gamma_ctx, d_z_tilde.transpose());
  const int t = static_cast<int>(tr.enc.groups.center_index.size());
  Mat d_tokens_out = Mat::Zero(t + 1, d);
  d_tokens_out.row(0) = d_v.row(0).head(d);
  for (int j = 0; j < d; ++j)
    d_tokens_out(tr.cenc.pool_argmax(j) + 1, j) += d_v(0, d + j);

  for (std::size_t b = p.blocks.size(); b-- > 0;)
    d_tokens_out = p.blocks[b].backward(tr.enc.attn[b], d_tokens_out);

  p.cls.grad.row(0) += d_tokens_out.row(0);
  const Mat d_group_feat = d_tokens_out.bottomRows(t);
  p.pos.backward(tr.enc.pos_ctx, d_group_feat);
  Mat d_embedded = Mat::Zero(tr.enc.rel.rows(), d);
  for (int gi = 0; gi < t; ++gi)
    for (int j = 0; j < d; ++j)
      d_embedded(tr.enc.group_argmax(gi, j), j) += d_group_feat(gi, j);
  p.embed.backward(tr.enc.embed_ctx, d_embedded);
}

// ---------------------------------------------------------------------------
// Checkpoints: one binary file, JSON manifest + raw little-endian doubles.

inline constexpr char kCheckpointMagic[] = "PCJSCC1\n";

inline void save_checkpoint(ModelParams& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  nlohmann::json manifest;
  manifest["config"] = p.cfg.to_json();
  manifest["config_hash"] = p.cfg.hash();
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  auto refs = p.params();
  for (const auto& ref : refs) {
    tensors.push_back({{"name", ref.p->name},
                       {"rows", ref.p->value.rows()},
                       {"cols", ref.p->value.cols()},
                       {"dtype", "f64"},
                       {"offset", offset}});
    offset += static_cast<std::uint64_t>(ref.p->value.size()) * sizeof(double);
  }
  manifest["tensors"] = tensors;
  const std::string mtext = manifest.dump();
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
  const std::uint64_t mlen = mtext.size();
  out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
  out.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
  for (const auto& ref : refs) {
    // row-major serialization, independent of Eigen's storage order
    const Mat& m = ref.p->value;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double v = m(i, j);
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[sizeof(kCheckpointMagic) - 1];
  in.read(magic, sizeof(magic));
  if (!in || std::string(magic, sizeof(magic)) != kCheckpointMagic)
    throw std::runtime_error(path + ": not a checkpoint file");
  std::uint64_t mlen = 0;
  in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
  std::string mtext(mlen, '\0');
  in.read(mtext.data(), static_cast<std::streamsize>(mlen));
  if (!in) throw std::runtime_error(path + ": truncated manifest");
  const nlohmann::json manifest = nlohmann::json::parse(mtext);
  const ModelConfig cfg = ModelConfig::from_json(manifest.at("config"));
  if (manifest.at("config_hash").get<std::uint64_t>() != cfg.hash())
    throw std::runtime_error(path + ": config hash mismatch");
  ModelParams p = ModelParams::init(cfg, 0);
  auto refs = p.params();
  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != refs.size())
    throw std::runtime_error(path + ": tensor count mismatch");
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& t = tensors[i];
    Mat& m = refs[i].p->value;
    if (t.at("name").get<std::string>() != refs[i].p->name ||
        t.at("rows").get<Eigen::Index>() != m.rows() ||
        t.at("cols").get<Eigen::Index>() != m.cols())
      throw std::runtime_error(path + ": shape mismatch for tensor '" +
                               t.at("name").get<std::string>() + "'");
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        double v;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        m(r, c) = v;
      }
  }
  if (!in) throw std::runtime_error(path + ": truncated tensor data");
  return p;
}

}  // namespace pcjscc
