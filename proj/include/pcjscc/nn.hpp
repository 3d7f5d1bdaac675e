// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pcjscc/common.hpp"

namespace pcjscc::nn {

/// One learnable array plus its gradient accumulator.
struct Param {
  std::string name;
  Mat value;
  Mat grad;
  bool decay = true;  // weight decay applies (biases and the pool opt out)

  void init_zero(const std::string& n, Eigen::Index rows, Eigen::Index cols,
                 bool decay_flag = true) {
    name = n;
    value = Mat::Zero(rows, cols);
    grad = Mat::Zero(rows, cols);
    decay = decay_flag;
  }
};

/// Non-owning named view, the unit the optimizer/serializer/gradcheck walk.
struct ParamRef {
  Param* p;
  /// Gradcheck/report group ("gamma", "fold", ...), coarser than the name.
  std::string group;
};

inline Mat glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> gauss(0.0,
                                         std::sqrt(2.0 / double(rows + cols)));
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = gauss(rng);
  return m;
}

inline double gelu_scalar(double x) {
  return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
}
inline double gelu_grad_scalar(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

inline Mat gelu(const Mat& x) { return x.unaryExpr(&gelu_scalar); }
inline Mat gelu_grad(const Mat& x) { return x.unaryExpr(&gelu_grad_scalar); }

// ---------------------------------------------------------------------------
// Linear: Y = X W + b, rows are items.

struct Linear {
  Param w;  // in x out
  Param b;  // 1 x out

  void init(const std::string& name, Eigen::Index in, Eigen::Index out,
            Rng& rng) {
    w.init_zero(name + ".w", in, out);
    w.value = glorot(in, out, rng);
    b.init_zero(name + ".b", 1, out, /*decay=*/false);
  }

  Mat forward(const Mat& x) const {
    return (x * w.value).rowwise() + b.value.row(0);
  }

  /// Accumulates parameter grads and returns dX. x must be the forward input.
  Mat backward(const Mat& x, const Mat& d_out) {
    w.grad.noalias() += x.transpose() * d_out;
    b.grad.row(0) += d_out.colwise().sum();
    return d_out * w.value.transpose();
  }

  void collect(std::vector<ParamRef>& out, const std::string& group) {
    out.push_back({&w, group});
    out.push_back({&b, group});
  }
};

// ---------------------------------------------------------------------------
// Two-layer MLP with GELU: Y = W2 gelu(W1 X + b1) + b2.

struct Mlp2Ctx {
  Mat x;       // forward input
  Mat h_pre;   // first-layer pre-activation
  Mat h;       // post-activation
};

struct Mlp2 {
  Linear l1, l2;

  void init(const std::string& name, Eigen::Index in, Eigen::Index hidden,
            Eigen::Index out, Rng& rng) {
    l1.init(name + ".l1", in, hidden, rng);
    l2.init(name + ".l2", hidden, out, rng);
  }

  Mat forward(const Mat& x, Mlp2Ctx* ctx = nullptr) const {
    Mat h_pre = l1.forward(x);
    Mat h = gelu(h_pre);
    Mat y = l2.forward(h);
    if (ctx) {
      ctx->x = x;
      ctx->h_pre = std::move(h_pre);
      ctx->h = std::move(h);
    }
    return y;
  }

  Mat backward(const Mlp2Ctx& ctx, const Mat& d_out) {
    Mat dh = l2.backward(ctx.h, d_out);
    dh.array() *= gelu_grad(ctx.h_pre).array();
    return l1.backward(ctx.x, dh);
  }

  void collect(std::vector<ParamRef>& out, const std::string& group) {
    l1.collect(out, group);
    l2.collect(out, group);
  }

  bool all_zero() const {
    return l1.w.value.isZero(0) && l1.b.value.isZero(0) &&
           l2.w.value.isZero(0) && l2.b.value.isZero(0);
  }
};

// ---------------------------------------------------------------------------
// Row-wise softmax with max subtraction.

inline Mat softmax_rows(const Mat& s) {
  Mat a(s.rows(), s.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double m = s.row(i).maxCoeff();
    a.row(i) = (s.row(i).array() - m).exp();
    a.row(i) /= a.row(i).sum();
  }
  return a;
}

/// d s given a = softmax(s) row-wise: ds = a .* (da - sum(da .* a)).
inline Mat softmax_rows_backward(const Mat& a, const Mat& d_a) {
  Mat ds(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double dot = a.row(i).dot(d_a.row(i));
    ds.row(i) = a.row(i).array() * (d_a.row(i).array() - dot);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Single-head self-attention + FFN, both with residual connections.

struct AttnCtx {
  Mat x, q, k, v, attn;  // attn = softmax(QK^T/sqrt(d))
  Mat y;                 // post-attention residual output, FFN input
  Mlp2Ctx ffn;
};

struct AttnBlock {
  Linear wq, wk, wv;
  Mlp2 ffn;

  void init(const std::string& name, Eigen::Index d, Eigen::Index ffn_hidden,
            Rng& rng) {
    wq.init(name + ".wq", d, d, rng);
    wk.init(name + ".wk", d, d, rng);
    wv.init(name + ".wv", d, d, rng);
    ffn.init(name + ".ffn", d, ffn_hidden, d, rng);
  }

  Mat forward(const Mat& x, AttnCtx* ctx = nullptr) const {
    const double scale = 1.0 / std::sqrt(static_cast<double>(x.cols()));
    Mat q = wq.forward(x);
    Mat k = wk.forward(x);
    Mat v = wv.forward(x);
    Mat attn = softmax_rows(q * k.transpose() * scale);
    Mat y = x + attn * v;
    Mlp2Ctx ffn_ctx;
    Mat z = y + ffn.forward(y, ctx ? &ffn_ctx : nullptr);
    if (ctx) {
      ctx->x = x;
      ctx->q = std::move(q);
      ctx->k = std::move(k);
      ctx->v = std::move(v);
      ctx->attn = std::move(attn);
      ctx->y = std::move(y);
      ctx->ffn = std::move(ffn_ctx);
    }
    return z;
  }

  Mat backward(const AttnCtx& ctx, const Mat& d_out) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(ctx.x.cols()));
    Mat dy = d_out + ffn.backward(ctx.ffn, d_out);
    // y = x + attn * v
    Mat d_attn = dy * ctx.v.transpose();
    Mat dv = ctx.attn.transpose() * dy;
    Mat ds = softmax_rows_backward(ctx.attn, d_attn) * scale;
    Mat dq = ds * ctx.k;
    Mat dk = ds.transpose() * ctx.q;
    Mat dx = dy;
    dx += wq.backward(ctx.x, dq);
    dx += wk.backward(ctx.x, dk);
    dx += wv.backward(ctx.x, dv);
    return dx;
  }

  void collect(std::vector<ParamRef>& out, const std::string& group) {
    wq.collect(out, group);
    wk.collect(out, group);
    wv.collect(out, group);
    ffn.collect(out, group);
  }
};

// ---------------------------------------------------------------------------
// AdamW (decoupled weight decay).

struct AdamW {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;

  struct Slot {
    Mat m, v;
  };
  std::vector<Slot> slots;
  long step_count = 0;

  void attach(const std::vector<ParamRef>& params) {
    slots.clear();
    slots.reserve(params.size());
    for (const auto& ref : params)
      slots.push_back({Mat::Zero(ref.p->value.rows(), ref.p->value.cols()),
                       Mat::Zero(ref.p->value.rows(), ref.p->value.cols())});
  }

  void step(const std::vector<ParamRef>& params, double lr) {
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Param& p = *params[i].p;
      Slot& s = slots[i];
      s.m = beta1 * s.m + (1.0 - beta1) * p.grad;
      s.v = beta2 * s.v.array() + (1.0 - beta2) * p.grad.array().square();
      const Mat m_hat = s.m / bc1;
      const Mat v_hat = s.v / bc2;
      p.value.array() -=
          lr * m_hat.array() / (v_hat.array().sqrt() + eps);
      if (p.decay && weight_decay > 0.0)
        p.value -= lr * weight_decay * p.value;
    }
  }
};

inline void zero_grads(const std::vector<ParamRef>& params) {
  for (const auto& ref : params) ref.p->grad.setZero();
}

}  // namespace pcjscc::nn
