// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "pcjscc/geometry.hpp"

namespace pcjscc {

/// Receiver-side basis of N learnable d-vectors; rows are the o_i.
struct FeaturePool {
  Mat basis;  // N x d

  Eigen::Index rows() const { return basis.rows(); }
  void validate() const {
    if (basis.rows() < 1 || basis.cols() < 1)
      throw std::invalid_argument("FeaturePool: empty");
    if (!basis.allFinite())
      throw std::invalid_argument("FeaturePool: non-finite entry");
  }
};

/// Frobenius distance of the pool Gram matrix from identity. Zero iff the
/// rows are orthonormal.
inline double ortho_metric(const FeaturePool& pool) {
  pool.validate();
  const Mat gram = pool.basis * pool.basis.transpose();
  const Eigen::Index n = gram.rows();
  return (gram - Mat::Identity(n, n)).norm();
}

/// Mean squared nearest-neighbor distance from A into B (normalized by |A|;
/// not symmetric).
inline double d1_error(const PointCloud& a, const PointCloud& b,
                       NnMode mode = NnMode::kAccelerated) {
  return nn_sq_distances(a, b, mode).mean();
}

/// d1 in both directions with the NN indices kept, so composite metrics can
/// reuse one set of searches.
namespace detail {
struct NnPair {
  NnResult ab, ba;
};
inline NnPair nn_both(const PointCloud& a, const PointCloud& b, NnMode mode) {
  return {nearest_neighbors(a.points, b.points, mode),
          nearest_neighbors(b.points, a.points, mode)};
}

inline double d2_from_nn(const PointMat& a, const PointMat& na,
                         const PointMat& b, const NnResult& nn) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const Vec3 diff = a.row(i) - b.row(nn.index[static_cast<std::size_t>(i)]);
    const double proj = diff.dot(na.row(i));
    acc += proj * proj;
  }
  return acc / static_cast<double>(a.rows());
}

inline PointMat query_normals(const PointCloud& a, int k_estimate) {
  if (a.normals) return *a.normals;
  if (a.size() < k_estimate)
    throw std::invalid_argument(
        "d2_error: no normals and too few points to estimate");
  return *estimate_normals(a, k_estimate).normals;
}
}  // namespace detail

/// Mean squared normal-projected residual (point-to-plane). Uses A's own
/// normals, estimating them (k = 16) when the cloud carries none.
inline double d2_error(const PointCloud& a, const PointCloud& b,
                       NnMode mode = NnMode::kAccelerated,
                       int k_estimate = 16) {
  const PointMat normals = detail::query_normals(a, k_estimate);
  const NnResult nn = nearest_neighbors(a.points, b.points, mode);
  return detail::d2_from_nn(a.points, normals, b.points, nn);
}

/// 10*log10(3p^2 / max(e_ab, e_ba)); +inf when both errors vanish.
inline double psnr(double e_ab, double e_ba, double p = 1.0) {
  if (!(p > 0.0)) throw std::invalid_argument("psnr: p must be > 0");
  if (e_ab < 0.0 || e_ba < 0.0)
    throw std::invalid_argument("psnr: negative error");
  const double worst = std::max(e_ab, e_ba);
  if (worst == 0.0) return kInf;
  return 10.0 * std::log10(3.0 * p * p / worst);
}

/// Symmetric bidirectional d1 sum.
inline double chamfer_distance(const PointCloud& a, const PointCloud& b,
                               NnMode mode = NnMode::kAccelerated) {
  return d1_error(a, b, mode) + d1_error(b, a, mode);
}

struct MetricsReport {
  double d1_ab = 0, d1_ba = 0;
  double d2_ab = 0, d2_ba = 0;
  double psnr_d1 = 0, psnr_d2 = 0;
  double cd = 0;
  std::optional<double> ortho;

  /// One CSV data row; the column order is fixed by the sweep file format.
  std::string csv_row(const std::string& sample_id, double snr_db,
                      int bandwidth) const {
    std::string row = sample_id;
    row += ',' + fmt_double(snr_db);
    row += ',' + std::to_string(bandwidth);
    for (double v : {d1_ab, d1_ba, d2_ab, d2_ba, psnr_d1, psnr_d2, cd})
      row += ',' + fmt_double(v);
    row += ',' + (ortho ? fmt_double(*ortho) : std::string());
    return row;
  }

  static std::string csv_header() {
    return "sample_id,snr_db,bandwidth,d1_ab,d1_ba,d2_ab,d2_ba,psnr_d1,"
           "psnr_d2,cd,ortho_metric";
  }
};

/// Full report for one reconstruction. D2 runs in both directions with each
/// query side's own normals; cd reuses the same NN searches as d1, so
/// cd == d1_ab + d1_ba holds bit-exactly.
inline MetricsReport evaluate(const PointCloud& recon, const PointCloud& truth,
                              const FeaturePool* pool = nullptr,
                              double psnr_peak = 1.0,
                              NnMode mode = NnMode::kAccelerated) {
  recon.validate();
  truth.validate();
  const detail::NnPair nn = detail::nn_both(recon, truth, mode);
  MetricsReport r;
  r.d1_ab = nn.ab.sq_dist.mean();
  r.d1_ba = nn.ba.sq_dist.mean();
  r.cd = r.d1_ab + r.d1_ba;
  const PointMat n_recon = detail::query_normals(recon, 16);
  const PointMat n_truth = detail::query_normals(truth, 16);
  r.d2_ab = detail::d2_from_nn(recon.points, n_recon, truth.points, nn.ab);
  r.d2_ba = detail::d2_from_nn(truth.points, n_truth, recon.points, nn.ba);
  r.psnr_d1 = psnr(r.d1_ab, r.d1_ba, psnr_peak);
  r.psnr_d2 = psnr(r.d2_ab, r.d2_ba, psnr_peak);
  if (pool) r.ortho = ortho_metric(*pool);
  return r;
}

}  // namespace pcjscc
