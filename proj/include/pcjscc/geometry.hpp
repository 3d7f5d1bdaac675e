// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <vector>

#include "pcjscc/common.hpp"
#include "pcjscc/kdtree.hpp"

namespace pcjscc {

/// Unordered 3D point set with optional unit normals; the transmitted source.
struct PointCloud {
  PointMat points;                  // M x 3
  std::optional<PointMat> normals;  // M x 3, unit rows

  Eigen::Index size() const { return points.rows(); }

  void validate() const {
    if (points.rows() < 1) throw std::invalid_argument("PointCloud: empty");
    if (!points.allFinite())
      throw std::invalid_argument("PointCloud: non-finite coordinate");
    if (normals) {
      if (normals->rows() != points.rows())
        throw std::invalid_argument("PointCloud: normals/points size mismatch");
      for (Eigen::Index i = 0; i < normals->rows(); ++i) {
        if (std::abs(normals->row(i).norm() - 1.0) > 1e-6)
          throw std::invalid_argument("PointCloud: non-unit normal");
      }
    }
  }
};

inline PointCloud make_cloud(PointMat pts) {
  PointCloud c;
  c.points = std::move(pts);
  return c;
}

/// Uniform grid over [-1,1]^2, the folding prior.
struct Grid2D {
  Eigen::Matrix<double, Eigen::Dynamic, 2> points;  // g^2 x 2, lexicographic
  int g = 0;
};

/// g x g grid, endpoints included; g = 1 collapses to the midpoint (0,0).
inline Grid2D make_grid(int g) {
  if (g < 1) throw std::invalid_argument("make_grid: g must be >= 1");
  Grid2D grid;
  grid.g = g;
  grid.points.resize(static_cast<Eigen::Index>(g) * g, 2);
  Eigen::Index r = 0;
  for (int i = 0; i < g; ++i) {
    const double x = g == 1 ? 0.0 : -1.0 + 2.0 * i / (g - 1);
    for (int j = 0; j < g; ++j) {
      const double y = g == 1 ? 0.0 : -1.0 + 2.0 * j / (g - 1);
      grid.points(r, 0) = x;
      grid.points(r, 1) = y;
      ++r;
    }
  }
  return grid;
}

/// Per-axis affine map of the bounding box onto [lo,hi]; axes with zero
/// extent map to the midpoint.
inline PointCloud normalize_to_range(const PointCloud& cloud, double lo,
                                     double hi) {
  if (cloud.size() < 1) throw std::invalid_argument("normalize: empty cloud");
  if (!(hi > lo)) throw std::invalid_argument("normalize: need hi > lo");
  PointCloud out = cloud;
  const Vec3 bb_lo = cloud.points.colwise().minCoeff();
  const Vec3 bb_hi = cloud.points.colwise().maxCoeff();
  for (int a = 0; a < 3; ++a) {
    const double extent = bb_hi(a) - bb_lo(a);
    if (extent == 0.0) {
      out.points.col(a).setConstant(0.5 * (lo + hi));
    } else {
      // t = (v - min)/extent lands in [0,1] exactly, so both endpoints of
      // [lo,hi] are attained bit-exactly
      out.points.col(a) =
          (((cloud.points.col(a).array() - bb_lo(a)) / extent) * (hi - lo) +
           lo)
              .matrix();
    }
  }
  return out;
}

/// Farthest point sampling: selection order plus each point's distance to
/// the already-selected set at the moment it was chosen. dist_at_selection[0]
/// is +inf (the seed). Ties break toward the lowest index.
struct FpsResult {
  std::vector<int> order;
  std::vector<double> dist_at_selection;  // squared distances
};

inline FpsResult fps_indices(const PointMat& pts, int k, int seed_index) {
  const auto m = static_cast<int>(pts.rows());
  if (k < 1 || k > m) throw std::invalid_argument("fps: need 1 <= k <= M");
  if (seed_index < 0 || seed_index >= m)
    throw std::invalid_argument("fps: seed index out of range");
  FpsResult res;
  res.order.reserve(k);
  res.dist_at_selection.reserve(k);
  std::vector<double> min_sq(m, std::numeric_limits<double>::infinity());
  std::vector<char> taken(m, 0);
  int cur = seed_index;
  res.order.push_back(cur);
  res.dist_at_selection.push_back(std::numeric_limits<double>::infinity());
  taken[cur] = 1;
  for (int step = 1; step < k; ++step) {
    const Vec3 p = pts.row(cur);
    int next = -1;
    double best = -1.0;
    for (int i = 0; i < m; ++i) {
      if (taken[i]) continue;
      const double dx = pts(i, 0) - p(0);
      const double dy = pts(i, 1) - p(1);
      const double dz = pts(i, 2) - p(2);
      const double d = dx * dx + dy * dy + dz * dz;
      if (d < min_sq[i]) min_sq[i] = d;
      if (min_sq[i] > best) {
        best = min_sq[i];
        next = i;
      }
    }
    cur = next;
    res.order.push_back(cur);
    res.dist_at_selection.push_back(best);
    taken[cur] = 1;
  }
  return res;
}

/// The k FPS-selected points (normals carried along when present).
inline PointCloud fps_downsample(const PointCloud& cloud, int k,
                                 int seed_index = 0) {
  const FpsResult res = fps_indices(cloud.points, k, seed_index);
  PointCloud out;
  out.points.resize(k, 3);
  if (cloud.normals) out.normals.emplace(k, 3);
  for (int i = 0; i < k; ++i) {
    out.points.row(i) = cloud.points.row(res.order[i]);
    if (cloud.normals) out.normals->row(i) = cloud.normals->row(res.order[i]);
  }
  return out;
}

enum class NnMode { kAccelerated, kBrute };

struct NnResult {
  Vec sq_dist;             // |A|
  std::vector<int> index;  // |A|, row in B
};

/// Nearest neighbor of every row of A among the rows of B. Both modes
/// compute identical values; brute is the O(|A||B|) oracle.
inline NnResult nearest_neighbors(const PointMat& a, const PointMat& b,
                                  NnMode mode = NnMode::kAccelerated) {
  if (a.rows() < 1 || b.rows() < 1)
    throw std::invalid_argument("nearest_neighbors: empty input");
  NnResult res;
  res.sq_dist.resize(a.rows());
  res.index.resize(static_cast<std::size_t>(a.rows()));
  if (mode == NnMode::kBrute) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      int best_j = -1;
      for (Eigen::Index j = 0; j < b.rows(); ++j) {
        const double dx = a(i, 0) - b(j, 0);
        const double dy = a(i, 1) - b(j, 1);
        const double dz = a(i, 2) - b(j, 2);
        const double d = dx * dx + dy * dy + dz * dz;
        if (d < best || best_j < 0) {
          best = d;
          best_j = static_cast<int>(j);
        }
      }
      res.sq_dist(i) = best;
      res.index[static_cast<std::size_t>(i)] = best_j;
    }
    return res;
  }
  const KdTree tree(b);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const auto [j, d] = tree.nearest(a.row(i));
    res.sq_dist(i) = d;
    res.index[static_cast<std::size_t>(i)] = j;
  }
  return res;
}

inline Vec nn_sq_distances(const PointCloud& a, const PointCloud& b,
                           NnMode mode = NnMode::kAccelerated) {
  return nearest_neighbors(a.points, b.points, mode).sq_dist;
}

/// Local-PCA plane-fit normals over the k nearest neighbors (query point
/// included), oriented outward from the cloud centroid. A zero centroid dot
/// product canonicalizes to a positive leading component.
inline PointCloud estimate_normals(const PointCloud& cloud, int k_neighbors) {
  const auto m = cloud.size();
  if (k_neighbors < 3)
    throw std::invalid_argument("estimate_normals: k_neighbors must be >= 3");
  if (m < k_neighbors)
    throw std::invalid_argument("estimate_normals: fewer points than k");
  PointCloud out = cloud;
  out.normals.emplace(m, 3);
  const Vec3 centroid = cloud.points.colwise().mean();
  const KdTree tree(cloud.points);
  std::vector<int> idx;
  std::vector<double> sq;
  for (Eigen::Index i = 0; i < m; ++i) {
    tree.knn(cloud.points.row(i), k_neighbors, idx, sq);
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    Vec3 mean = Vec3::Zero();
    for (int j : idx) mean += cloud.points.row(j);
    mean /= static_cast<double>(idx.size());
    for (int j : idx) {
      const Vec3 d = cloud.points.row(j) - mean;
      cov += d.transpose() * d;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    Vec3 n = eig.eigenvectors().col(0).transpose();  // smallest eigenvalue
    n.normalize();
    const double outward = n.dot(cloud.points.row(i) - centroid);
    if (outward < 0.0) {
      n = -n;
    } else if (outward == 0.0) {
      for (int a = 0; a < 3; ++a) {
        if (n(a) != 0.0) {
          if (n(a) < 0.0) n = -n;
          break;
        }
      }
    }
    out.normals->row(i) = n;
  }
  return out;
}

/// Index of the lexicographically smallest point; a permutation-invariant
/// FPS seed for generic clouds.
inline int canonical_seed_index(const PointMat& pts) {
  int best = 0;
  for (Eigen::Index i = 1; i < pts.rows(); ++i) {
    for (int a = 0; a < 3; ++a) {
      if (pts(i, a) < pts(best, a)) {
        best = static_cast<int>(i);
        break;
      }
      if (pts(i, a) > pts(best, a)) break;
    }
  }
  return best;
}

}  // namespace pcjscc
