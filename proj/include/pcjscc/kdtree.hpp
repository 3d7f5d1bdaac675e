// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "pcjscc/common.hpp"

namespace pcjscc {

/// Static 3-d kd-tree over the rows of a point matrix. Build once, query
/// from any number of threads. Distances are squared Euclidean, accumulated
/// x,y,z in that order so results match the brute-force loop bit for bit.
class KdTree {
 public:
  explicit KdTree(const PointMat& pts, int leaf_size = 16)
      : pts_(pts), leaf_size_(leaf_size) {
    idx_.resize(static_cast<std::size_t>(pts_.rows()));
    std::iota(idx_.begin(), idx_.end(), 0);
    if (!idx_.empty()) root_ = build(0, static_cast<int>(idx_.size()));
  }

  /// Index and squared distance of the nearest row to q.
  std::pair<int, double> nearest(const Vec3& q) const {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    search1(root_, q, best, best_d);
    return {best, best_d};
  }

  /// k nearest rows to q, closest first; ties broken by lower row index.
  void knn(const Vec3& q, int k, std::vector<int>& out_idx,
           std::vector<double>& out_sq) const {
    std::vector<Entry> heap;
    heap.reserve(static_cast<std::size_t>(k));
    search_k(root_, q, k, heap);
    std::sort(heap.begin(), heap.end(), closer);
    out_idx.resize(heap.size());
    out_sq.resize(heap.size());
    for (std::size_t i = 0; i < heap.size(); ++i) {
      out_idx[i] = heap[i].i;
      out_sq[i] = heap[i].d;
    }
  }

 private:
  struct Node {
    int left = -1, right = -1;
    int begin = 0, end = 0;  // index range for leaves
    int axis = 0;
    double split = 0.0;
    bool leaf = false;
  };
  struct Entry {
    double d;
    int i;
  };

  static double sq_dist(const PointMat& pts, int i, const Vec3& q) {
    const double dx = pts(i, 0) - q(0);
    const double dy = pts(i, 1) - q(1);
    const double dz = pts(i, 2) - q(2);
    return dx * dx + dy * dy + dz * dz;
  }

  int build(int begin, int end) {
    Node n;
    if (end - begin <= leaf_size_) {
      n.leaf = true;
      n.begin = begin;
      n.end = end;
      nodes_.push_back(n);
      return static_cast<int>(nodes_.size()) - 1;
    }
    // split on the widest axis at the median
    Vec3 lo, hi;
    lo.setConstant(std::numeric_limits<double>::infinity());
    hi.setConstant(-std::numeric_limits<double>::infinity());
    for (int t = begin; t < end; ++t) {
      for (int a = 0; a < 3; ++a) {
        lo(a) = std::min(lo(a), pts_(idx_[t], a));
        hi(a) = std::max(hi(a), pts_(idx_[t], a));
      }
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const int mid = begin + (end - begin) / 2;
    std::nth_element(idx_.begin() + begin, idx_.begin() + mid,
                     idx_.begin() + end, [&](int a, int b) {
                       return pts_(a, axis) != pts_(b, axis)
                                  ? pts_(a, axis) < pts_(b, axis)
                                  : a < b;
                     });
    n.axis = axis;
    n.split = pts_(idx_[mid], axis);
    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back(n);
    const int l = build(begin, mid);
    const int r = build(mid, end);
    nodes_[self].left = l;
    nodes_[self].right = r;
    return self;
  }

  void search1(int ni, const Vec3& q, int& best, double& best_d) const {
    const Node& n = nodes_[ni];
    if (n.leaf) {
      for (int t = n.begin; t < n.end; ++t) {
        const int i = idx_[t];
        const double d = sq_dist(pts_, i, q);
        if (d < best_d || best < 0 || (d == best_d && i < best)) {
          best_d = d;
          best = i;
        }
      }
      return;
    }
    const double diff = q(n.axis) - n.split;
    const int near = diff < 0 ? n.left : n.right;
    const int far = diff < 0 ? n.right : n.left;
    search1(near, q, best, best_d);
    if (diff * diff <= best_d) search1(far, q, best, best_d);
  }

  void search_k(int ni, const Vec3& q, int k, std::vector<Entry>& heap) const {
    const Node& n = nodes_[ni];
    if (n.leaf) {
      for (int t = n.begin; t < n.end; ++t) {
        const int i = idx_[t];
        const double d = sq_dist(pts_, i, q);
        if (static_cast<int>(heap.size()) < k) {
          heap.push_back({d, i});
          std::push_heap(heap.begin(), heap.end(), closer);
        } else if (closer(Entry{d, i}, heap.front())) {
          std::pop_heap(heap.begin(), heap.end(), closer);
          heap.back() = {d, i};
          std::push_heap(heap.begin(), heap.end(), closer);
        }
      }
      return;
    }
    const double diff = q(n.axis) - n.split;
    const int near = diff < 0 ? n.left : n.right;
    const int far = diff < 0 ? n.right : n.left;
    search_k(near, q, k, heap);
    if (static_cast<int>(heap.size()) < k || diff * diff <= heap.front().d)
      search_k(far, q, k, heap);
  }

  // heap comparator: with this ordering the farthest candidate (ties on
  // higher index) sits at the heap front, matching the brute-force keep set
  static bool closer(const Entry& a, const Entry& b) {
    return a.d != b.d ? a.d < b.d : a.i < b.i;
  }

  PointMat pts_;
  int leaf_size_;
  std::vector<int> idx_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace pcjscc
