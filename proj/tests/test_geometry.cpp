// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "pcjscc/geometry.hpp"
#include "test_util.hpp"

using namespace pcjscc;
using Catch::Approx;

namespace {

PointCloud cloud_from(std::initializer_list<std::array<double, 3>> rows) {
  PointMat pts(static_cast<Eigen::Index>(rows.size()), 3);
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    pts.row(i) << r[0], r[1], r[2];
    ++i;
  }
  return make_cloud(std::move(pts));
}

}  // namespace

TEST_CASE("normalize_to_range maps bbox endpoints exactly", "[geometry]") {
  const PointCloud c = cloud_from({{0, 0, 0}, {2, 2, 2}, {1, 0.5, 1.5}});
  const PointCloud n = normalize_to_range(c, -1.0, 1.0);
  REQUIRE(n.points.row(0) == Eigen::RowVector3d(-1, -1, -1));
  REQUIRE(n.points.row(1) == Eigen::RowVector3d(1, 1, 1));
  REQUIRE(n.points(2, 0) == Approx(0.0).margin(1e-15));
  REQUIRE(n.points(2, 1) == Approx(-0.5).margin(1e-15));
  REQUIRE(n.points(2, 2) == Approx(0.5).margin(1e-15));
}

TEST_CASE("normalize_to_range is identity on already-normalized input",
          "[geometry]") {
  PointCloud c = testutil::random_cloud(64, 11);
  c = normalize_to_range(c, -1.0, 1.0);
  const PointCloud again = normalize_to_range(c, -1.0, 1.0);
  REQUIRE((again.points - c.points).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("normalize_to_range sends degenerate axes to the midpoint",
          "[geometry]") {
  PointCloud c = testutil::random_cloud(32, 12);
  c.points.col(2).setConstant(5.0);
  const PointCloud n = normalize_to_range(c, -1.0, 1.0);
  REQUIRE(n.points.col(2).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(n.points.col(0).minCoeff() == -1.0);
  REQUIRE(n.points.col(0).maxCoeff() == 1.0);
}

TEST_CASE("normalize_to_range rejects empty clouds and bad ranges",
          "[geometry]") {
  PointCloud empty;
  empty.points.resize(0, 3);
  REQUIRE_THROWS_AS(normalize_to_range(empty, -1, 1), std::invalid_argument);
  const PointCloud c = testutil::random_cloud(4, 13);
  REQUIRE_THROWS_AS(normalize_to_range(c, 1, 1), std::invalid_argument);
}

TEST_CASE("fps picks the square corners from corners plus center",
          "[geometry]") {
  // exhaustive oracle over the 5-point set: every selection step must
  // maximize the min distance to the already-selected prefix
  const PointCloud c = cloud_from(
      {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}, {0.5, 0.5, 0}});
  const FpsResult res = fps_indices(c.points, 4, 0);
  const std::set<int> got(res.order.begin(), res.order.end());
  REQUIRE(got == std::set<int>{0, 1, 2, 3});
  for (std::size_t step = 1; step < res.order.size(); ++step) {
    auto min_dist_to_prefix = [&](int candidate) {
      double best = kInf;
      for (std::size_t s = 0; s < step; ++s)
        best = std::min(best, (c.points.row(candidate) -
                               c.points.row(res.order[s]))
                                  .squaredNorm());
      return best;
    };
    const double chosen = min_dist_to_prefix(res.order[step]);
    for (int cand = 0; cand < 5; ++cand) {
      if (std::find(res.order.begin(), res.order.begin() + long(step) + 1,
                    cand) != res.order.begin() + long(step) + 1)
        continue;
      REQUIRE(chosen >= min_dist_to_prefix(cand));
    }
  }
}

TEST_CASE("fps with k = M returns the whole cloud; k = 1 the seed",
          "[geometry]") {
  const PointCloud c = testutil::random_cloud(20, 14);
  const PointCloud all = fps_downsample(c, 20, 3);
  std::set<std::array<double, 3>> in, out;
  for (int i = 0; i < 20; ++i) {
    in.insert({c.points(i, 0), c.points(i, 1), c.points(i, 2)});
    out.insert({all.points(i, 0), all.points(i, 1), all.points(i, 2)});
  }
  REQUIRE(in == out);
  const PointCloud one = fps_downsample(c, 1, 7);
  REQUIRE(one.size() == 1);
  REQUIRE(one.points.row(0) == c.points.row(7));
}

TEST_CASE("fps output is a duplicate-free subset of the input", "[geometry]") {
  for (std::uint64_t seed : {21, 22, 23}) {
    const PointCloud c = testutil::random_cloud(50, seed);
    const FpsResult res = fps_indices(c.points, 17, 0);
    std::set<int> uniq(res.order.begin(), res.order.end());
    REQUIRE(uniq.size() == 17);
    for (int idx : res.order) {
      REQUIRE(idx >= 0);
      REQUIRE(idx < 50);
    }
  }
}

TEST_CASE("fps rejects out-of-range k", "[geometry]") {
  const PointCloud c = testutil::random_cloud(5, 15);
  REQUIRE_THROWS_AS(fps_downsample(c, 6), std::invalid_argument);
  REQUIRE_THROWS_AS(fps_downsample(c, 0), std::invalid_argument);
}

TEST_CASE("coplanar cloud gets unit z normals", "[geometry]") {
  PointCloud c = testutil::random_cloud(40, 16);
  c.points.col(2).setZero();
  const PointCloud n = estimate_normals(c, 8);
  for (Eigen::Index i = 0; i < n.size(); ++i) {
    REQUIRE(std::abs((*n.normals)(i, 2)) == Approx(1.0).margin(1e-9));
    REQUIRE(std::abs((*n.normals)(i, 0)) < 1e-9);
    REQUIRE(n.normals->row(i).norm() == Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("sphere normals are radial", "[geometry]") {
  Rng rng(99);
  PointMat pts(500, 3);
  for (int i = 0; i < 500; ++i) pts.row(i) = shapes::unit_sphere_point(rng);
  const PointCloud n = estimate_normals(make_cloud(pts), 16);
  int good = 0;
  const double cos_5deg = std::cos(5.0 * M_PI / 180.0);
  for (int i = 0; i < 500; ++i) {
    const Vec3 radial = pts.row(i).normalized();
    if (std::abs(n.normals->row(i).dot(radial)) >= cos_5deg) ++good;
  }
  REQUIRE(good >= 495);  // >= 99%
}

TEST_CASE("k equal to M gives a single global plane fit", "[geometry]") {
  PointCloud c = testutil::random_cloud(12, 17);
  c.points.col(2) = 0.25 * c.points.col(0) - 0.5 * c.points.col(1);
  const PointCloud n = estimate_normals(c, 12);
  // all normals colinear with the plane normal (1/4, -1/2, -1)
  Eigen::RowVector3d plane(0.25, -0.5, -1.0);
  plane.normalize();
  for (Eigen::Index i = 0; i < n.size(); ++i)
    REQUIRE(std::abs(n.normals->row(i).dot(plane)) ==
            Approx(1.0).margin(1e-9));
}

TEST_CASE("estimate_normals requires enough points", "[geometry]") {
  const PointCloud c = testutil::random_cloud(5, 18);
  REQUIRE_THROWS_AS(estimate_normals(c, 6), std::invalid_argument);
  REQUIRE_THROWS_AS(estimate_normals(c, 2), std::invalid_argument);
}

TEST_CASE("normals rotate with the cloud", "[geometry]") {
  const PointCloud c = testutil::random_cloud(60, 19);
  const Eigen::Matrix3d rot = testutil::random_rotation_matrix(5);
  PointCloud rotated = c;
  rotated.points = c.points * rot.transpose();
  const PointCloud n0 = estimate_normals(c, 10);
  const PointCloud n1 = estimate_normals(rotated, 10);
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    const Vec3 expect = n0.normals->row(i) * rot.transpose();
    const double align = std::abs(expect.dot(n1.normals->row(i)));
    REQUIRE(align == Approx(1.0).margin(1e-5));
  }
}

TEST_CASE("nn distances: identical clouds give zeros", "[geometry]") {
  const PointCloud c = testutil::random_cloud(30, 20);
  REQUIRE(nn_sq_distances(c, c).maxCoeff() == 0.0);
}

TEST_CASE("nn distances: hand example", "[geometry]") {
  const PointCloud a = cloud_from({{0, 0, 0}});
  const PointCloud b = cloud_from({{1, 0, 0}, {0, 2, 0}});
  const Vec d = nn_sq_distances(a, b);
  REQUIRE(d.size() == 1);
  REQUIRE(d(0) == 1.0);
}

TEST_CASE("accelerated nn matches the brute-force oracle exactly",
          "[geometry]") {
  Rng rng(31);
  std::uniform_int_distribution<int> size_dist(1, 256);
  for (int trial = 0; trial < 100; ++trial) {
    const int ma = size_dist(rng), mb = size_dist(rng);
    const PointCloud a = testutil::random_cloud(ma, 1000 + trial);
    const PointCloud b = testutil::random_cloud(mb, 2000 + trial);
    const Vec fast = nn_sq_distances(a, b, NnMode::kAccelerated);
    const Vec brute = nn_sq_distances(a, b, NnMode::kBrute);
    REQUIRE((fast - brute).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("nn distances are permutation-invariant in B, covariant in A",
          "[geometry]") {
  const PointCloud a = testutil::random_cloud(25, 32);
  const PointCloud b = testutil::random_cloud(40, 33);
  std::vector<int> perm(40);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(34);
  std::shuffle(perm.begin(), perm.end(), rng);
  PointCloud b_perm = b;
  for (int i = 0; i < 40; ++i) b_perm.points.row(i) = b.points.row(perm[i]);
  REQUIRE(nn_sq_distances(a, b) == nn_sq_distances(a, b_perm));

  std::vector<int> aperm(25);
  std::iota(aperm.begin(), aperm.end(), 0);
  std::shuffle(aperm.begin(), aperm.end(), rng);
  PointCloud a_perm = a;
  for (int i = 0; i < 25; ++i) a_perm.points.row(i) = a.points.row(aperm[i]);
  const Vec base = nn_sq_distances(a, b);
  const Vec permuted = nn_sq_distances(a_perm, b);
  for (int i = 0; i < 25; ++i) REQUIRE(permuted(i) == base(aperm[i]));
}

TEST_CASE("nn distances reject empty inputs", "[geometry]") {
  const PointCloud a = testutil::random_cloud(3, 35);
  PointCloud empty;
  empty.points.resize(0, 3);
  REQUIRE_THROWS_AS(nn_sq_distances(a, empty), std::invalid_argument);
  REQUIRE_THROWS_AS(nn_sq_distances(empty, a), std::invalid_argument);
}

TEST_CASE("make_grid endpoints and spacing", "[geometry]") {
  const Grid2D g2 = make_grid(2);
  std::set<std::pair<double, double>> got;
  for (Eigen::Index i = 0; i < 4; ++i)
    got.insert({g2.points(i, 0), g2.points(i, 1)});
  REQUIRE(got == std::set<std::pair<double, double>>{
                     {-1, -1}, {-1, 1}, {1, -1}, {1, 1}});

  const Grid2D g4 = make_grid(4);
  REQUIRE(g4.points.rows() == 16);
  REQUIRE(g4.points(4, 0) - g4.points(0, 0) == Approx(2.0 / 3.0));
  REQUIRE(g4.points.minCoeff() == -1.0);
  REQUIRE(g4.points.maxCoeff() == 1.0);

  const Grid2D g1 = make_grid(1);
  REQUIRE(g1.points.rows() == 1);
  REQUIRE(g1.points(0, 0) == 0.0);
  REQUIRE(g1.points(0, 1) == 0.0);

  REQUIRE_THROWS_AS(make_grid(0), std::invalid_argument);
}

TEST_CASE("make_grid is lexicographically sorted and axis-symmetric",
          "[geometry]") {
  for (int g : {1, 2, 3, 4, 7}) {
    const Grid2D grid = make_grid(g);
    std::set<std::pair<double, double>> pts, swapped, negated;
    for (Eigen::Index i = 0; i < grid.points.rows(); ++i) {
      pts.insert({grid.points(i, 0), grid.points(i, 1)});
      swapped.insert({grid.points(i, 1), grid.points(i, 0)});
      negated.insert({-grid.points(i, 0), grid.points(i, 1)});
      if (i > 0) {
        const auto prev =
            std::make_pair(grid.points(i - 1, 0), grid.points(i - 1, 1));
        const auto cur = std::make_pair(grid.points(i, 0), grid.points(i, 1));
        REQUIRE(prev < cur);
      }
    }
    REQUIRE(pts == swapped);
    REQUIRE(pts == negated);
  }
}
