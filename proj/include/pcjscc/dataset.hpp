// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pcjscc/geometry.hpp"
#include "pcjscc/io.hpp"

namespace pcjscc {

// ---------------------------------------------------------------------------
// Synthetic surface families. Canonical shapes are analytic, so tests can
// check surface membership exactly; random pose/scale is applied on top.

enum class ShapeFamily {
  kSphere,
  kBox,
  kCylinder,
  kTorus,
  kCone,
  kPlaneWithHoles,
  kTwoSpheres,
  kCapsule,
};

inline const std::vector<ShapeFamily>& all_families() {
  static const std::vector<ShapeFamily> fams = {
      ShapeFamily::kSphere,      ShapeFamily::kBox,
      ShapeFamily::kCylinder,    ShapeFamily::kTorus,
      ShapeFamily::kCone,        ShapeFamily::kPlaneWithHoles,
      ShapeFamily::kTwoSpheres,  ShapeFamily::kCapsule};
  return fams;
}

inline std::string family_name(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::kSphere: return "sphere";
    case ShapeFamily::kBox: return "box";
    case ShapeFamily::kCylinder: return "cylinder";
    case ShapeFamily::kTorus: return "torus";
    case ShapeFamily::kCone: return "cone";
    case ShapeFamily::kPlaneWithHoles: return "plane_with_holes";
    case ShapeFamily::kTwoSpheres: return "two_spheres";
    case ShapeFamily::kCapsule: return "capsule";
  }
  throw std::invalid_argument("family_name: bad family");
}

inline ShapeFamily parse_family(const std::string& name) {
  for (ShapeFamily f : all_families())
    if (family_name(f) == name) return f;
  throw std::invalid_argument("unknown shape family: '" + name + "'");
}

namespace shapes {

// canonical dimensions
inline constexpr double kBoxHx = 1.0, kBoxHy = 0.75, kBoxHz = 0.5;
inline constexpr double kCylR = 0.6, kCylHz = 1.0;
inline constexpr double kTorusR = 0.7, kTorusr = 0.3;
inline constexpr double kConeRb = 0.8;  // base at z=-1, apex at z=+1
inline constexpr double kCapR = 0.5, kCapHz = 0.6;
inline constexpr double kSphereSep = 0.55, kSphereR2 = 0.6;

struct Hole {
  double x, y, r;
};
inline const std::array<Hole, 3>& plane_holes() {
  static const std::array<Hole, 3> holes = {
      Hole{-0.4, -0.3, 0.25}, Hole{0.5, 0.2, 0.3}, Hole{-0.1, 0.55, 0.2}};
  return holes;
}

inline Vec3 unit_sphere_point(Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec3 v;
  do {
    v << gauss(rng), gauss(rng), gauss(rng);
  } while (v.norm() < 1e-9);
  return v / v.norm();
}

}  // namespace shapes

/// One uniformly-sampled point on the canonical surface of the family.
inline Vec3 sample_family_point(ShapeFamily f, Rng& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  constexpr double kPi = 3.14159265358979323846;
  switch (f) {
    case ShapeFamily::kSphere:
      return shapes::unit_sphere_point(rng);
    case ShapeFamily::kBox: {
      using namespace shapes;
      const double ax = kBoxHy * kBoxHz, ay = kBoxHx * kBoxHz,
                   az = kBoxHx * kBoxHy;  // face-pair areas (up to factor 8)
      const double total = ax + ay + az;
      double pick = u01(rng) * total;
      const double su = 2.0 * u01(rng) - 1.0, sv = 2.0 * u01(rng) - 1.0;
      const double side = u01(rng) < 0.5 ? -1.0 : 1.0;
      Vec3 p;
      if (pick < ax)
        p << side * kBoxHx, su * kBoxHy, sv * kBoxHz;
      else if (pick < ax + ay)
        p << su * kBoxHx, side * kBoxHy, sv * kBoxHz;
      else
        p << su * kBoxHx, sv * kBoxHy, side * kBoxHz;
      return p;
    }
    case ShapeFamily::kCylinder: {
      using namespace shapes;
      const double lateral = 2.0 * kPi * kCylR * 2.0 * kCylHz;
      const double caps = 2.0 * kPi * kCylR * kCylR;
      if (u01(rng) * (lateral + caps) < lateral) {
        const double th = 2.0 * kPi * u01(rng);
        return {kCylR * std::cos(th), kCylR * std::sin(th),
                kCylHz * (2.0 * u01(rng) - 1.0)};
      }
      const double th = 2.0 * kPi * u01(rng);
      const double rr = kCylR * std::sqrt(u01(rng));
      return {rr * std::cos(th), rr * std::sin(th),
              u01(rng) < 0.5 ? -kCylHz : kCylHz};
    }
    case ShapeFamily::kTorus: {
      using namespace shapes;
      const double uang = 2.0 * kPi * u01(rng);
      double vang;
      do {  // density on the tube angle is (R + r cos v)/(R + r)
        vang = 2.0 * kPi * u01(rng);
      } while (u01(rng) >= (kTorusR + kTorusr * std::cos(vang)) /
                               (kTorusR + kTorusr));
      const double ring = kTorusR + kTorusr * std::cos(vang);
      return {ring * std::cos(uang), ring * std::sin(uang),
              kTorusr * std::sin(vang)};
    }
    case ShapeFamily::kCone: {
      using namespace shapes;
      const double slant = std::sqrt(kConeRb * kConeRb + 4.0);
      const double lateral = kPi * kConeRb * slant;
      const double base = kPi * kConeRb * kConeRb;
      const double th = 2.0 * kPi * u01(rng);
      if (u01(rng) * (lateral + base) < lateral) {
        const double t = std::sqrt(u01(rng));  // area-uniform along the slant
        const double rr = kConeRb * t;
        return {rr * std::cos(th), rr * std::sin(th), 1.0 - 2.0 * t};
      }
      const double rr = kConeRb * std::sqrt(u01(rng));
      return {rr * std::cos(th), rr * std::sin(th), -1.0};
    }
    case ShapeFamily::kPlaneWithHoles: {
      while (true) {
        const double x = 2.0 * u01(rng) - 1.0;
        const double y = 2.0 * u01(rng) - 1.0;
        bool in_hole = false;
        for (const auto& h : shapes::plane_holes()) {
          const double dx = x - h.x, dy = y - h.y;
          if (dx * dx + dy * dy < h.r * h.r) in_hole = true;
        }
        if (!in_hole) return {x, y, 0.0};
      }
    }
    case ShapeFamily::kTwoSpheres: {
      using namespace shapes;
      while (true) {
        const double cx = u01(rng) < 0.5 ? -kSphereSep : kSphereSep;
        Vec3 p = kSphereR2 * unit_sphere_point(rng);
        p(0) += cx;
        const double dx_other = p(0) + (cx > 0 ? kSphereSep : -kSphereSep);
        const double d_other =
            std::sqrt(dx_other * dx_other + p(1) * p(1) + p(2) * p(2));
        if (d_other >= kSphereR2) return p;  // keep only the union surface
      }
    }
    case ShapeFamily::kCapsule: {
      using namespace shapes;
      const double lateral = 2.0 * kPi * kCapR * 2.0 * kCapHz;
      const double caps = 4.0 * kPi * kCapR * kCapR;
      if (u01(rng) * (lateral + caps) < lateral) {
        const double th = 2.0 * kPi * u01(rng);
        return {kCapR * std::cos(th), kCapR * std::sin(th),
                kCapHz * (2.0 * u01(rng) - 1.0)};
      }
      Vec3 p = kCapR * unit_sphere_point(rng);
      const double side = u01(rng) < 0.5 ? -1.0 : 1.0;
      p(2) = side * std::abs(p(2)) + side * kCapHz;
      return p;
    }
  }
  throw std::invalid_argument("sample_family_point: bad family");
}

/// Exact membership test on the canonical (pre-pose) surface.
inline bool on_family_surface(ShapeFamily f, const Vec3& p,
                              double tol = 1e-9) {
  using namespace shapes;
  const double rho = std::sqrt(p(0) * p(0) + p(1) * p(1));
  switch (f) {
    case ShapeFamily::kSphere:
      return std::abs(p.norm() - 1.0) <= tol;
    case ShapeFamily::kBox: {
      const double mx = std::abs(p(0)) / kBoxHx;
      const double my = std::abs(p(1)) / kBoxHy;
      const double mz = std::abs(p(2)) / kBoxHz;
      const double m = std::max({mx, my, mz});
      return std::abs(m - 1.0) <= tol;
    }
    case ShapeFamily::kCylinder: {
      const bool lateral =
          std::abs(rho - kCylR) <= tol && std::abs(p(2)) <= kCylHz + tol;
      const bool cap =
          std::abs(std::abs(p(2)) - kCylHz) <= tol && rho <= kCylR + tol;
      return lateral || cap;
    }
    case ShapeFamily::kTorus: {
      const double ring = rho - kTorusR;
      return std::abs(std::sqrt(ring * ring + p(2) * p(2)) - kTorusr) <= tol;
    }
    case ShapeFamily::kCone: {
      const double t = (1.0 - p(2)) / 2.0;
      const bool lateral = t >= -tol && t <= 1.0 + tol &&
                           std::abs(rho - kConeRb * t) <= tol;
      const bool base =
          std::abs(p(2) + 1.0) <= tol && rho <= kConeRb + tol;
      return lateral || base;
    }
    case ShapeFamily::kPlaneWithHoles: {
      if (std::abs(p(2)) > tol) return false;
      if (std::abs(p(0)) > 1.0 + tol || std::abs(p(1)) > 1.0 + tol)
        return false;
      for (const auto& h : plane_holes()) {
        const double dx = p(0) - h.x, dy = p(1) - h.y;
        if (std::sqrt(dx * dx + dy * dy) < h.r - tol) return false;
      }
      return true;
    }
    case ShapeFamily::kTwoSpheres: {
      const Vec3 c1(-kSphereSep, 0, 0), c2(kSphereSep, 0, 0);
      const double d1 = (p - c1).norm(), d2 = (p - c2).norm();
      const bool on1 = std::abs(d1 - kSphereR2) <= tol && d2 >= kSphereR2 - tol;
      const bool on2 = std::abs(d2 - kSphereR2) <= tol && d1 >= kSphereR2 - tol;
      return on1 || on2;
    }
    case ShapeFamily::kCapsule: {
      const bool lateral =
          std::abs(rho - kCapR) <= tol && std::abs(p(2)) <= kCapHz + tol;
      const double za = std::abs(p(2)) - kCapHz;
      const bool cap = za >= -tol &&
                       std::abs(std::sqrt(rho * rho + za * za) - kCapR) <= tol;
      return lateral || cap;
    }
  }
  return false;
}

/// Canonical point matrix, no pose.
inline PointMat sample_family_surface(ShapeFamily f, int count, Rng& rng) {
  PointMat pts(count, 3);
  for (int i = 0; i < count; ++i) pts.row(i) = sample_family_point(f, rng);
  return pts;
}

struct SyntheticRecipe {
  std::vector<ShapeFamily> families = all_families();
  int instances_per_family = 64;
  int raw_points = 2048;  // sampled before FPS downsampling
  bool random_pose = true;
};

/// Uniform random rotation from a normalized 4-Gaussian quaternion.
inline Eigen::Matrix3d random_rotation(Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::Vector4d q;
  do {
    q << gauss(rng), gauss(rng), gauss(rng), gauss(rng);
  } while (q.norm() < 1e-9);
  q.normalize();
  return Eigen::Quaterniond(q(0), q(1), q(2), q(3)).toRotationMatrix();
}

/// Analytic surface samples with per-instance random pose/scale; the id
/// carries the family name. Deterministic in (recipe, seed).
inline std::vector<std::pair<std::string, PointCloud>> generate_synthetic(
    const SyntheticRecipe& recipe, std::uint64_t seed) {
  if (recipe.families.empty())
    throw std::invalid_argument("generate_synthetic: no families");
  if (recipe.instances_per_family < 1 || recipe.raw_points < 1)
    throw std::invalid_argument("generate_synthetic: bad counts");
  std::vector<std::pair<std::string, PointCloud>> out;
  for (std::size_t fi = 0; fi < recipe.families.size(); ++fi) {
    const ShapeFamily fam = recipe.families[fi];
    for (int inst = 0; inst < recipe.instances_per_family; ++inst) {
      Rng rng(mix_seed(seed, (fi << 20) + static_cast<std::uint64_t>(inst)));
      PointMat pts = sample_family_surface(fam, recipe.raw_points, rng);
      if (recipe.random_pose) {
        std::uniform_real_distribution<double> scale(0.7, 1.3);
        Eigen::Vector3d s(scale(rng), scale(rng), scale(rng));
        const Eigen::Matrix3d rot = random_rotation(rng);
        pts = (pts.array().rowwise() * s.transpose().array()).matrix() *
              rot.transpose();
      }
      char id[64];
      std::snprintf(id, sizeof(id), "%s_%03d", family_name(fam).c_str(), inst);
      out.emplace_back(id, make_cloud(std::move(pts)));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset loading: FPS to a fixed budget, normalize, deterministic split.

struct DatasetSpec {
  enum class Source { kSynthetic, kDirectory };
  Source source = Source::kSynthetic;
  std::string directory;
  int num_points = 2048;
  double range_lo = -1.0, range_hi = 1.0;
  std::uint64_t gen_seed = 0;
  std::uint64_t split_seed = 0;
  double train_fraction = 0.875;
  SyntheticRecipe recipe;
};

struct Dataset {
  std::vector<PointCloud> train, test;
  std::vector<std::string> train_ids, test_ids;
};

namespace detail {
inline PointCloud prepare_cloud(const PointCloud& raw, const DatasetSpec& spec,
                                const std::string& name) {
  if (raw.size() < spec.num_points)
    throw std::runtime_error(name + ": has " + std::to_string(raw.size()) +
                             " points, need >= " +
                             std::to_string(spec.num_points));
  PointCloud c = fps_downsample(raw, spec.num_points, 0);
  c = normalize_to_range(c, spec.range_lo, spec.range_hi);
  c.validate();
  return c;
}
}  // namespace detail

inline Dataset load_dataset(const DatasetSpec& spec) {
  std::vector<std::pair<std::string, PointCloud>> items;
  Dataset ds;
  if (spec.source == DatasetSpec::Source::kSynthetic) {
    items = generate_synthetic(spec.recipe, spec.gen_seed);
  } else {
    namespace fs = std::filesystem;
    const fs::path root(spec.directory);
    if (!fs::is_directory(root))
      throw std::runtime_error("dataset directory not found: " +
                               spec.directory);
    const bool pre_split =
        fs::is_directory(root / "train") && fs::is_directory(root / "test");
    auto collect = [](const fs::path& dir) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(dir)) {
        const auto ext = e.path().extension().string();
        if (e.is_regular_file() &&
            (ext == ".xyz" || ext == ".txt" || ext == ".ply"))
          files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      return files;
    };
    if (pre_split) {
      for (const auto& path : collect(root / "train")) {
        ds.train.push_back(detail::prepare_cloud(read_point_cloud(path), spec,
                                                 path.string()));
        ds.train_ids.push_back(path.stem().string());
      }
      for (const auto& path : collect(root / "test")) {
        ds.test.push_back(detail::prepare_cloud(read_point_cloud(path), spec,
                                                path.string()));
        ds.test_ids.push_back(path.stem().string());
      }
      if (ds.train.empty() || ds.test.empty())
        throw std::runtime_error("dataset split directories are empty: " +
                                 spec.directory);
      return ds;
    }
    for (const auto& path : collect(root))
      items.emplace_back(path.string(), read_point_cloud(path));
    if (items.empty())
      throw std::runtime_error("no point cloud files in " + spec.directory);
  }

  // deterministic shuffled split (synthetic ids are stable, so this is
  // reproducible end to end)
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(spec.split_seed, 0x73706c6974ULL));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(
      std::round(spec.train_fraction * static_cast<double>(items.size())));
  for (std::size_t k = 0; k < order.size(); ++k) {
    auto& [name, raw] = items[order[k]];
    PointCloud c = detail::prepare_cloud(raw, spec, name);
    const std::string id =
        std::filesystem::path(name).stem().string();
    if (k < n_train) {
      ds.train.push_back(std::move(c));
      ds.train_ids.push_back(id);
    } else {
      ds.test.push_back(std::move(c));
      ds.test_ids.push_back(id);
    }
  }
  if (ds.test.empty() && !ds.train.empty()) {
    // always keep at least one held-out sample
    ds.test.push_back(ds.train.back());
    ds.test_ids.push_back(ds.train_ids.back());
    ds.train.pop_back();
    ds.train_ids.pop_back();
  }
  return ds;
}

/// Materialize a synthetic dataset as .xyz files under out_dir/train and
/// out_dir/test, exercising the same directory layout the loader accepts.
inline void write_dataset(const Dataset& ds, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "train");
  fs::create_directories(fs::path(out_dir) / "test");
  for (std::size_t i = 0; i < ds.train.size(); ++i)
    write_xyz(ds.train[i],
              (fs::path(out_dir) / "train" / (ds.train_ids[i] + ".xyz"))
                  .string());
  for (std::size_t i = 0; i < ds.test.size(); ++i)
    write_xyz(ds.test[i],
              (fs::path(out_dir) / "test" / (ds.test_ids[i] + ".xyz")).string());
}

}  // namespace pcjscc
