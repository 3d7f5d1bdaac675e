// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pcjscc/geometry.hpp"

namespace pcjscc {

/// Whitespace-delimited text, one point per line: x y z [nx ny nz].
inline PointCloud read_xyz(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<double> coords, norms;
  std::string line;
  int lineno = 0;
  bool has_normals = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x >> y >> z))
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": malformed point line");
    coords.insert(coords.end(), {x, y, z});
    double nx, ny, nz;
    if (ls >> nx) {
      if (!(ls >> ny >> nz))
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": expected 3 normal columns");
      if (coords.size() > 3 && !has_normals)
        throw std::runtime_error(path + ": inconsistent normal columns");
      has_normals = true;
      norms.insert(norms.end(), {nx, ny, nz});
    } else if (has_normals) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": missing normal columns");
    }
  }
  if (coords.empty()) throw std::runtime_error(path + ": no points");
  PointCloud c;
  const auto m = static_cast<Eigen::Index>(coords.size() / 3);
  c.points.resize(m, 3);
  for (Eigen::Index i = 0; i < m; ++i)
    c.points.row(i) << coords[3 * i], coords[3 * i + 1], coords[3 * i + 2];
  if (has_normals) {
    c.normals.emplace(m, 3);
    for (Eigen::Index i = 0; i < m; ++i)
      c.normals->row(i) << norms[3 * i], norms[3 * i + 1], norms[3 * i + 2];
  }
  return c;
}

inline void write_xyz(const PointCloud& cloud, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    out << fmt_double(cloud.points(i, 0)) << ' '
        << fmt_double(cloud.points(i, 1)) << ' '
        << fmt_double(cloud.points(i, 2));
    if (cloud.normals)
      out << ' ' << fmt_double((*cloud.normals)(i, 0)) << ' '
          << fmt_double((*cloud.normals)(i, 1)) << ' '
          << fmt_double((*cloud.normals)(i, 2));
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

/// Minimal ASCII PLY: x/y/z properties plus optional nx/ny/nz. Binary PLY
/// and other layouts are rejected.
inline PointCloud read_ply(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.substr(0, 3) != "ply")
    throw std::runtime_error(path + ": not a PLY file");
  long vertex_count = -1;
  std::vector<std::string> props;
  bool in_vertex = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii")
        throw std::runtime_error(path + ": only ascii PLY is supported");
    } else if (tok == "element") {
      std::string name;
      long count;
      ls >> name >> count;
      in_vertex = (name == "vertex");
      if (in_vertex) vertex_count = count;
    } else if (tok == "property" && in_vertex) {
      std::string type, name;
      ls >> type >> name;
      props.push_back(name);
    } else if (tok == "end_header") {
      break;
    }
  }
  if (vertex_count < 1)
    throw std::runtime_error(path + ": missing vertex element");
  auto col = [&](const std::string& name) {
    for (std::size_t i = 0; i < props.size(); ++i)
      if (props[i] == name) return static_cast<int>(i);
    return -1;
  };
  const int cx = col("x"), cy = col("y"), cz = col("z");
  if (cx < 0 || cy < 0 || cz < 0)
    throw std::runtime_error(path + ": PLY lacks x/y/z properties");
  const int cnx = col("nx"), cny = col("ny"), cnz = col("nz");
  const bool has_normals = cnx >= 0 && cny >= 0 && cnz >= 0;
  PointCloud c;
  c.points.resize(vertex_count, 3);
  if (has_normals) c.normals.emplace(vertex_count, 3);
  std::vector<double> row(props.size());
  for (long i = 0; i < vertex_count; ++i) {
    if (!std::getline(in, line))
      throw std::runtime_error(path + ": truncated vertex list");
    std::istringstream ls(line);
    for (double& v : row)
      if (!(ls >> v))
        throw std::runtime_error(path + ": malformed vertex line " +
                                 std::to_string(i));
    c.points.row(i) << row[cx], row[cy], row[cz];
    if (has_normals) c.normals->row(i) << row[cnx], row[cny], row[cnz];
  }
  return c;
}

inline void write_ply(const PointCloud& cloud, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size() << '\n'
      << "property double x\nproperty double y\nproperty double z\n";
  if (cloud.normals)
    out << "property double nx\nproperty double ny\nproperty double nz\n";
  out << "end_header\n";
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    out << fmt_double(cloud.points(i, 0)) << ' '
        << fmt_double(cloud.points(i, 1)) << ' '
        << fmt_double(cloud.points(i, 2));
    if (cloud.normals)
      out << ' ' << fmt_double((*cloud.normals)(i, 0)) << ' '
          << fmt_double((*cloud.normals)(i, 1)) << ' '
          << fmt_double((*cloud.normals)(i, 2));
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

/// Dispatch on extension (.xyz/.txt vs .ply).
inline PointCloud read_point_cloud(const std::string& path) {
  const auto dot = path.rfind('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
  if (ext == ".ply") return read_ply(path);
  return read_xyz(path);
}

}  // namespace pcjscc
