#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "core/error.hpp"
#include "volcore/volume.hpp"

namespace ghc {

/// Indexed triangle surface in world millimetres.
struct TriMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> triangles;

  bool empty() const noexcept { return triangles.empty(); }
  Eigen::Vector3d normal(std::size_t t) const;  // unit, right-hand winding
  double area(std::size_t t) const;
  double surface_area() const;
  /// Divergence-theorem volume; positive when triangles face outward.
  double signed_volume() const;
  /// Every undirected edge used by exactly two triangles with opposite winding.
  bool watertight() const;
  void validate() const;
  /// Drops zero-area triangles and unreferenced vertices.
  void cleanup(double min_area = 1e-12);
  void translate(const Eigen::Vector3d& offset);
};

/// Merges vertices whose coordinates are bitwise equal.
TriMesh weld(const std::vector<std::array<Eigen::Vector3d, 3>>& soup);

void write_stl(const TriMesh& mesh, const std::string& path);
TriMesh read_stl(const std::string& path);

/// Geodesic sphere from a subdivided icosahedron; vertices lie exactly on the sphere.
TriMesh icosphere(const Eigen::Vector3d& center, double radius, int subdivisions);

}  // namespace ghc
