#pragma once

#include <vector>

#include <Eigen/Geometry>

#include "recon/mesh.hpp"

namespace ghc {

/// Closest point on triangle (a, b, c) to p.
Eigen::Vector3d closest_point_on_triangle(const Eigen::Vector3d& p, const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                                          const Eigen::Vector3d& c);

/// Axis-aligned bounding-volume hierarchy over a mesh's triangles for exact
/// nearest-surface queries. Holds a reference to the mesh.
class SurfaceIndex {
 public:
  explicit SurfaceIndex(const TriMesh& mesh);

  struct Hit {
    double distance = 0;
    Eigen::Vector3d point = Eigen::Vector3d::Zero();
    int triangle = -1;
  };
  Hit closest(const Eigen::Vector3d& p) const;
  /// Linear scan over every triangle; reference for `closest`.
  Hit closest_brute_force(const Eigen::Vector3d& p) const;

 private:
  struct Node {
    Eigen::AlignedBox3d box;
    int left = -1, right = -1;  // children, or -1 for a leaf
    int first = 0, count = 0;   // leaf range into order_
  };
  int build(int first, int count, std::vector<Eigen::Vector3d>& centroids);
  void test_triangle(int t, const Eigen::Vector3d& p, Hit& best, double& best2) const;

  const TriMesh& mesh_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

struct DistanceOptions {
  // Also sample triangle centroids, not only vertices.
  bool densify = false;
};

/// Distances from the sample points of `from` to the surface of `to`.
std::vector<double> directed_distances(const TriMesh& from, const TriMesh& to, const DistanceOptions& opts = {});

/// Symmetric RMSE over the samples of both meshes. Throws EmptyMesh.
double surface_rmse(const TriMesh& a, const TriMesh& b, const DistanceOptions& opts = {});
/// max of both directed maxima. Throws EmptyMesh.
double hausdorff(const TriMesh& a, const TriMesh& b, const DistanceOptions& opts = {});
/// Directed maximum from `morph` samples to the `cleared` surface.
double max_surface_distance(const TriMesh& morph, const TriMesh& cleared, const DistanceOptions& opts = {});

/// Osteophyte grade from the protrusion height: < 3 mm -> 0, [3, 7] -> 1,
/// > 7 -> 2. Throws InvalidDistance on negative or non-finite input.
int stage_os(double d_max_mm);

}  // namespace ghc
